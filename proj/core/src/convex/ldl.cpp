#include "ldl.hpp"

#include <Eigen/OrderingMethods>
#include <cmath>

#include "ces/common/error.hpp"

namespace ces::convex::detail {

void QuasiDefiniteLdl::factor(const SpMat& lower, const std::vector<int>& signs, double eps, double delta) {
  const int n = static_cast<int>(lower.rows());
  if (!ordered_ || n != n_) {
    SpMat full = lower.selfadjointView<Eigen::Lower>();
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(full, pinv);
    perm_ = pinv.inverse();
    ordered_ = true;
    n_ = n;
  }
  // Upper triangle of P K P' in compressed column form.
  SpMat permuted(n, n);
  permuted = lower.selfadjointView<Eigen::Lower>().twistedBy(perm_);
  SpMat upper = permuted.triangularView<Eigen::Upper>();
  upper.makeCompressed();
  const int* ap = upper.outerIndexPtr();
  const int* ai = upper.innerIndexPtr();
  const double* ax = upper.valuePtr();

  std::vector<int> sign(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sign[static_cast<std::size_t>(perm_.indices()[i])] = signs[static_cast<std::size_t>(i)];

  // Elimination tree and column counts.
  std::vector<int> work(static_cast<std::size_t>(n), -1);
  etree_.assign(static_cast<std::size_t>(n), -1);
  lnz_.assign(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    work[static_cast<std::size_t>(j)] = j;
    for (int p = ap[j]; p < ap[j + 1]; ++p) {
      int i = ai[p];
      while (i != j && work[static_cast<std::size_t>(i)] != j) {
        if (etree_[static_cast<std::size_t>(i)] == -1) etree_[static_cast<std::size_t>(i)] = j;
        ++lnz_[static_cast<std::size_t>(i)];
        work[static_cast<std::size_t>(i)] = j;
        i = etree_[static_cast<std::size_t>(i)];
      }
    }
  }
  lp_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) lp_[static_cast<std::size_t>(i) + 1] = lp_[static_cast<std::size_t>(i)] + lnz_[static_cast<std::size_t>(i)];
  li_.assign(static_cast<std::size_t>(lp_.back()), 0);
  lx_.assign(static_cast<std::size_t>(lp_.back()), 0.0);
  d_inv_.assign(static_cast<std::size_t>(n), 0.0);

  // Up-looking numeric factorization.
  std::vector<char> marked(static_cast<std::size_t>(n), 0);
  std::vector<int> y_idx(static_cast<std::size_t>(n)), stack(static_cast<std::size_t>(n));
  std::vector<int> next(lp_.begin(), lp_.end() - 1);
  std::vector<double> y(static_cast<std::size_t>(n), 0.0);
  regularized_ = 0;
  for (int k = 0; k < n; ++k) {
    double dk = 0.0;
    int nnz_y = 0;
    for (int p = ap[k]; p < ap[k + 1]; ++p) {
      const int b = ai[p];
      if (b == k) {
        dk = ax[p];
        continue;
      }
      y[static_cast<std::size_t>(b)] = ax[p];
      if (marked[static_cast<std::size_t>(b)]) continue;
      int depth = 0;
      for (int i = b; i != -1 && i < k && !marked[static_cast<std::size_t>(i)]; i = etree_[static_cast<std::size_t>(i)]) {
        marked[static_cast<std::size_t>(i)] = 1;
        stack[static_cast<std::size_t>(depth++)] = i;
      }
      while (depth) y_idx[static_cast<std::size_t>(nnz_y++)] = stack[static_cast<std::size_t>(--depth)];
    }
    for (int t = nnz_y - 1; t >= 0; --t) {
      const auto c = static_cast<std::size_t>(y_idx[static_cast<std::size_t>(t)]);
      const double yc = y[c];
      for (int j = lp_[c]; j < next[c]; ++j) y[static_cast<std::size_t>(li_[static_cast<std::size_t>(j)])] -= lx_[static_cast<std::size_t>(j)] * yc;
      const auto slot = static_cast<std::size_t>(next[c]++);
      li_[slot] = k;
      lx_[slot] = yc * d_inv_[c];
      dk -= yc * lx_[slot];
      y[c] = 0.0;
      marked[c] = 0;
    }
    const int s = sign[static_cast<std::size_t>(k)];
    if (std::abs(dk) <= eps) {
      dk = s * delta;
      ++regularized_;
    }
    d_inv_[static_cast<std::size_t>(k)] = 1.0 / dk;
  }
}

Eigen::VectorXd QuasiDefiniteLdl::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x = perm_ * rhs;
  for (int i = 0; i < n_; ++i) {
    const double xi = x[i];
    for (int j = lp_[static_cast<std::size_t>(i)]; j < lp_[static_cast<std::size_t>(i) + 1]; ++j) {
      x[li_[static_cast<std::size_t>(j)]] -= lx_[static_cast<std::size_t>(j)] * xi;
    }
  }
  for (int i = 0; i < n_; ++i) x[i] *= d_inv_[static_cast<std::size_t>(i)];
  for (int i = n_ - 1; i >= 0; --i) {
    double xi = x[i];
    for (int j = lp_[static_cast<std::size_t>(i)]; j < lp_[static_cast<std::size_t>(i) + 1]; ++j) {
      xi -= lx_[static_cast<std::size_t>(j)] * x[li_[static_cast<std::size_t>(j)]];
    }
    x[i] = xi;
  }
  return perm_.inverse() * x;
}

}  // namespace ces::convex::detail
