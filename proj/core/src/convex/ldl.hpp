#pragma once

// Sparse LDL' for quasi-definite matrices with known pivot signs. Pivots
// whose magnitude falls below `eps` are replaced by sign * delta, so the
// factorization never breaks down. Wrong-sign pivots from cancellation are
// kept: flipping them wrecks the factor once W'W spans many decades.

#include <Eigen/Sparse>
#include <vector>

namespace ces::convex::detail {

class QuasiDefiniteLdl {
 public:
  using SpMat = Eigen::SparseMatrix<double>;

  // `lower` holds the lower triangle (diagonal included) of the symmetric
  // matrix; `signs` is +1 / -1 per row. The ordering is computed once from
  // the first pattern and reused.
  void factor(const SpMat& lower, const std::vector<int>& signs, double eps, double delta);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  int regularized_pivots() const { return regularized_; }

 private:
  bool ordered_ = false;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;
  std::vector<int> lp_, li_, etree_, lnz_;
  std::vector<double> lx_, d_inv_;
  int n_ = 0;
  int regularized_ = 0;
};

}  // namespace ces::convex::detail
