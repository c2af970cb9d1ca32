#pragma once

// Symmetric-cone primitives for the interior point solver: nonnegative
// orthant and second-order cones, Nesterov-Todd scaling, Jordan algebra.

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace ces::convex::detail {

using Vec = Eigen::VectorXd;

struct SocBlock {
  std::size_t offset;
  std::size_t dim;
  // NT scaling point w (w0^2 - |w1|^2 = 1) and scale eta.
  Vec w;
  double eta = 1.0;
};

class ConeSet {
 public:
  ConeSet(std::size_t num_linear, const std::vector<std::size_t>& soc_dims);

  std::size_t size() const { return size_; }
  std::size_t num_linear() const { return num_linear_; }
  const std::vector<SocBlock>& socs() const { return socs_; }
  // Number of cones counted with their degree.
  double degree() const { return static_cast<double>(num_linear_ + socs_.size()); }

  // e: identity element of the Jordan algebra.
  Vec identity() const;

  // Smallest Jordan eigenvalue across all blocks.
  double min_eigenvalue(const Vec& u) const;

  // Computes NT scaling from strictly interior s, z and returns lambda = W z.
  void update_scaling(const Vec& s, const Vec& z, Vec& lambda);

  // Applies W (symmetric) or its inverse from the last update_scaling call.
  Vec apply_w(const Vec& v) const;
  Vec apply_w_inv(const Vec& v) const;

  // Appends lower-triangular entries of W'W (nonneg: diagonal; soc: dense
  // block) into (row, col, value) triplets with the given row/col offset.
  template <typename Fn>
  void for_each_wtw(Fn&& emit) const;

  Vec jordan_product(const Vec& u, const Vec& v) const;
  // Solves lambda o x = r for x.
  Vec jordan_divide(const Vec& lambda, const Vec& r) const;

  // Largest alpha with u + alpha du in the cone (capped at cap).
  double max_step(const Vec& u, const Vec& du, double cap) const;

  // W'W v (used for KKT products).
  Vec apply_wtw(const Vec& v) const;

 private:
  std::size_t num_linear_;
  std::size_t size_;
  std::vector<SocBlock> socs_;
  Vec lin_w_;  // sqrt(s/z) on the orthant
};

template <typename Fn>
void ConeSet::for_each_wtw(Fn&& emit) const {
  for (std::size_t i = 0; i < num_linear_; ++i) {
    emit(i, i, lin_w_[static_cast<Eigen::Index>(i)] * lin_w_[static_cast<Eigen::Index>(i)]);
  }
  for (const auto& b : socs_) {
    double eta2 = b.eta * b.eta;
    for (std::size_t c = 0; c < b.dim; ++c) {
      for (std::size_t r = c; r < b.dim; ++r) {
        double v = 2.0 * b.w[static_cast<Eigen::Index>(r)] * b.w[static_cast<Eigen::Index>(c)];
        if (r == c) v += (r == 0) ? -1.0 : 1.0;
        emit(b.offset + r, b.offset + c, eta2 * v);
      }
    }
  }
}

}  // namespace ces::convex::detail
