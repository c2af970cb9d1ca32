#include "cones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ces::convex::detail {

namespace {

using Eigen::Index;

inline Index ix(std::size_t i) { return static_cast<Index>(i); }

}  // namespace

ConeSet::ConeSet(std::size_t num_linear, const std::vector<std::size_t>& soc_dims)
    : num_linear_(num_linear), size_(num_linear), lin_w_(Vec::Ones(ix(num_linear))) {
  for (std::size_t d : soc_dims) {
    SocBlock b{size_, d, Vec::Zero(ix(d)), 1.0};
    b.w[0] = 1.0;
    socs_.push_back(std::move(b));
    size_ += d;
  }
}

Vec ConeSet::identity() const {
  Vec e = Vec::Zero(ix(size_));
  e.head(ix(num_linear_)).setOnes();
  for (const auto& b : socs_) e[ix(b.offset)] = 1.0;
  return e;
}

double ConeSet::min_eigenvalue(const Vec& u) const {
  double m = std::numeric_limits<double>::infinity();
  if (num_linear_ > 0) m = u.head(ix(num_linear_)).minCoeff();
  for (const auto& b : socs_) {
    auto blk = u.segment(ix(b.offset), ix(b.dim));
    double tail = blk.tail(ix(b.dim - 1)).norm();
    m = std::min(m, blk[0] - tail);
  }
  return m;
}

void ConeSet::update_scaling(const Vec& s, const Vec& z, Vec& lambda) {
  lambda.resize(ix(size_));
  for (std::size_t i = 0; i < num_linear_; ++i) {
    lin_w_[ix(i)] = std::sqrt(s[ix(i)] / z[ix(i)]);
    lambda[ix(i)] = std::sqrt(s[ix(i)] * z[ix(i)]);
  }
  for (auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    Vec sb = s.segment(off, dim);
    Vec zb = z.segment(off, dim);
    double s_res = sb[0] * sb[0] - sb.tail(dim - 1).squaredNorm();
    double z_res = zb[0] * zb[0] - zb.tail(dim - 1).squaredNorm();
    s_res = std::max(s_res, std::numeric_limits<double>::min());
    z_res = std::max(z_res, std::numeric_limits<double>::min());
    Vec sbar = sb / std::sqrt(s_res);
    Vec zbar = zb / std::sqrt(z_res);
    double gamma = std::sqrt(std::max(0.5 * (1.0 + sbar.dot(zbar)), 0.0));
    b.w = sbar;
    b.w[0] += zbar[0];
    b.w.tail(dim - 1) -= zbar.tail(dim - 1);
    b.w /= 2.0 * gamma;
    b.eta = std::pow(s_res / z_res, 0.25);
  }
  // lambda = W z for the soc part.
  Vec wz = apply_w(z);
  for (const auto& b : socs_) {
    lambda.segment(ix(b.offset), ix(b.dim)) = wz.segment(ix(b.offset), ix(b.dim));
  }
}

Vec ConeSet::apply_w(const Vec& v) const {
  Vec out(ix(size_));
  out.head(ix(num_linear_)) = lin_w_.cwiseProduct(v.head(ix(num_linear_)));
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto vb = v.segment(off, dim);
    const double w0 = b.w[0];
    const auto w1 = b.w.tail(dim - 1);
    double w1v1 = w1.dot(vb.tail(dim - 1));
    out[off] = b.eta * (w0 * vb[0] + w1v1);
    out.segment(off + 1, dim - 1) =
        b.eta * (vb.tail(dim - 1) + (w1v1 / (1.0 + w0) + vb[0]) * w1);
  }
  return out;
}

Vec ConeSet::apply_w_inv(const Vec& v) const {
  Vec out(ix(size_));
  out.head(ix(num_linear_)) = v.head(ix(num_linear_)).cwiseQuotient(lin_w_);
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto vb = v.segment(off, dim);
    const double w0 = b.w[0];
    const auto w1 = b.w.tail(dim - 1);
    double w1v1 = w1.dot(vb.tail(dim - 1));
    out[off] = (w0 * vb[0] - w1v1) / b.eta;
    out.segment(off + 1, dim - 1) =
        (vb.tail(dim - 1) + (w1v1 / (1.0 + w0) - vb[0]) * w1) / b.eta;
  }
  return out;
}

Vec ConeSet::apply_wtw(const Vec& v) const {
  Vec out(ix(size_));
  out.head(ix(num_linear_)) =
      lin_w_.cwiseProduct(lin_w_).cwiseProduct(v.head(ix(num_linear_)));
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto vb = v.segment(off, dim);
    double wv = b.w.dot(vb);
    Vec r = 2.0 * wv * b.w;
    r[0] -= vb[0];
    r.tail(dim - 1) += vb.tail(dim - 1);
    out.segment(off, dim) = b.eta * b.eta * r;
  }
  return out;
}

Vec ConeSet::jordan_product(const Vec& u, const Vec& v) const {
  Vec out(ix(size_));
  out.head(ix(num_linear_)) = u.head(ix(num_linear_)).cwiseProduct(v.head(ix(num_linear_)));
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto ub = u.segment(off, dim);
    const auto vb = v.segment(off, dim);
    out[off] = ub.dot(vb);
    out.segment(off + 1, dim - 1) = ub[0] * vb.tail(dim - 1) + vb[0] * ub.tail(dim - 1);
  }
  return out;
}

Vec ConeSet::jordan_divide(const Vec& lambda, const Vec& r) const {
  Vec out(ix(size_));
  out.head(ix(num_linear_)) = r.head(ix(num_linear_)).cwiseQuotient(lambda.head(ix(num_linear_)));
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto lb = lambda.segment(off, dim);
    const auto rb = r.segment(off, dim);
    double l0 = lb[0];
    const auto l1 = lb.tail(dim - 1);
    double det = l0 * l0 - l1.squaredNorm();
    double u0 = (l0 * rb[0] - l1.dot(rb.tail(dim - 1))) / det;
    out[off] = u0;
    out.segment(off + 1, dim - 1) = (rb.tail(dim - 1) - u0 * l1) / l0;
  }
  return out;
}

double ConeSet::max_step(const Vec& u, const Vec& du, double cap) const {
  double alpha = cap;
  for (std::size_t i = 0; i < num_linear_; ++i) {
    if (du[ix(i)] < 0.0) alpha = std::min(alpha, -u[ix(i)] / du[ix(i)]);
  }
  for (const auto& b : socs_) {
    const Index off = ix(b.offset), dim = ix(b.dim);
    const auto ub = u.segment(off, dim);
    const auto db = du.segment(off, dim);
    if (db[0] < 0.0) alpha = std::min(alpha, -ub[0] / db[0]);
    double a = db[0] * db[0] - db.tail(dim - 1).squaredNorm();
    double bq = ub[0] * db[0] - ub.tail(dim - 1).dot(db.tail(dim - 1));
    double c = std::max(ub[0] * ub[0] - ub.tail(dim - 1).squaredNorm(), 0.0);
    double disc = bq * bq - a * c;
    if (a < 0.0 || (bq < 0.0 && disc >= 0.0)) {
      double root = c / (-bq + std::sqrt(std::max(disc, 0.0)));
      if (std::isfinite(root)) alpha = std::min(alpha, root);
    }
  }
  return std::max(alpha, 0.0);
}

}  // namespace ces::convex::detail
