#pragma once

// Uniform tensor grids in R^d and on phase space, sampled functions on them,
// and their JSON container format.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fiokit/matrixcore.hpp"
#include "fiokit/symplectic.hpp"

namespace fiokit {

/// Nodes lo_k + i h_k, i = 0..n_k-1, h_k = (hi_k - lo_k)/(n_k - 1). Flat
/// indices are row-major (last axis fastest).
class GridLayout {
 public:
  GridLayout() = default;
  GridLayout(RVec lo, RVec hi, Eigen::VectorXi n) : lo_(std::move(lo)), hi_(std::move(hi)), n_(std::move(n)) {
    if (lo_.size() == 0 || lo_.size() != hi_.size() || lo_.size() != n_.size())
      throw InvalidArgument("grid: lo, hi and n must share a positive dimension");
    for (int k = 0; k < dim(); ++k) {
      if (n_(k) < 2) throw InvalidArgument("grid: need at least 2 points per axis");
      if (!(hi_(k) > lo_(k)) || !std::isfinite(lo_(k)) || !std::isfinite(hi_(k)))
        throw InvalidArgument("grid: empty or non-finite box");
    }
    strides_.assign(dim(), 1);
    for (int k = dim() - 2; k >= 0; --k) strides_[k] = strides_[k + 1] * static_cast<std::size_t>(n_(k + 1));
  }

  static GridLayout cube(int d, double lo, double hi, int n) {
    return GridLayout(RVec::Constant(d, lo), RVec::Constant(d, hi), Eigen::VectorXi::Constant(d, n));
  }

  int dim() const { return static_cast<int>(lo_.size()); }
  const RVec& lo() const { return lo_; }
  const RVec& hi() const { return hi_; }
  const Eigen::VectorXi& n() const { return n_; }
  int n(int k) const { return n_(k); }
  double spacing(int k) const { return (hi_(k) - lo_(k)) / (n_(k) - 1); }
  double max_spacing() const {
    double h = 0.0;
    for (int k = 0; k < dim(); ++k) h = std::max(h, spacing(k));
    return h;
  }
  double coord(int k, int i) const { return lo_(k) + i * spacing(k); }
  double weight() const {
    double w = 1.0;
    for (int k = 0; k < dim(); ++k) w *= spacing(k);
    return w;
  }
  std::size_t size() const { return dim() == 0 ? 0 : strides_[0] * static_cast<std::size_t>(n_(0)); }
  std::size_t stride(int k) const { return strides_[k]; }

  RVec axis(int k) const { return RVec::LinSpaced(n_(k), lo_(k), hi_(k)); }

  std::vector<int> multi_index(std::size_t flat) const {
    std::vector<int> idx(dim());
    for (int k = 0; k < dim(); ++k) {
      idx[k] = static_cast<int>(flat / strides_[k]);
      flat %= strides_[k];
    }
    return idx;
  }

  RVec node(std::size_t flat) const {
    RVec x(dim());
    for (int k = 0; k < dim(); ++k) {
      x(k) = coord(k, static_cast<int>(flat / strides_[k]));
      flat %= strides_[k];
    }
    return x;
  }

  /// Index range [first, last] on axis k of nodes within distance r of c;
  /// empty when first > last.
  std::pair<int, int> window(int k, double c, double r) const {
    const double h = spacing(k);
    const int a = std::max(0, static_cast<int>(std::ceil((c - r - lo_(k)) / h - 1e-12)));
    const int b = std::min(n_(k) - 1, static_cast<int>(std::floor((c + r - lo_(k)) / h + 1e-12)));
    return {a, b};
  }

  /// Same grid with every node multiplied by s.
  GridLayout scaled(double s) const {
    if (!(s > 0.0)) throw InvalidArgument("grid: scale must be positive");
    return GridLayout(lo_ * s, hi_ * s, n_);
  }

  /// Refined grid containing every old node: n -> factor (n - 1) + 1.
  GridLayout refined(int factor) const {
    Eigen::VectorXi m = (n_.array() - 1) * factor + 1;
    return GridLayout(lo_, hi_, m);
  }

  bool same_as(const GridLayout& o, double rtol = 1e-12) const {
    if (dim() != o.dim() || n_ != o.n_) return false;
    const double scale = 1.0 + std::max(lo_.cwiseAbs().maxCoeff(), hi_.cwiseAbs().maxCoeff());
    return (lo_ - o.lo_).cwiseAbs().maxCoeff() <= rtol * scale &&
           (hi_ - o.hi_).cwiseAbs().maxCoeff() <= rtol * scale;
  }

 private:
  RVec lo_, hi_;
  Eigen::VectorXi n_;
  std::vector<std::size_t> strides_;
};

struct GridFunction {
  GridLayout layout;
  CVec values;

  GridFunction() = default;
  GridFunction(GridLayout l, CVec v) : layout(std::move(l)), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != layout.size())
      throw InvalidArgument("grid function: value count does not match grid");
  }
  static GridFunction zeros(const GridLayout& l) {
    return GridFunction(l, CVec::Zero(static_cast<Eigen::Index>(l.size())));
  }

  double norm() const { return std::sqrt(values.squaredNorm() * layout.weight()); }
  cplx inner(const GridFunction& other) const { return values.dot(other.values) * layout.weight(); }
};

inline GridFunction sample(const GridLayout& layout, const std::function<cplx(const RVec&)>& f) {
  CVec v(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) v(static_cast<Eigen::Index>(i)) = f(layout.node(i));
  return GridFunction(layout, std::move(v));
}

/// Product grid q x p. Flat index iq * p.size() + ip.
struct PhaseSpaceLayout {
  GridLayout q;
  GridLayout p;

  int dim() const { return q.dim(); }
  std::size_t size() const { return q.size() * p.size(); }
  double weight() const { return q.weight() * p.weight(); }
  PhasePoint node(std::size_t flat) const { return {q.node(flat / p.size()), p.node(flat % p.size())}; }
  double p_max() const {
    return std::max(p.lo().cwiseAbs().maxCoeff(), p.hi().cwiseAbs().maxCoeff());
  }
  PhaseSpaceLayout scaled(double s) const { return {q.scaled(s), p.scaled(s)}; }
  PhaseSpaceLayout refined(int factor) const { return {q.refined(factor), p.refined(factor)}; }
  Box box() const {
    RVec lo(2 * dim()), hi(2 * dim());
    lo << q.lo(), p.lo();
    hi << q.hi(), p.hi();
    return {lo, hi};
  }
};

struct PhaseSpaceField {
  PhaseSpaceLayout layout;
  CVec values;

  PhaseSpaceField() = default;
  PhaseSpaceField(PhaseSpaceLayout l, CVec v) : layout(std::move(l)), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != layout.size())
      throw InvalidArgument("phase-space field: value count does not match grid");
  }
  static PhaseSpaceField zeros(const PhaseSpaceLayout& l) {
    return PhaseSpaceField(l, CVec::Zero(static_cast<Eigen::Index>(l.size())));
  }
  double norm() const { return std::sqrt(values.squaredNorm() * layout.weight()); }
};

/// Smallest box holding every node where |f| exceeds rel_tol * max |f|.
inline Box estimate_support(const GridFunction& f, double rel_tol = 1e-14) {
  const int d = f.layout.dim();
  const double cut = rel_tol * f.values.cwiseAbs().maxCoeff();
  Box b{RVec::Constant(d, INFINITY), RVec::Constant(d, -INFINITY)};
  for (std::size_t i = 0; i < f.layout.size(); ++i) {
    if (std::abs(f.values(static_cast<Eigen::Index>(i))) <= cut) continue;
    const RVec x = f.layout.node(i);
    b.lo = b.lo.cwiseMin(x);
    b.hi = b.hi.cwiseMax(x);
  }
  return b;
}

// ---------------------------------------------------------------------------
// JSON container: dimensions, boxes and interleaved re/im values.

namespace detail {

inline nlohmann::json to_json_vec(const RVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline RVec vec_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<RVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json layout_json(const GridLayout& g) {
  std::vector<int> n(g.n().data(), g.n().data() + g.dim());
  return {{"lo", to_json_vec(g.lo())}, {"hi", to_json_vec(g.hi())}, {"n", n}};
}

inline GridLayout layout_from_json(const nlohmann::json& j) {
  auto n = j.at("n").get<std::vector<int>>();
  return GridLayout(vec_from_json(j.at("lo")), vec_from_json(j.at("hi")),
                    Eigen::Map<Eigen::VectorXi>(n.data(), static_cast<Eigen::Index>(n.size())));
}

inline nlohmann::json values_json(const CVec& v) {
  std::vector<double> out;
  out.reserve(2 * static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(v(i).real());
    out.push_back(v(i).imag());
  }
  return out;
}

inline CVec values_from_json(const nlohmann::json& j) {
  auto raw = j.get<std::vector<double>>();
  if (raw.size() % 2 != 0) throw InvalidArgument("values must be interleaved re/im pairs");
  CVec v(static_cast<Eigen::Index>(raw.size() / 2));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = {raw[2 * i], raw[2 * i + 1]};
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const GridFunction& f) {
  return {{"type", "GridFunction"}, {"d", f.layout.dim()}, {"grid", detail::layout_json(f.layout)},
          {"values", detail::values_json(f.values)}};
}

inline nlohmann::json to_json(const PhaseSpaceField& f) {
  return {{"type", "PhaseSpaceField"},
          {"d", f.layout.dim()},
          {"q", detail::layout_json(f.layout.q)},
          {"p", detail::layout_json(f.layout.p)},
          {"values", detail::values_json(f.values)}};
}

inline GridFunction grid_function_from_json(const nlohmann::json& j) {
  if (j.value("type", "") != "GridFunction") throw InvalidArgument("not a GridFunction container");
  return GridFunction(detail::layout_from_json(j.at("grid")), detail::values_from_json(j.at("values")));
}

inline PhaseSpaceField phase_space_field_from_json(const nlohmann::json& j) {
  if (j.value("type", "") != "PhaseSpaceField") throw InvalidArgument("not a PhaseSpaceField container");
  return PhaseSpaceField({detail::layout_from_json(j.at("q")), detail::layout_from_json(j.at("p"))},
                         detail::values_from_json(j.at("values")));
}

}  // namespace fiokit
