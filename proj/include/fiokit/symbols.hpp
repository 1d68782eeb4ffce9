#pragma once

// Amplitudes u(x, y, q, p) with declared metadata, the built-in families, and
// a sampled estimator of the weighted derivative seminorms.

#include <json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fiokit/matrixcore.hpp"
#include "fiokit/symplectic.hpp"

namespace fiokit {

using SymbolFn = std::function<cplx(const RVec& x, const RVec& y, const RVec& q, const RVec& p)>;
using PairFn = std::function<cplx(const RVec&, const RVec&)>;

/// An amplitude plus what is known about it. When `qp` is set the symbol
/// factorises as xy(x, y) * qp(q, p) (xy == 1 when absent), which lets
/// kernels be assembled from rank-one pieces.
struct SymbolSpec {
  std::string name;
  int d = 1;
  SymbolFn eval;
  bool depends_on_xy = false;
  PairFn qp;
  PairFn xy;
  double sup_norm = std::numeric_limits<double>::infinity();
  std::optional<Box> support;  // in (q, p), R^{2d}
  std::vector<double> derivative_bounds;
  nlohmann::json params = nlohmann::json::object();

  cplx operator()(const RVec& x, const RVec& y, const RVec& q, const RVec& p) const { return eval(x, y, q, p); }
  bool separable() const { return static_cast<bool>(qp); }
  bool is_zero() const { return sup_norm == 0.0; }
};

namespace symbols {

inline SymbolSpec from_qp(std::string name, int d, PairFn qp, double sup) {
  SymbolSpec s;
  s.name = std::move(name);
  s.d = d;
  s.qp = qp;
  s.eval = [qp](const RVec&, const RVec&, const RVec& q, const RVec& p) { return qp(q, p); };
  s.sup_norm = sup;
  return s;
}

inline SymbolSpec from_factors(std::string name, int d, PairFn xy, PairFn qp, double sup) {
  SymbolSpec s;
  s.name = std::move(name);
  s.d = d;
  s.qp = qp;
  s.xy = xy;
  s.depends_on_xy = true;
  s.eval = [xy, qp](const RVec& x, const RVec& y, const RVec& q, const RVec& p) { return xy(x, y) * qp(q, p); };
  s.sup_norm = sup;
  return s;
}

inline SymbolSpec constant(int d, cplx c) {
  auto s = from_qp("constant", d, [c](const RVec&, const RVec&) { return c; }, std::abs(c));
  s.params = {{"value", {c.real(), c.imag()}}};
  s.derivative_bounds = {std::abs(c), 0.0, 0.0, 0.0, 0.0};
  return s;
}

inline RVec stack(const RVec& q, const RVec& p) {
  RVec z(q.size() + p.size());
  z << q, p;
  return z;
}

/// amp * exp(-|z - z0|^2 / s^2); support declared where it exceeds 1e-14 of its peak.
inline SymbolSpec gaussian(int d, cplx amp, const RVec& z0, double s) {
  if (z0.size() != 2 * d || !(s > 0.0)) throw InvalidArgument("gaussian symbol: bad center or width");
  auto u = from_qp("gaussian", d,
                   [amp, z0, s](const RVec& q, const RVec& p) {
                     return amp * std::exp(-(stack(q, p) - z0).squaredNorm() / (s * s));
                   },
                   std::abs(amp));
  const double r = 6.0 * s;
  u.support = Box{z0.array() - r, z0.array() + r};
  u.params = {{"amplitude", {amp.real(), amp.imag()}}, {"width", s}, {"feature_scale", s}};
  return u;
}

/// amp * q_1^k * exp(-|z|^2 / s^2).
inline SymbolSpec poly_gaussian(int d, cplx amp, int k, double s) {
  if (k < 0 || !(s > 0.0)) throw InvalidArgument("poly_gaussian symbol: bad power or width");
  const double peak = k == 0 ? 1.0 : std::pow(0.5 * k * s * s, 0.5 * k) * std::exp(-0.5 * k);
  auto u = from_qp("poly_gaussian", d,
                   [amp, k, s](const RVec& q, const RVec& p) {
                     return amp * std::pow(q(0), k) * std::exp(-(q.squaredNorm() + p.squaredNorm()) / (s * s));
                   },
                   std::abs(amp) * peak);
  const double r = (6.0 + 0.5 * k) * s;
  u.support = Box::symmetric(2 * d, r);
  u.params = {{"amplitude", {amp.real(), amp.imag()}}, {"power", k}, {"width", s}, {"feature_scale", s}};
  return u;
}

/// amp * exp(1 - 1/(1 - |z - z0|^2/r^2)) inside the ball of radius r, 0 outside.
inline SymbolSpec bump(int d, cplx amp, const RVec& z0, double r) {
  if (z0.size() != 2 * d || !(r > 0.0)) throw InvalidArgument("bump symbol: bad center or radius");
  auto u = from_qp("bump", d,
                   [amp, z0, r](const RVec& q, const RVec& p) {
                     const double t = (stack(q, p) - z0).squaredNorm() / (r * r);
                     return t < 1.0 ? amp * std::exp(1.0 - 1.0 / (1.0 - t)) : cplx(0.0);
                   },
                   std::abs(amp));
  u.support = Box{z0.array() - r, z0.array() + r};
  u.params = {{"amplitude", {amp.real(), amp.imag()}}, {"radius", r}, {"feature_scale", r}};
  return u;
}

/// <q>^{-mq} <p>^{-mp}.
inline SymbolSpec decaying(int d, double mq, double mp) {
  auto u = from_qp("decaying", d,
                   [mq, mp](const RVec& q, const RVec& p) {
                     return cplx(std::pow(1.0 + q.squaredNorm(), -0.5 * mq) * std::pow(1.0 + p.squaredNorm(), -0.5 * mp));
                   },
                   1.0);
  u.params = {{"mq", mq}, {"mp", mp}};
  return u;
}

/// e^{i (w . z + phase)}: unimodular, sup norm exactly 1.
inline SymbolSpec plane_wave(int d, const RVec& w, double phase) {
  if (w.size() != 2 * d) throw InvalidArgument("plane_wave symbol: frequency must live in R^{2d}");
  auto u = from_qp("plane_wave", d,
                   [w, phase](const RVec& q, const RVec& p) { return std::polar(1.0, w.dot(stack(q, p)) + phase); },
                   1.0);
  u.params = {{"phase", phase}};
  if (w.norm() > 0) u.params["feature_scale"] = 2 * kPi / w.norm();
  return u;
}

/// 1 / (1 + |x|^2 + |y|^2).
inline SymbolSpec xy_lorentz(int d) {
  auto u = from_factors("xy_lorentz", d,
                        [](const RVec& x, const RVec& y) { return cplx(1.0 / (1.0 + x.squaredNorm() + y.squaredNorm())); },
                        [](const RVec&, const RVec&) { return cplx(1.0); }, 1.0);
  return u;
}

/// sin(x_1) exp(-|q|^2 - |p|^2).
inline SymbolSpec sin_x_gaussian(int d) {
  auto u = from_factors("sin_x_gaussian", d, [](const RVec& x, const RVec&) { return cplx(std::sin(x(0))); },
                        [](const RVec& q, const RVec& p) { return cplx(std::exp(-q.squaredNorm() - p.squaredNorm())); },
                        1.0);
  u.support = Box::symmetric(2 * d, 6.0);
  u.params = {{"feature_scale", 1.0}};
  return u;
}

/// t * u.
inline SymbolSpec scaled(const SymbolSpec& u, cplx t) {
  SymbolSpec s = u;
  s.name = u.name;
  auto f = u.eval;
  s.eval = [f, t](const RVec& x, const RVec& y, const RVec& q, const RVec& p) { return t * f(x, y, q, p); };
  if (u.qp) {
    auto g = u.qp;
    s.qp = [g, t](const RVec& q, const RVec& p) { return t * g(q, p); };
  }
  s.sup_norm = std::abs(t) * u.sup_norm;
  for (auto& b : s.derivative_bounds) b *= std::abs(t);
  return s;
}

/// u(sqrt(eps) x, sqrt(eps) y, sqrt(eps) q, sqrt(eps) p).
inline SymbolSpec dilated(const SymbolSpec& u, double eps) {
  const double r = std::sqrt(eps);
  SymbolSpec s = u;
  auto f = u.eval;
  s.eval = [f, r](const RVec& x, const RVec& y, const RVec& q, const RVec& p) { return f(r * x, r * y, r * q, r * p); };
  if (u.qp) {
    auto g = u.qp;
    s.qp = [g, r](const RVec& q, const RVec& p) { return g(r * q, r * p); };
  }
  if (u.xy) {
    auto g = u.xy;
    s.xy = [g, r](const RVec& x, const RVec& y) { return g(r * x, r * y); };
  }
  if (u.support) s.support = Box{u.support->lo / r, u.support->hi / r};
  if (u.params.contains("feature_scale")) s.params["feature_scale"] = u.params["feature_scale"].get<double>() / r;
  s.derivative_bounds.clear();
  return s;
}

}  // namespace symbols

// ---------------------------------------------------------------------------
// Seminorm estimation

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

inline void multi_indices(int vars, int order, std::vector<int>& cur, int pos, std::vector<std::vector<int>>& out) {
  if (pos == vars - 1) {
    cur[pos] = order;
    out.push_back(cur);
    return;
  }
  for (int a = order; a >= 0; --a) {
    cur[pos] = a;
    multi_indices(vars, order - a, cur, pos + 1, out);
  }
}

}  // namespace detail

/// Sampled max over `region` (a box in R^{4d}, coordinates ordered x, y, q,
/// p) of |d^alpha u| prod_j <z_j>^{-m_j} over multi-indices with |alpha| = k.
/// Derivatives are tensor-product central differences; the result is a lower
/// estimate of the true seminorm. Axes with lo == hi are sampled once.
inline double symbol_seminorm(const SymbolSpec& u, int k, const RVec& m, const Box& region,
                              int samples_per_axis = 21) {
  const int d = u.d;
  const int nv = 4 * d;
  if (k < 0 || k > 4) throw InvalidArgument("symbol_seminorm: order must be in 0..4");
  if (m.size() != nv || region.dim() != nv) throw InvalidArgument("symbol_seminorm: weights and region live in R^{4d}");
  if (samples_per_axis < 2) throw InvalidArgument("symbol_seminorm: need at least 2 samples per axis");
  static constexpr double kStep[5] = {0.0, 1e-5, 1e-4, 6e-4, 2e-3};
  std::vector<std::vector<int>> alphas;
  std::vector<int> cur(nv, 0);
  detail::multi_indices(nv, k, cur, 0, alphas);

  auto value = [&](const RVec& z) {
    return u(z.segment(0, d), z.segment(d, d), z.segment(2 * d, d), z.segment(3 * d, d));
  };

  std::vector<int> counts(nv);
  std::size_t total = 1;
  for (int j = 0; j < nv; ++j) {
    counts[j] = region.hi(j) > region.lo(j) ? samples_per_axis : 1;
    total *= static_cast<std::size_t>(counts[j]);
  }
  double best = 0.0;
  std::vector<int> idx(nv, 0);
  RVec z(nv);
  for (std::size_t s = 0; s < total; ++s) {
    for (int j = 0; j < nv; ++j)
      z(j) = counts[j] == 1 ? region.lo(j)
                            : region.lo(j) + (region.hi(j) - region.lo(j)) * idx[j] / (counts[j] - 1);
    double weight = 1.0;
    for (int j = 0; j < nv; ++j) weight *= std::pow(1.0 + z(j) * z(j), -0.5 * m(j));
    for (const auto& a : alphas) {
      // Stencil offsets per axis: (a_j/2 - i) h_j, coefficient (-1)^i C(a_j, i) / h_j^{a_j}.
      std::vector<int> axes;
      for (int j = 0; j < nv; ++j)
        if (a[j] > 0) axes.push_back(j);
      std::vector<int> off(axes.size(), 0);
      cplx acc = 0.0;
      while (true) {
        RVec w = z;
        double coef = 1.0;
        for (std::size_t t = 0; t < axes.size(); ++t) {
          const int j = axes[t];
          const double h = kStep[k] * std::max(1.0, std::abs(z(j)));
          w(j) += (0.5 * a[j] - off[t]) * h;
          coef *= ((off[t] % 2) ? -1.0 : 1.0) * detail::binomial(a[j], off[t]) / std::pow(h, a[j]);
        }
        acc += coef * value(w);
        std::size_t t = 0;
        for (; t < axes.size(); ++t) {
          if (++off[t] <= a[axes[t]]) break;
          off[t] = 0;
        }
        if (t == axes.size()) break;
      }
      best = std::max(best, std::abs(acc) * weight);
    }
    for (int j = nv - 1; j >= 0; --j) {
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
    }
  }
  return best;
}

}  // namespace fiokit
