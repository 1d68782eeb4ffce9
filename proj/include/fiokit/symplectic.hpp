#pragma once

// Canonical transformations with Jacobians and actions, Hamiltonian flows,
// and the composition / inversion algebra.
//
// Every map returns, at a phase-space point z = (q, p), the image
// (X, Xi), the Jacobian F (block layout documented in matrixcore.hpp) and an
// action S normalised so that
//
//     dS = Xi . dX - p . dq,
//
// i.e. S_q = -p + A^T Xi and S_p = B^T Xi.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fiokit/matrixcore.hpp"

namespace fiokit {

struct PhasePoint {
  RVec q;
  RVec p;

  PhasePoint() = default;
  PhasePoint(RVec q_, RVec p_) : q(std::move(q_)), p(std::move(p_)) {
    if (q.size() != p.size()) throw InvalidArgument("phase point: q and p differ in dimension");
  }

  int dim() const { return static_cast<int>(q.size()); }
  bool finite() const { return q.allFinite() && p.allFinite(); }

  RVec stacked() const {
    RVec z(2 * q.size());
    z << q, p;
    return z;
  }
  static PhasePoint from_stacked(const RVec& z) {
    const Eigen::Index d = z.size() / 2;
    return {z.head(d), z.tail(d)};
  }
};

struct MapValue {
  PhasePoint image;
  RMat F;
  double S = 0.0;
};

/// Axis-aligned box [lo, hi] in R^n.
struct Box {
  RVec lo;
  RVec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  RVec center() const { return 0.5 * (lo + hi); }
  RVec half_width() const { return 0.5 * (hi - lo); }
  bool contains(const RVec& z) const {
    return (z.array() >= lo.array()).all() && (z.array() <= hi.array()).all();
  }
  static Box symmetric(int n, double r) {
    return {RVec::Constant(n, -r), RVec::Constant(n, r)};
  }
};

// ---------------------------------------------------------------------------
// Hamiltonians

/// A real function of one d-vector with gradient and Hessian.
struct ScalarField {
  std::function<double(const RVec&)> value;
  std::function<RVec(const RVec&)> grad;
  std::function<RMat(const RVec&)> hess;
};

/// Hamiltonian with bounded Hessian. When `kinetic` and `potential` are both
/// set, h(q, p) = T(p) + V(q) and flows use the splitting integrator;
/// otherwise flows use implicit midpoint steps on the full h.
struct SubquadraticHamiltonian {
  std::string name;
  int d = 1;
  std::optional<ScalarField> kinetic;
  std::optional<ScalarField> potential;
  std::function<double(const RVec&, const RVec&)> value;
  std::function<RVec(const RVec&, const RVec&)> grad;  // (h_q, h_p)
  std::function<RMat(const RVec&, const RVec&)> hess;  // 2d x 2d, q block first
  double hessian_bound = 0.0;

  bool separable() const { return kinetic.has_value() && potential.has_value(); }
};

inline SubquadraticHamiltonian make_separable(std::string name, int d, ScalarField t, ScalarField v,
                                              double hessian_bound) {
  SubquadraticHamiltonian h;
  h.name = std::move(name);
  h.d = d;
  h.kinetic = t;
  h.potential = v;
  h.hessian_bound = hessian_bound;
  h.value = [t, v](const RVec& q, const RVec& p) { return t.value(p) + v.value(q); };
  h.grad = [t, v, d](const RVec& q, const RVec& p) {
    RVec g(2 * d);
    g << v.grad(q), t.grad(p);
    return g;
  };
  h.hess = [t, v, d](const RVec& q, const RVec& p) {
    RMat m = RMat::Zero(2 * d, 2 * d);
    m.topLeftCorner(d, d) = v.hess(q);
    m.bottomRightCorner(d, d) = t.hess(p);
    return m;
  };
  return h;
}

namespace hamiltonians {

inline ScalarField zero_field(int d) {
  return {[](const RVec&) { return 0.0; }, [d](const RVec&) { return RVec(RVec::Zero(d)); },
          [d](const RVec&) { return RMat(RMat::Zero(d, d)); }};
}

inline ScalarField quadratic_field(int d, double c) {
  return {[c](const RVec& v) { return 0.5 * c * v.squaredNorm(); },
          [c](const RVec& v) { return RVec(c * v); },
          [d, c](const RVec&) { return RMat(c * RMat::Identity(d, d)); }};
}

inline SubquadraticHamiltonian zero(int d) {
  return make_separable("zero", d, zero_field(d), zero_field(d), 0.0);
}

/// h = |p|^2 / 2.
inline SubquadraticHamiltonian free_particle(int d) {
  return make_separable("free", d, quadratic_field(d, 1.0), zero_field(d), 1.0);
}

/// h = (|p|^2 + omega^2 |q|^2) / 2.
inline SubquadraticHamiltonian harmonic(int d, double omega = 1.0) {
  return make_separable("harmonic", d, quadratic_field(d, 1.0), quadratic_field(d, omega * omega),
                        std::max(1.0, omega * omega));
}

/// h = |p|^2/2 + |q|^2/2 + a sum_j cos(q_j).
inline SubquadraticHamiltonian anharmonic(int d, double a) {
  ScalarField v{[a](const RVec& q) { return 0.5 * q.squaredNorm() + a * q.array().cos().sum(); },
                [a](const RVec& q) { return RVec(q - a * q.array().sin().matrix()); },
                [a, d](const RVec& q) {
                  return RMat(RMat::Identity(d, d) - a * RVec(q.array().cos()).asDiagonal().toDenseMatrix());
                }};
  return make_separable("anharmonic", d, quadratic_field(d, 1.0), v, 1.0 + std::abs(a));
}

/// h = (|p|^2 + |q|^2)/2 + c sum_j sin(q_j) sin(p_j). Not separable.
inline SubquadraticHamiltonian coupled(int d, double c) {
  SubquadraticHamiltonian h;
  h.name = "coupled";
  h.d = d;
  h.hessian_bound = 1.0 + std::abs(c);
  h.value = [c](const RVec& q, const RVec& p) {
    return 0.5 * (q.squaredNorm() + p.squaredNorm()) + c * (q.array().sin() * p.array().sin()).sum();
  };
  h.grad = [c, d](const RVec& q, const RVec& p) {
    RVec g(2 * d);
    g.head(d) = q.array() + c * q.array().cos() * p.array().sin();
    g.tail(d) = p.array() + c * q.array().sin() * p.array().cos();
    return g;
  };
  h.hess = [c, d](const RVec& q, const RVec& p) {
    RMat m = RMat::Identity(2 * d, 2 * d);
    for (int j = 0; j < d; ++j) {
      const double sq = std::sin(q(j)), cq = std::cos(q(j)), sp = std::sin(p(j)), cp = std::cos(p(j));
      m(j, j) -= c * sq * sp;
      m(d + j, d + j) -= c * sq * sp;
      m(j, d + j) = c * cq * cp;
      m(d + j, j) = c * cq * cp;
    }
    return m;
  };
  return h;
}

}  // namespace hamiltonians

/// Largest sampled spectral norm of the Hessian over a box in R^{2d}.
inline double sampled_hessian_norm(const SubquadraticHamiltonian& h, const Box& region, int samples,
                                   std::uint64_t seed = 0x5EED) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    RVec z(2 * h.d);
    for (int j = 0; j < z.size(); ++j) z(j) = region.lo(j) + unit(rng) * (region.hi(j) - region.lo(j));
    RMat m = h.hess(z.head(h.d), z.tail(h.d));
    worst = std::max(worst, Eigen::JacobiSVD<RMat>(m).singularValues()(0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Canonical maps

enum class MapKind { identity, linear, flow, composite, inverse, rescaled, custom };

inline const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::identity: return "identity";
    case MapKind::linear: return "linear";
    case MapKind::flow: return "hamiltonian-flow";
    case MapKind::composite: return "composite";
    case MapKind::inverse: return "inverse";
    case MapKind::rescaled: return "rescaled";
    case MapKind::custom: return "custom";
  }
  return "?";
}

struct FlowData {
  std::shared_ptr<const SubquadraticHamiltonian> h;
  double t = 0.0;
  double step = 0.0;
};

class CanonicalMap {
 public:
  using Evaluator = std::function<MapValue(const PhasePoint&)>;

  CanonicalMap(MapKind kind, int d, std::string label, Evaluator eval)
      : kind_(kind), d_(d), label_(std::move(label)), eval_(std::make_shared<Evaluator>(std::move(eval))) {}

  MapValue operator()(const PhasePoint& z) const {
    if (z.dim() != d_) throw InvalidArgument("map evaluated at a point of the wrong dimension");
    return (*eval_)(z);
  }

  MapKind kind() const { return kind_; }
  int dim() const { return d_; }
  const std::string& label() const { return label_; }

  // Kind-specific data used by invert() and by rescaling.
  RMat linear_matrix;                     // linear
  std::optional<FlowData> flow;           // flow
  std::vector<CanonicalMap> parts;        // composite: {outer, inner}; rescaled: {base}
  double scale_eps = 1.0;                 // rescaled
  std::function<CanonicalMap()> inverse;  // custom maps may supply one

 private:
  MapKind kind_;
  int d_;
  std::string label_;
  std::shared_ptr<const Evaluator> eval_;
};

namespace detail {

inline void require_finite(const MapValue& v) {
  if (!v.image.finite() || !v.F.allFinite() || !std::isfinite(v.S))
    throw ConvergenceError("map evaluation produced non-finite values");
}

}  // namespace detail

/// Image, Jacobian and action at z.
inline MapValue map_eval(const CanonicalMap& kappa, const PhasePoint& z) {
  if (!z.finite()) throw InvalidArgument("map_eval: non-finite phase point");
  MapValue v = kappa(z);
  detail::require_finite(v);
  return v;
}

inline CanonicalMap identity_map(int d) {
  return CanonicalMap(MapKind::identity, d, "identity", [d](const PhasePoint& z) {
    return MapValue{z, RMat::Identity(2 * d, 2 * d), 0.0};
  });
}

/// z -> F z with action 1/2 q.(A^T C) q + q.(C^T B) p + 1/2 p.(B^T D) p.
inline CanonicalMap linear_map(const RMat& f, const std::string& label = "linear") {
  const auto chk = is_symplectic(f, 1e-10 * (1.0 + f.squaredNorm()));
  if (!chk.flag)
    throw InvalidArgument("linear map matrix is not symplectic (residual " +
                          std::to_string(chk.residual) + ")");
  const int d = static_cast<int>(f.rows() / 2);
  const RMat a = f.topLeftCorner(d, d), b = f.topRightCorner(d, d);
  const RMat c = f.bottomLeftCorner(d, d), dd = f.bottomRightCorner(d, d);
  RMat qq = a.transpose() * c;
  RMat pp = b.transpose() * dd;
  qq = 0.5 * (qq + qq.transpose()).eval();
  pp = 0.5 * (pp + pp.transpose()).eval();
  const RMat qp = c.transpose() * b;
  CanonicalMap m(MapKind::linear, d, label, [f, qq, pp, qp](const PhasePoint& z) {
    RVec w = f * z.stacked();
    const double s = 0.5 * z.q.dot(qq * z.q) + z.q.dot(qp * z.p) + 0.5 * z.p.dot(pp * z.p);
    return MapValue{PhasePoint::from_stacked(w), f, s};
  });
  m.linear_matrix = f;
  return m;
}

namespace detail {

struct FlowState {
  RVec q, p;
  RMat F;
  double S = 0.0;
};

inline void kick(const ScalarField& v, double c, FlowState& s) {
  const int d = static_cast<int>(s.q.size());
  s.S -= c * v.value(s.q);
  s.p -= c * v.grad(s.q);
  s.F.bottomRows(d) -= c * v.hess(s.q) * s.F.topRows(d);
}

inline void drift(const ScalarField& t, double c, FlowState& s) {
  const int d = static_cast<int>(s.q.size());
  const RVec g = t.grad(s.p);
  s.S += c * (s.p.dot(g) - t.value(s.p));
  s.q += c * g;
  s.F.topRows(d) += c * t.hess(s.p) * s.F.bottomRows(d);
}

// Stormer-Verlet: each substep is the exact flow of T or V, so the Jacobian
// and the action are those of the discrete map itself.
inline void verlet(const SubquadraticHamiltonian& h, double tau, FlowState& s) {
  kick(*h.potential, 0.5 * tau, s);
  drift(*h.kinetic, tau, s);
  kick(*h.potential, 0.5 * tau, s);
}

// Implicit midpoint. The increment p_mid . (q1 - q0) - tau h(z_mid) is an
// exact action for the discrete map.
inline void midpoint(const SubquadraticHamiltonian& h, double tau, FlowState& s) {
  const int d = static_cast<int>(s.q.size());
  const RMat j = symplectic_j(d);
  RVec z0(2 * d);
  z0 << s.q, s.p;
  RVec z1 = z0 + tau * j * h.grad(s.q, s.p);
  // Stop at a tiny update; an update that stalls near rounding level is accepted too.
  double last = INFINITY;
  bool done = false;
  for (int it = 0; it < 60; ++it) {
    const RVec zm = 0.5 * (z0 + z1);
    const RVec g = z1 - z0 - tau * j * h.grad(zm.head(d), zm.tail(d));
    const RMat jac = RMat::Identity(2 * d, 2 * d) - 0.5 * tau * j * h.hess(zm.head(d), zm.tail(d));
    const RVec dz = jac.partialPivLu().solve(g);
    z1 -= dz;
    if (!z1.allFinite()) break;
    const double rel = dz.norm() / (1.0 + z1.norm());
    if (rel <= 1e-15 || (rel < 1e-13 && rel >= 0.5 * last)) {
      done = true;
      break;
    }
    last = rel;
  }
  if (!done) throw ConvergenceError("implicit midpoint step did not converge");
  const RVec zm = 0.5 * (z0 + z1);
  const RMat jh = j * h.hess(zm.head(d), zm.tail(d));
  const RMat lhs = RMat::Identity(2 * d, 2 * d) - 0.5 * tau * jh;
  const RMat rhs = RMat::Identity(2 * d, 2 * d) + 0.5 * tau * jh;
  s.F = lhs.partialPivLu().solve(rhs * s.F);
  s.S += zm.tail(d).dot(z1.head(d) - z0.head(d)) - tau * h.value(zm.head(d), zm.tail(d));
  s.q = z1.head(d);
  s.p = z1.tail(d);
}

// Fourth-order triple-jump composition of a symmetric base step.
inline void yoshida4(const SubquadraticHamiltonian& h, double tau, FlowState& s) {
  const double cbrt2 = std::cbrt(2.0);
  const double w1 = 1.0 / (2.0 - cbrt2);
  const double w0 = -cbrt2 / (2.0 - cbrt2);
  auto base = [&](double c) {
    if (h.separable())
      verlet(h, c, s);
    else
      midpoint(h, c, s);
  };
  base(w1 * tau);
  base(w0 * tau);
  base(w1 * tau);
}

}  // namespace detail

/// Time-t flow of h, integrated with steps no longer than `step`.
inline CanonicalMap hamiltonian_flow(std::shared_ptr<const SubquadraticHamiltonian> h, double t,
                                     double step) {
  if (!h) throw InvalidArgument("hamiltonian_flow: null Hamiltonian");
  if (!(step > 0.0) || !std::isfinite(t)) throw InvalidArgument("hamiltonian_flow: step must be positive");
  if (std::abs(t) / step > 1e7) throw InvalidArgument("hamiltonian_flow: more than 1e7 steps requested");
  const int d = h->d;
  const long n = std::max(1L, static_cast<long>(std::ceil(std::abs(t) / step - 1e-9)));
  const double tau = t / static_cast<double>(n);
  std::ostringstream label;
  label << "flow(" << h->name << ", t=" << t << ")";
  CanonicalMap m(MapKind::flow, d, label.str(), [h, n, tau, d](const PhasePoint& z) {
    detail::FlowState s{z.q, z.p, RMat::Identity(2 * d, 2 * d), 0.0};
    if (tau != 0.0)
      for (long k = 0; k < n; ++k) detail::yoshida4(*h, tau, s);
    MapValue v{{s.q, s.p}, s.F, s.S};
    detail::require_finite(v);
    return v;
  });
  m.flow = FlowData{h, t, step};
  return m;
}

inline CanonicalMap hamiltonian_flow(const SubquadraticHamiltonian& h, double t, double step) {
  return hamiltonian_flow(std::make_shared<const SubquadraticHamiltonian>(h), t, step);
}

/// outer o inner, with S = S_outer o inner + S_inner.
inline CanonicalMap compose(const CanonicalMap& outer, const CanonicalMap& inner) {
  if (outer.dim() != inner.dim()) throw InvalidArgument("compose: dimension mismatch");
  CanonicalMap m(MapKind::composite, outer.dim(), outer.label() + " o " + inner.label(),
                 [outer, inner](const PhasePoint& z) {
                   MapValue a = inner(z);
                   MapValue b = outer(a.image);
                   return MapValue{std::move(b.image), b.F * a.F, b.S + a.S};
                 });
  m.parts = {outer, inner};
  return m;
}

/// z -> kappa(sqrt(eps) z)/sqrt(eps), action S(sqrt(eps) z)/eps.
inline CanonicalMap rescaled_map(const CanonicalMap& kappa, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("rescaled_map: eps must be positive");
  const double r = std::sqrt(eps);
  CanonicalMap m(MapKind::rescaled, kappa.dim(), "rescaled(" + kappa.label() + ")",
                 [kappa, r, eps](const PhasePoint& z) {
                   MapValue v = kappa(PhasePoint(r * z.q, r * z.p));
                   return MapValue{PhasePoint(v.image.q / r, v.image.p / r), v.F, v.S / eps};
                 });
  m.parts = {kappa};
  m.scale_eps = eps;
  return m;
}

inline CanonicalMap invert(const CanonicalMap& kappa) {
  switch (kappa.kind()) {
    case MapKind::identity:
      return kappa;
    case MapKind::linear: {
      const int d = kappa.dim();
      const RMat j = symplectic_j(d);
      return linear_map(-j * kappa.linear_matrix.transpose() * j, "inverse(" + kappa.label() + ")");
    }
    case MapKind::flow:
      return hamiltonian_flow(kappa.flow->h, -kappa.flow->t, kappa.flow->step);
    case MapKind::composite:
      return compose(invert(kappa.parts[1]), invert(kappa.parts[0]));
    case MapKind::rescaled:
      return rescaled_map(invert(kappa.parts[0]), kappa.scale_eps);
    case MapKind::inverse:
    case MapKind::custom:
      if (kappa.inverse) return kappa.inverse();
      break;
  }
  throw UnsupportedError("no inverse available for map '" + kappa.label() + "'");
}

/// Wraps a user evaluator. If `inverse_eval` is given, invert() returns it as
/// a map of kind `inverse`.
inline CanonicalMap custom_map(int d, std::string label, CanonicalMap::Evaluator eval,
                               CanonicalMap::Evaluator inverse_eval = {}) {
  CanonicalMap m(MapKind::custom, d, label, std::move(eval));
  if (inverse_eval) {
    auto fwd = m;
    m.inverse = [d, label, inverse_eval, fwd]() {
      CanonicalMap inv(MapKind::inverse, d, "inverse(" + label + ")", inverse_eval);
      inv.inverse = [fwd]() { return fwd; };
      return inv;
    };
  }
  return m;
}

// ---------------------------------------------------------------------------
// Action checks

/// Relative residual of dS = Xi . dX - p . dq at z, with S differentiated by
/// central differences of step h (relative to max(1, |z_j|)).
inline double action_residual(const CanonicalMap& kappa, const PhasePoint& z, double h = 1e-5) {
  const int d = kappa.dim();
  const MapValue v = kappa(z);
  const RVec zs = z.stacked();
  RVec fd(2 * d);
  for (int j = 0; j < 2 * d; ++j) {
    const double step = h * std::max(1.0, std::abs(zs(j)));
    RVec zp = zs, zm = zs;
    zp(j) += step;
    zm(j) -= step;
    fd(j) = (kappa(PhasePoint::from_stacked(zp)).S - kappa(PhasePoint::from_stacked(zm)).S) / (2 * step);
  }
  RVec rhs = v.F.topRows(d).transpose() * v.image.p;
  rhs.head(d) -= z.p;
  return (fd - rhs).norm() / std::max(1.0, rhs.norm());
}

/// max - min over the points of S^direct(z) - S^outer(inner z) - S^inner(z),
/// where `direct` is an independently built map equal to outer o inner.
inline double cocycle_spread(const CanonicalMap& direct, const CanonicalMap& outer, const CanonicalMap& inner,
                             const std::vector<PhasePoint>& pts) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& z : pts) {
    const MapValue vi = inner(z);
    const double c = direct(z).S - outer(vi.image).S - vi.S;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  return pts.empty() ? 0.0 : hi - lo;
}

// ---------------------------------------------------------------------------
// Class-B constants

struct ClassBReport {
  double M0 = 0.0;       // max |F|
  double M1 = 0.0;       // max |dF|, by central differences
  double c_lower = 0.0;  // 1 / max |F^{-1}|
  double C_upper = 0.0;  // = M0
  int pairs = 0;
  int violations = 0;
};

namespace detail {
inline double spectral_norm(const RMat& m) { return Eigen::JacobiSVD<RMat>(m).singularValues()(0); }
}  // namespace detail

/// Sampled estimates over `region` (a box in R^{2d}); these are lower
/// estimates of the global constants. Bi-Lipschitz bounds are then checked on
/// `samples` random pairs with a 1e-6 relative slack.
inline ClassBReport class_b_report(const CanonicalMap& kappa, const Box& region, int samples,
                                   std::uint64_t seed = 0x5EED) {
  if (samples < 2) throw InvalidArgument("class_b_report: need at least 2 samples");
  const int d = kappa.dim();
  if (region.dim() != 2 * d) throw InvalidArgument("class_b_report: region must live in R^{2d}");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] {
    RVec z(2 * d);
    for (int j = 0; j < 2 * d; ++j) z(j) = region.lo(j) + unit(rng) * (region.hi(j) - region.lo(j));
    return z;
  };
  const RMat jm = symplectic_j(d);
  ClassBReport r;
  double inv_max = 0.0;
  for (int s = 0; s < samples; ++s) {
    const RVec z = draw();
    const MapValue v = kappa(PhasePoint::from_stacked(z));
    r.M0 = std::max(r.M0, detail::spectral_norm(v.F));
    inv_max = std::max(inv_max, detail::spectral_norm(-jm * v.F.transpose() * jm));
    for (int j = 0; j < 2 * d; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(z(j)));
      RVec zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const RMat df = (kappa(PhasePoint::from_stacked(zp)).F - kappa(PhasePoint::from_stacked(zm)).F) / (2 * h);
      r.M1 = std::max(r.M1, detail::spectral_norm(df));
    }
  }
  r.C_upper = r.M0;
  r.c_lower = 1.0 / inv_max;
  for (int s = 0; s < samples; ++s) {
    const RVec z1 = draw(), z2 = draw();
    const double dz = (z2 - z1).norm();
    const double dk = (kappa(PhasePoint::from_stacked(z2)).image.stacked() -
                       kappa(PhasePoint::from_stacked(z1)).image.stacked())
                          .norm();
    ++r.pairs;
    if (dk > r.C_upper * dz * (1 + 1e-6) || dk < r.c_lower * dz * (1 - 1e-6)) ++r.violations;
  }
  return r;
}

}  // namespace fiokit
