// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "fiokit/experiments.hpp"

using namespace fiokit;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Line {
  int id;
  std::string name;
  bool passed;
  std::string detail;
  double seconds;
};

std::vector<Line> lines;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, const std::string& name, bool passed, const std::string& detail, double seconds) {
  lines.push_back({id, name, passed, detail, seconds});
  std::printf("%s  [%2d] %s: %s (%.1f s)\n", passed ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

json base(const std::string& experiment) {
  return {{"schema", kConfigSchema}, {"experiment", experiment}, {"d", 1}};
}

double worst_measured(const ExperimentResult& r, const std::string& prefix) {
  double w = 0.0;
  for (const auto& a : r.assertions)
    if (a.name.rfind(prefix, 0) == 0) w = std::max(w, a.measured);
  return w;
}

ComplexSymMatrix theta1(cplx t) { return ComplexSymMatrix(CMat::Constant(1, 1, t)); }

// Shared bookkeeping for the Schur and refinement criteria.
struct KernelLedger {
  int kernels = 0;
  int schur_failures = 0;
  double worst_schur_ratio = 0.0;
  int refined = 0;
  double worst_refinement = 0.0;

  void schur(const Discretization& disc) {
    for (const auto& k : disc.kernels) {
      const SchurReport s = schur_row_col(k, disc.grid.weight(), disc.grid.weight());
      ++kernels;
      if (!s.passed) ++schur_failures;
      worst_schur_ratio = std::max(worst_schur_ratio, s.measured / s.schur_bound);
    }
  }
  void refinement(const NormReport& n) {
    if (!n.refined_norm) return;
    ++refined;
    worst_refinement = std::max(worst_refinement, n.refinement_change());
  }
};

KernelLedger ledger;

struct Combo {
  std::string label;
  CanonicalMap kappa;
  SymbolSpec u;
  ComplexSymMatrix tx, ty;
  bool refine;
};

std::vector<Combo> combos() {
  const RVec c0 = RVec::Zero(2);
  RVec c1(2), w(2);
  c1 << 0.5, -0.3;
  w << 1.0, 0.5;
  RMat shear = RMat::Identity(2, 2);
  shear(1, 0) = 0.6;
  const CanonicalMap id = identity_map(1);
  const CanonicalMap harm = hamiltonian_flow(hamiltonians::harmonic(1), 1.0, 0.01);
  const CanonicalMap anh = hamiltonian_flow(hamiltonians::anharmonic(1, 0.3), 0.7, 0.01);
  const CanonicalMap fr = hamiltonian_flow(hamiltonians::free_particle(1), 0.5, 0.01);
  const CanonicalMap lin = linear_map(shear);
  const ComplexSymMatrix one = theta1(1.0);
  return {
      {"identity/gaussian", id, symbols::gaussian(1, 1.0, c0, 1.0), one, one, true},
      {"harmonic/gaussian", harm, symbols::gaussian(1, 1.0, c0, 1.0), one, one, true},
      {"anharmonic/gaussian", anh, symbols::gaussian(1, cplx(0.6, 0.8), c1, 0.8), theta1(cplx(1.0, 0.3)), theta1(2.0), true},
      {"free/bump", fr, symbols::bump(1, 1.0, c0, 1.2), one, one, false},
      {"linear/gaussian", lin, symbols::gaussian(1, 1.0, c1, 0.7), theta1(2.0), theta1(0.5), false},
      {"harmonic/plane_wave", harm, symbols::plane_wave(1, w, 0.3), one, one, false},
      {"identity/constant", id, symbols::constant(1, cplx(0.0, 1.0)), one, one, false},
      {"anharmonic/poly_gaussian", anh, symbols::poly_gaussian(1, 1.0, 1, 1.0), one, one, false},
      {"free/decaying", fr, symbols::decaying(1, 2.0, 2.0), one, theta1(cplx(1.0, -0.4)), false},
      {"harmonic/bump", harm, symbols::bump(1, cplx(0.0, 2.0), c1, 0.9), theta1(cplx(0.8, 0.2)), one, true},
  };
}

void transforms() {
  for (const bool roundtrip : {false, true}) {
    const auto t0 = Clock::now();
    json j = base(roundtrip ? "reconstruct" : "fbi-isometry");
    j["eps"] = {1.0, 0.5, 0.25, 0.1};
    j["theta_x"] = roundtrip ? json({2.0, 0.5}) : json(1.0);
    const ExperimentResult r = run_experiment(parse_config(j));
    const double dt = since(t0);
    report(roundtrip ? 2 : 1, roundtrip ? "reconstruction" : "FBI isometry",
           r.passed() && r.assertions.size() == 40 && dt <= 60.0,
           std::to_string(r.assertions.size()) + " cases, worst " + fmt(worst_measured(r, "")) + " <= 1e-5", dt);
  }
}

void identity_value() {
  const auto t0 = Clock::now();
  const std::vector<std::pair<json, json>> pairs = {
      {1.0, 1.0}, {2.0, 0.5}, {json({1.0, 0.5}), 1.0}, {json({1.0, 0.3}), json({0.7, -0.4})}};
  bool ok = true;
  double worst = 0.0;
  for (const auto& [tx, ty] : pairs) {
    json j = base("identity-op");
    j["eps"] = {1.0, 0.25};
    j["theta_x"] = tx;
    j["theta_y"] = ty;
    const ExperimentResult r = run_experiment(parse_config(j));
    ok = ok && r.passed();
    worst = std::max(worst, worst_measured(r, ""));
  }
  const double dt = since(t0);
  report(3, "identity FIO value", ok && dt <= 30.0, "4 width pairs, worst " + fmt(worst) + " <= 1e-5", dt);
}

void bounds() {
  const auto t0 = Clock::now();
  const double eps = 0.5;
  MeasureOptions o;
  int aw_fail = 0, cf_fail = 0;
  double aw_worst = 0.0, cf_worst = 0.0;
  for (const Combo& c : combos()) {
    const FioSpec s{c.kappa, c.u, c.tx, c.ty, eps};
    const Discretization disc = discretize(s, o.grid);
    MeasureOptions mo = o;
    mo.check_refinement = c.refine;
    const NormReport n = measure_fio_norm(s, disc, mo);
    ledger.schur(disc);
    ledger.refinement(n);
    const double f = awick_to_fio(s.theta_x, s.theta_y);
    const double aw = n.measured_norm / f / c.u.sup_norm;
    const double cf = n.measured_norm / (f * c.u.sup_norm);
    aw_worst = std::max(aw_worst, aw);
    cf_worst = std::max(cf_worst, cf);
    if (aw > 1.0 + 5e-3) ++aw_fail;
    if (cf > 1.0 + 5e-3) ++cf_fail;
    std::printf("      %-26s |I|=%.6f  antiwick ratio %.4f\n", c.label.c_str(), n.measured_norm, aw);
  }
  const double dt = since(t0);
  report(4, "anti-Wick bound", aw_fail == 0 && dt <= 300.0,
         "10 combinations, max |I_AWick|/|u|_inf = " + fmt(aw_worst) + " <= 1.005", dt);

  // Sharpness: u = 1, kappa = Id, real equal widths.
  const auto t1 = Clock::now();
  double eq_worst = 0.0;
  for (double t : {1.0, 2.0}) {
    const FioSpec s{identity_map(1), symbols::constant(1, 1.0), theta1(t), theta1(t), eps};
    MeasureOptions mo = o;
    mo.check_refinement = t == 1.0;
    const Discretization disc = discretize(s, mo.grid);
    const NormReport n = measure_fio_norm(s, disc, mo);
    ledger.schur(disc);
    ledger.refinement(n);
    const double bound = awick_to_fio(s.theta_x, s.theta_y);
    eq_worst = std::max(eq_worst, std::abs(n.measured_norm - bound) / bound);
    if (n.measured_norm > bound * (1 + 5e-3)) ++cf_fail;
  }
  report(5, "corrected full bound", cf_fail == 0 && eq_worst <= 1e-2,
         "max ratio " + fmt(cf_worst) + " <= 1.005; equality case off by " + fmt(eq_worst) + " <= 1e-2",
         since(t1));
}

void uniformity() {
  const auto t0 = Clock::now();
  const std::vector<double> eps_list{1.0, 0.5, 0.25, 0.1};
  bool ok = true;
  std::string detail;
  const std::vector<std::pair<std::string, SymbolSpec>> fams = {{"xy_lorentz", symbols::xy_lorentz(1)},
                                                                 {"sin_x_gaussian", symbols::sin_x_gaussian(1)}};
  const CanonicalMap harm = hamiltonian_flow(hamiltonians::harmonic(1), 1.0, 0.01);
  for (const auto& [name, u] : fams) {
    std::vector<double> norms;
    for (double eps : eps_list) {
      const FioSpec s{harm, u, theta1(1.0), theta1(1.0), eps};
      MeasureOptions mo;
      mo.check_refinement = eps == 1.0;
      const Discretization disc = discretize(s, mo.grid);
      const NormReport n = measure_fio_norm(s, disc, mo);
      ledger.schur(disc);
      ledger.refinement(n);
      norms.push_back(n.measured_norm);
    }
    const double ratio = *std::max_element(norms.begin(), norms.end()) / norms.front();
    ok = ok && ratio <= 2.0;
    detail += (detail.empty() ? "" : ", ") + name + " max ratio " + fmt(ratio);
  }
  const double dt = since(t0);
  report(6, "eps-uniformity", ok && dt <= 600.0, detail + " <= 2", dt);
}

void separation() {
  const auto t0 = Clock::now();
  json j = base("separation-decay");
  j["eps"] = {1.0, 0.5};
  const ExperimentResult r = run_experiment(parse_config(j));
  std::string detail;
  for (const auto& f : r.summary["fits"])
    detail += (detail.empty() ? "" : ", ") + std::string("eps=") + fmt(f["eps"].get<double>()) + " slope " +
              fmt(f["slope"].get<double>()) + " vs " + fmt(f["expected"].get<double>());
  report(7, "separation decay", r.passed(), detail + " (within 25%)", since(t0));
}

void matrix_roots() {
  const auto t0 = Clock::now();
  json j = base("matrix-sqrt");
  j["options"] = {{"samples", 500}};
  const ExperimentResult r = run_experiment(parse_config(j));
  report(8, "matrix square root", r.passed(),
         "500 instances, residual " + fmt(r.summary["worst_residual"].get<double>()) + ", min Re eig " +
             fmt(r.summary["min_real_eig"].get<double>()) + ", Gaussian " +
             fmt(r.summary["gaussian_error"].get<double>()),
         since(t0));
}

void w_matrix_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(0x5EED);
  double res = 0.0, cond = 0.0;
  for (int s = 0; s < 100; ++s) {
    const int d = 1 + s % 3;
    const RMat f = experiments::random_symplectic(d, rng);
    const ComplexSymMatrix tx = experiments::random_width(d, rng), ty = experiments::random_width(d, rng);
    res = std::max(res, w_identity_residual(f, tx, ty));
    const auto sv = Eigen::JacobiSVD<CMat>(w_matrix(f, tx, ty)).singularValues();
    cond = std::max(cond, sv(0) / sv(sv.size() - 1));
  }
  report(9, "W-matrix identity", res <= 1e-10 && std::isfinite(cond),
         "100 instances, residual " + fmt(res) + " <= 1e-10, max condition " + fmt(cond), since(t0));
}

void actions() {
  const auto t0 = Clock::now();
  RMat f(2, 2);
  f << 1.2, 0.5, -0.3, 0.7083333333333334;  // det 1
  const CanonicalMap harm_half = hamiltonian_flow(hamiltonians::harmonic(1), 0.6, 0.005);
  const CanonicalMap harm = hamiltonian_flow(hamiltonians::harmonic(1), 1.2, 0.005);
  const CanonicalMap free_half = hamiltonian_flow(hamiltonians::free_particle(1), 0.4, 0.01);
  const CanonicalMap fr = hamiltonian_flow(hamiltonians::free_particle(1), 0.8, 0.01);
  const CanonicalMap lin = linear_map(f);
  const std::vector<CanonicalMap> maps = {identity_map(1), lin, fr, harm};
  std::mt19937_64 rng(0x5EED);
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  std::vector<PhasePoint> pts;
  for (int s = 0; s < 50; ++s) pts.push_back(PhasePoint(RVec::Constant(1, unit(rng)), RVec::Constant(1, unit(rng))));
  double act = 0.0;
  for (const auto& k : maps)
    for (const auto& z : pts) act = std::max(act, action_residual(k, z));
  double coc = 0.0;
  coc = std::max(coc, cocycle_spread(harm, harm_half, harm_half, pts));
  coc = std::max(coc, cocycle_spread(fr, free_half, free_half, pts));
  coc = std::max(coc, cocycle_spread(linear_map(f * f), lin, lin, pts));
  for (const auto& k : maps) coc = std::max(coc, cocycle_spread(identity_map(1), invert(k), k, pts));
  report(10, "action identity", act <= 1e-5 && coc <= 1e-7,
         "FD residual " + fmt(act) + " <= 1e-5, cocycle spread " + fmt(coc) + " <= 1e-7", since(t0));
}

void adjoint() {
  const auto t0 = Clock::now();
  json j = base("adjoint-check");
  j["eps"] = {1.0, 0.5};
  j["theta_x"] = {1.0, 0.3};
  j["theta_y"] = 2.0;
  j["kappa"] = {{"type", "hamiltonian"}, {"kind", "anharmonic"}, {"params", {{"a", 0.3}}}, {"t", 0.7}};
  j["symbol"] = {{"type", "gaussian"}, {"center", {0.5, 0.0}}, {"width", 0.8}};
  const ExperimentResult r = run_experiment(parse_config(j));
  report(11, "adjoint structure", r.passed(), "residual " + fmt(worst_measured(r, "adjoint-residual")) + " <= 1e-4",
         since(t0));
}

}  // namespace

int main() {
  try {
    transforms();
    identity_value();
    bounds();
    uniformity();
    separation();
    matrix_roots();
    w_matrix_identity();
    actions();
    adjoint();
    report(12, "Schur bound", ledger.schur_failures == 0 && ledger.kernels > 0,
           std::to_string(ledger.kernels) + " kernels, max measured/schur " + fmt(ledger.worst_schur_ratio), 0.0);
    report(13, "resolution convergence", ledger.refined > 0 && ledger.worst_refinement <= 1e-3,
           std::to_string(ledger.refined) + " refined measurements, max change " + fmt(ledger.worst_refinement) +
               " <= 1e-3",
           0.0);
  } catch (const std::exception& e) {
    std::printf("FAIL  aborted: %s\n", e.what());
    return 1;
  }
  int failed = 0;
  for (const auto& l : lines) failed += !l.passed;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(lines.size()) - failed, lines.size());
  return failed == 0 ? 0 : 1;
}
