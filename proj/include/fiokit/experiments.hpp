#pragma once

// Experiment configs, the named experiment suites and their reports.
//
// Config (JSON, schema "fiokit.experiment/1"):
//   experiment   one of experiment_names()
//   d            dimension (positive integer)
//   eps          list of values in (0, 1]
//   theta_x/y    number, [re, im], or d x d matrix of those (default 1)
//   kappa        {"type": "identity"} | {"type": "linear", "matrix": [[..]]}
//                | {"type": "hamiltonian", "kind": K, "params": {..}, "t": T, "step": H}
//   symbol       {"type": T, ...}, see build_symbol
//   grid         "auto" or {"safety": s}
//   functions    test-function names (default: all)
//   tolerances   per-assertion overrides
//   options      experiment-specific settings
//   output       output directory (the --out flag wins)

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fiokit/bounds.hpp"
#include "fiokit/families.hpp"

namespace fiokit {

using nlohmann::json;

inline constexpr const char* kConfigSchema = "fiokit.experiment/1";
inline constexpr const char* kReportSchema = "fiokit.report/1";

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"fbi-isometry",   "reconstruct",      "identity-op",
                                                 "norm-bounds",    "adjoint-check",    "separation-decay",
                                                 "matrix-sqrt",    "symplectic-check", "full-theorem"};
  return names;
}

struct ExperimentConfig {
  std::string experiment;
  int d = 1;
  std::vector<double> eps;
  ComplexSymMatrix theta_x = ComplexSymMatrix::identity(1);
  ComplexSymMatrix theta_y = ComplexSymMatrix::identity(1);
  json kappa = {{"type", "identity"}};
  json symbol = {{"type", "constant"}, {"value", 1.0}};
  double safety = 1.5;
  std::vector<std::string> functions;
  json tolerances = json::object();
  json options = json::object();
  std::string output = "out";
  std::uint64_t seed = 0x5EED;
  json raw;

  double tol(const std::string& key, double fallback) const { return tolerances.value(key, fallback); }
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

[[noreturn]] inline void config_error(const std::string& msg) { throw ConfigError(msg); }

inline cplx parse_complex(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  config_error(where + ": expected a number or [re, im]");
}

inline ComplexSymMatrix parse_theta(const json& j, int d, const std::string& where) {
  CMat m(d, d);
  if (j.is_number() || (j.is_array() && j.size() == 2 && j[0].is_number())) {
    m = parse_complex(j, where) * CMat::Identity(d, d);
  } else if (j.is_array() && static_cast<int>(j.size()) == d) {
    for (int r = 0; r < d; ++r) {
      if (!j[r].is_array() || static_cast<int>(j[r].size()) != d) config_error(where + ": matrix must be d x d");
      for (int c = 0; c < d; ++c) m(r, c) = parse_complex(j[r][c], where);
    }
  } else {
    config_error(where + ": expected a number, [re, im] or a d x d matrix");
  }
  try {
    return ComplexSymMatrix(m);
  } catch (const InvalidArgument& e) {
    config_error(where + ": " + e.what());
  }
}

inline RVec parse_vector(const json& j, int n, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) config_error(where + ": expected " + std::to_string(n) + " numbers");
  RVec v(n);
  for (int k = 0; k < n; ++k) {
    if (!j[k].is_number()) config_error(where + ": expected numbers");
    v(k) = j[k].get<double>();
  }
  return v;
}

inline double number(const json& obj, const std::string& key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) config_error(where + "." + key + ": expected a number");
  return obj[key].get<double>();
}

}  // namespace detail

inline SubquadraticHamiltonian build_hamiltonian(int d, const json& j) {
  const std::string kind = j.value("kind", "");
  const json params = j.value("params", json::object());
  if (kind == "zero") return hamiltonians::zero(d);
  if (kind == "free") return hamiltonians::free_particle(d);
  if (kind == "harmonic") return hamiltonians::harmonic(d, detail::number(params, "omega", 1.0, "kappa.params"));
  if (kind == "anharmonic") return hamiltonians::anharmonic(d, detail::number(params, "a", 0.3, "kappa.params"));
  if (kind == "coupled") return hamiltonians::coupled(d, detail::number(params, "c", 0.3, "kappa.params"));
  detail::config_error("kappa.kind: unknown Hamiltonian '" + kind + "' (zero | free | harmonic | anharmonic | coupled)");
}

inline CanonicalMap build_map(int d, const json& j) {
  if (!j.is_object()) detail::config_error("kappa: expected an object");
  const std::string type = j.value("type", "");
  if (type == "identity") return identity_map(d);
  if (type == "linear") {
    const json& m = j.contains("matrix") ? j["matrix"] : json();
    if (!m.is_array() || static_cast<int>(m.size()) != 2 * d) detail::config_error("kappa.matrix: expected 2d x 2d rows");
    RMat f(2 * d, 2 * d);
    for (int r = 0; r < 2 * d; ++r) f.row(r) = detail::parse_vector(m[r], 2 * d, "kappa.matrix").transpose();
    try {
      return linear_map(f);
    } catch (const InvalidArgument& e) {
      detail::config_error(std::string("kappa.matrix: ") + e.what());
    }
  }
  if (type == "hamiltonian") {
    const double t = detail::number(j, "t", 1.0, "kappa");
    const double step = detail::number(j, "step", 0.01, "kappa");
    if (!(step > 0.0)) detail::config_error("kappa.step: must be positive");
    return hamiltonian_flow(build_hamiltonian(d, j), t, step);
  }
  detail::config_error("kappa.type: expected identity | linear | hamiltonian");
}

/// Symbol descriptors:
///   constant {value}            gaussian {amplitude, center[2d], width}
///   bump {amplitude, center[2d], radius}
///   poly_gaussian {amplitude, power, width}
///   decaying {mq, mp}           plane_wave {frequency[2d], phase}
///   xy_lorentz                  sin_x_gaussian
inline SymbolSpec build_symbol(int d, const json& j) {
  if (!j.is_object()) detail::config_error("symbol: expected an object");
  const std::string type = j.value("type", "");
  auto amp = [&] { return j.contains("amplitude") ? detail::parse_complex(j["amplitude"], "symbol.amplitude") : cplx(1.0); };
  auto center = [&] { return j.contains("center") ? detail::parse_vector(j["center"], 2 * d, "symbol.center") : RVec(RVec::Zero(2 * d)); };
  auto positive = [&](const std::string& key, double fallback) {
    const double v = detail::number(j, key, fallback, "symbol");
    if (!(v > 0.0)) detail::config_error("symbol." + key + ": must be positive");
    return v;
  };
  if (type == "constant")
    return symbols::constant(d, j.contains("value") ? detail::parse_complex(j["value"], "symbol.value") : cplx(1.0));
  if (type == "gaussian") return symbols::gaussian(d, amp(), center(), positive("width", 1.0));
  if (type == "bump") return symbols::bump(d, amp(), center(), positive("radius", 1.0));
  if (type == "poly_gaussian")
    return symbols::poly_gaussian(d, amp(), static_cast<int>(detail::number(j, "power", 1, "symbol")), positive("width", 1.0));
  if (type == "decaying")
    return symbols::decaying(d, detail::number(j, "mq", 2.0, "symbol"), detail::number(j, "mp", 2.0, "symbol"));
  if (type == "plane_wave")
    return symbols::plane_wave(d, detail::parse_vector(j.value("frequency", json::array()), 2 * d, "symbol.frequency"),
                               detail::number(j, "phase", 0.0, "symbol"));
  if (type == "xy_lorentz") return symbols::xy_lorentz(d);
  if (type == "sin_x_gaussian") return symbols::sin_x_gaussian(d);
  detail::config_error("symbol.type: unknown symbol '" + type + "'");
}

/// Parses and validates a config; every object the experiment needs is
/// built once here so that errors surface before any output is written.
inline ExperimentConfig parse_config(const json& j) {
  using detail::config_error;
  if (!j.is_object()) config_error("config: expected a JSON object");
  if (j.value("schema", "") != kConfigSchema) config_error(std::string("schema: expected \"") + kConfigSchema + "\"");
  ExperimentConfig c;
  c.raw = j;
  if (!j.contains("experiment") || !j["experiment"].is_string()) config_error("experiment: missing");
  c.experiment = j["experiment"].get<std::string>();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end())
    config_error("experiment: unknown name '" + c.experiment + "'");
  if (!j.contains("d") || !j["d"].is_number_integer() || j["d"].get<int>() < 1 || j["d"].get<int>() > 3)
    config_error("d: missing or not an integer in 1..3");
  c.d = j["d"].get<int>();
  if (j.contains("eps")) {
    if (!j["eps"].is_array() || j["eps"].empty()) config_error("eps: expected a non-empty list");
    for (const auto& e : j["eps"]) {
      if (!e.is_number() || !(e.get<double>() > 0.0) || e.get<double>() > 1.0) config_error("eps: values must lie in (0, 1]");
      c.eps.push_back(e.get<double>());
    }
  } else {
    c.eps = {1.0};
  }
  c.theta_x = detail::parse_theta(j.value("theta_x", json(1.0)), c.d, "theta_x");
  c.theta_y = detail::parse_theta(j.value("theta_y", json(1.0)), c.d, "theta_y");
  if (j.contains("kappa")) c.kappa = j["kappa"];
  if (j.contains("symbol")) c.symbol = j["symbol"];
  try {
    build_map(c.d, c.kappa);
    build_symbol(c.d, c.symbol);
  } catch (const InvalidArgument& e) {
    config_error(e.what());
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    if (g.is_string()) {
      if (g.get<std::string>() != "auto") config_error("grid: expected \"auto\" or an object");
    } else if (g.is_object()) {
      c.safety = detail::number(g, "safety", 1.5, "grid");
      if (c.safety < 1.0) config_error("grid.safety: must be at least 1");
    } else {
      config_error("grid: expected \"auto\" or an object");
    }
  }
  if (j.contains("functions")) {
    if (!j["functions"].is_array()) config_error("functions: expected a list of names");
    for (const auto& f : j["functions"]) {
      if (!f.is_string()) config_error("functions: expected names");
      try {
        test_function(f.get<std::string>());
      } catch (const InvalidArgument& e) {
        config_error(std::string("functions: ") + e.what());
      }
      c.functions.push_back(f.get<std::string>());
    }
  } else {
    for (const auto& f : test_functions()) c.functions.push_back(f.name);
  }
  if (j.contains("tolerances")) {
    if (!j["tolerances"].is_object()) config_error("tolerances: expected an object");
    for (const auto& [k, v] : j["tolerances"].items())
      if (!v.is_number() || !(v.get<double>() > 0.0)) config_error("tolerances." + k + ": expected a positive number");
    c.tolerances = j["tolerances"];
  }
  if (j.contains("options")) {
    if (!j["options"].is_object()) config_error("options: expected an object");
    c.options = j["options"];
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) config_error("output: expected a path");
    c.output = j["output"].get<std::string>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) config_error("seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON (") + e.what() + ")");
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Reports

struct Assertion {
  std::string name;
  double measured = 0.0;
  double limit = 0.0;       // measured must be <= limit (or within tolerance of it for "equal")
  std::string relation = "<=";
  bool passed = false;
  json detail = json::object();
};

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(const std::vector<json>& row) {
    if (row.size() != header_.size()) throw InvalidArgument("csv: row width does not match header");
    rows_.push_back(row);
  }
  bool empty() const { return rows_.empty(); }

  std::string str() const {
    std::ostringstream os;
    write_row(os, std::vector<json>(header_.begin(), header_.end()));
    for (const auto& r : rows_) write_row(os, r);
    return os.str();
  }

 private:
  static std::string field(const json& v) {
    std::string s;
    if (v.is_string()) {
      s = v.get<std::string>();
    } else if (v.is_number_float()) {
      std::ostringstream os;
      os << std::setprecision(17) << v.get<double>();
      s = os.str();
    } else {
      s = v.dump();
    }
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }
  static void write_row(std::ostream& os, const std::vector<json>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << field(r[k]);
    os << "\r\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<json>> rows_;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<Assertion> assertions;
  CsvTable table{{"experiment"}};
  json summary = json::object();

  bool passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
  }

  void check(const std::string& name, double measured, double limit, json detail = json::object()) {
    assertions.push_back({name, measured, limit, "<=", std::isfinite(measured) && measured <= limit, std::move(detail)});
  }
};

inline std::string timestamp_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json report_json(const ExperimentConfig& c, const ExperimentResult& r, const std::string& timestamp) {
  json a = json::array();
  for (const auto& x : r.assertions)
    a.push_back({{"name", x.name},
                 {"measured", x.measured},
                 {"limit", x.limit},
                 {"relation", x.relation},
                 {"passed", x.passed},
                 {"detail", x.detail}});
  std::ostringstream seed;
  seed << "0x" << std::hex << std::uppercase << c.seed;
  return {{"schema", kReportSchema},
          {"experiment", r.experiment},
          {"passed", r.passed()},
          {"assertions", a},
          {"summary", r.summary},
          {"config", c.raw},
          {"seed", seed.str()},
          {"timestamp", timestamp}};
}

// ---------------------------------------------------------------------------
// Experiments

namespace experiments {

inline ExperimentResult transform(const ExperimentConfig& c, bool roundtrip) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const double tol = c.tol(roundtrip ? "reconstruction" : "isometry", 1e-5);
  r.table = CsvTable({"eps", "function", "n_y", "n_q", "n_p", roundtrip ? "relative_error" : "norm_ratio_minus_one"});
  double worst = 0.0;
  for (double eps : c.eps)
    for (const auto& name : c.functions) {
      const TestFunction& f = test_function(name);
      const TransformLayouts l = layouts_for(f, eps, c.theta_x, c.safety);
      const GridFunction phi = sample(f, eps, l.y);
      const PhaseSpaceField w = fbi_forward(eps, c.theta_x, phi, l.ps);
      double err;
      if (roundtrip) {
        const GridFunction back = fbi_inverse(eps, c.theta_x, w, l.y);
        err = (back.values - phi.values).norm() / phi.values.norm();
      } else {
        err = std::abs(w.norm() / phi.norm() - 1.0);
      }
      worst = std::max(worst, err);
      r.table.add({eps, name, l.y.size(), l.ps.q.size(), l.ps.p.size(), err});
      std::ostringstream label;
      label << (roundtrip ? "reconstruction" : "isometry") << "[" << name << ", eps=" << eps << "]";
      r.check(label.str(), err, tol);
    }
  r.summary = {{"worst", worst}, {"tolerance", tol}};
  return r;
}

inline ExperimentResult identity_op(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const double tol = c.tol("identity", 1e-5);
  const SymbolSpec u = build_symbol(c.d, c.symbol);
  if (u.name != "constant") throw ConfigError("symbol: identity-op needs a constant symbol");
  const cplx value = detail::parse_complex(u.params["value"], "symbol.value") * identity_fio_value(c.theta_x, c.theta_y);
  r.table = CsvTable({"eps", "function", "expected_re", "expected_im", "relative_error"});
  std::vector<std::string> fns = c.functions;
  if (!c.raw.contains("functions")) fns = {"hermite0", "hermite2", "modulated", "cat"};
  for (double eps : c.eps)
    for (const auto& name : fns) {
      const TestFunction& f = test_function(name);
      const FioSpec s{identity_map(c.d), u, c.theta_x, c.theta_y, eps};
      const GridFunction phi = sample(f, eps, layouts_for(f, eps, c.theta_y.conj(), c.safety).y);
      const GridFunction out = apply_fio(s, phi);
      const double err = (out.values - value * phi.values).norm() / phi.values.norm();
      r.table.add({eps, name, value.real(), value.imag(), err});
      std::ostringstream label;
      label << "identity[" << name << ", eps=" << eps << "]";
      r.check(label.str(), err, tol, {{"expected_factor", {value.real(), value.imag()}}});
    }
  r.summary = {{"expected_factor", {value.real(), value.imag()}}};
  return r;
}

inline MeasureOptions measure_options(const ExperimentConfig& c) {
  MeasureOptions o;
  o.grid.safety = c.safety;
  o.grid.region = c.options.value("region", 1.5);
  o.check_refinement = c.options.value("refinement", true);
  return o;
}

inline ExperimentResult norm_bounds(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const CanonicalMap kappa = build_map(c.d, c.kappa);
  const SymbolSpec u = build_symbol(c.d, c.symbol);
  const MeasureOptions o = measure_options(c);
  const double slack = c.tol("bound", 5e-3);
  const double refine_tol = c.tol("refinement", 1e-3);
  r.table = CsvTable({"eps", "bound", "measured", "bound_value", "refined", "schur_bound"});
  json reports = json::array();
  for (double eps : c.eps) {
    const FioSpec s{kappa, u, c.theta_x, c.theta_y, eps};
    std::ostringstream tag;
    tag << "eps=" << eps;
    const Discretization disc = discretize(s, o.grid);
    const NormReport n = measure_fio_norm(s, disc, o);
    const SchurReport sc = schur_row_col(disc.kernels[0], disc.grid.weight(), disc.grid.weight());
    r.check("schur[" + tag.str() + "]", sc.measured, sc.schur_bound * (1 + 1e-2),
            {{"row_sup", sc.row_sup}, {"col_sup", sc.col_sup}});
    if (n.refined_norm) r.check("refinement[" + tag.str() + "]", n.refinement_change(), refine_tol);
    std::vector<NormReport> bounds;
    if (!u.depends_on_xy) {
      const double f = awick_to_fio(s.theta_x, s.theta_y);
      NormReport aw = n;
      aw.bound_name = BoundName::antiwick;
      aw.measured_norm = n.measured_norm / f;
      if (n.refined_norm) aw.refined_norm = *n.refined_norm / f;
      aw.bound_value = u.sup_norm;
      NormReport cf = n;
      cf.bound_name = BoundName::corfull;
      cf.bound_value = f * u.sup_norm;
      bounds = {aw, cf};
    }
    for (auto& b : bounds) {
      b.tolerance = slack;
      r.check(std::string(to_string(b.bound_name)) + "[" + tag.str() + "]", b.measured_norm,
              b.bound_value * (1 + slack));
      r.table.add({eps, to_string(b.bound_name), b.measured_norm, b.bound_value,
                   b.refined_norm ? json(*b.refined_norm) : json(""), sc.schur_bound});
      reports.push_back(to_json(b));
    }
    if (bounds.empty()) {
      r.table.add({eps, "none", n.measured_norm, "", n.refined_norm ? json(*n.refined_norm) : json(""), sc.schur_bound});
      reports.push_back(to_json(n));
    }
  }
  if (u.name == "decaying" && c.eps.size() > 1) {
    // Weights over (x, y, q, p); x and y are sampled at a single point.
    RVec m = RVec::Zero(4 * c.d);
    m.segment(2 * c.d, c.d).setConstant(-u.params.value("mq", 2.0));
    m.tail(c.d).setConstant(-u.params.value("mp", 2.0));
    Box region = Box::symmetric(4 * c.d, o.grid.region);
    region.lo.head(2 * c.d).setZero();
    region.hi.head(2 * c.d).setZero();
    const SweepReport sw = verify_crude_bounds(
        [&](double eps) { return FioSpec{kappa, u, c.theta_x, c.theta_y, eps}; }, c.eps, m, region,
        MeasureOptions{o.grid, false});
    r.check("crude1-scaling", sw.statistic, sw.limit);
    for (const auto& row : sw.rows) r.table.add({row.parameter, "crude1", row.measured, "", "", row.normalized});
  }
  r.summary = {{"reports", reports}};
  return r;
}

inline ExperimentResult adjoint_check(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const CanonicalMap kappa = build_map(c.d, c.kappa);
  const SymbolSpec u = build_symbol(c.d, c.symbol);
  const double tol = c.tol("adjoint", 1e-4);
  DiscretizationOptions g;
  g.safety = c.safety;
  g.region = c.options.value("region", 1.5);
  r.table = CsvTable({"eps", "grid_points", "phase_re", "phase_im", "relative_residual", "norm", "adjoint_norm"});
  for (double eps : c.eps) {
    const FioSpec s{kappa, u, c.theta_x, c.theta_y, eps};
    const FioSpec a = adjoint_spec(s);
    const Discretization disc = discretize({s, a}, g);
    const CMat kh = disc.kernels[0].adjoint();
    const CMat& ka = disc.kernels[1];
    const cplx ip = (kh.conjugate().cwiseProduct(ka)).sum();
    const cplx phase = std::abs(ip) > 0 ? ip / std::abs(ip) : cplx(1.0);
    const double res = (ka - phase * kh).norm() / std::max(kh.norm(), 1e-300);
    const double n1 = operator_norm(disc.weighted(0)).value, n2 = operator_norm(disc.weighted(1)).value;
    r.table.add({eps, disc.grid.size(), phase.real(), phase.imag(), res, n1, n2});
    std::ostringstream tag;
    tag << "eps=" << eps;
    r.check("adjoint-residual[" + tag.str() + "]", res, tol, {{"phase", {phase.real(), phase.imag()}}});
    r.check("adjoint-norm[" + tag.str() + "]", std::abs(n1 - n2) / std::max(n1, 1e-300), c.tol("adjoint_norm", 1e-4));
  }
  return r;
}

inline ExperimentResult separation(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const CanonicalMap kappa = build_map(c.d, c.kappa);
  const double rad = c.options.value("radius", 0.15);
  std::vector<double> shifts = c.options.value("shifts", std::vector<double>{1.3, 1.8, 2.3, 2.8, 3.3});
  const double tol = c.tol("slope", 0.25);
  DiscretizationOptions g;
  g.safety = c.safety;
  r.table = CsvTable({"eps", "shift", "separation", "norm", "used_in_fit"});
  json fits = json::array();
  for (double eps : c.eps) {
    const FioSpec su{kappa, symbols::bump(c.d, 1.0, RVec::Zero(2 * c.d), rad), c.theta_x, c.theta_y, eps};
    const DecayReport d = separation_decay(
        su,
        [&](double sh) {
          RVec z0 = RVec::Zero(2 * c.d);
          z0(0) = sh;
          return symbols::bump(c.d, 1.0, z0, rad);
        },
        shifts, tol, g);
    for (const auto& row : d.rows) r.table.add({eps, row.shift, row.separation, row.norm, row.used});
    std::ostringstream tag;
    tag << "eps=" << eps;
    r.check("decay-slope[" + tag.str() + "]", d.relative_error, tol, {{"slope", d.slope}, {"expected", d.expected}});
    fits.push_back({{"eps", eps}, {"slope", d.slope}, {"expected", d.expected}});
  }
  r.summary = {{"fits", fits}};
  return r;
}

inline ComplexSymMatrix random_width(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  RMat a(d, d), b(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      a(i, j) = g(rng);
      b(i, j) = g(rng);
    }
  RMat re = a * a.transpose() / d + 0.1 * RMat::Identity(d, d);
  RMat im = b + b.transpose();
  return ComplexSymMatrix::from_parts(re, im);
}

inline ExperimentResult matrix_sqrt(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const int samples = c.options.value("samples", 500);
  const double tol = c.tol("sqrt", 1e-12);
  std::mt19937_64 rng(c.seed);
  double worst = 0.0, worst_re = INFINITY;
  r.table = CsvTable({"instance", "d", "relative_residual", "min_eig_real_part"});
  for (int s = 0; s < samples; ++s) {
    const int d = 1 + s % 4;
    const ComplexSymMatrix m = random_width(d, rng);
    const ComplexSymMatrix root = principal_sqrt(m);
    const double res = (root.entries() * root.entries() - m.entries()).norm() / m.entries().norm();
    const double mine = detail::real_sym_eig(root.real()).values.minCoeff();
    worst = std::max(worst, res);
    worst_re = std::min(worst_re, mine);
    r.table.add({s, d, res, mine});
  }
  r.check("sqrt-residual", worst, tol);
  r.check("sqrt-real-part-pd", -worst_re, 0.0);
  // Gaussian normalisation against a tensor trapezoid rule in d = 1, 2.
  double gauss = 0.0;
  for (int s = 0; s < 20; ++s) {
    const int d = 1 + s % 2;
    const ComplexSymMatrix m = random_width(d, rng);
    const double eps = 0.5;
    const double w = std::sqrt(eps / m.lambda());
    const double h = 0.5 * std::sqrt(eps / m.gamma_eff());
    const GridLayout grid = GridLayout::cube(d, -12 * w, 12 * w, static_cast<int>(std::ceil(24 * w / h)) + 1);
    cplx sum = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) sum += std::exp(-0.5 * m.quad(grid.node(k)) / eps);
    sum *= grid.weight() * std::pow(2 * kPi * eps, -0.5 * d);
    gauss = std::max(gauss, std::abs(sum - gaussian_value(m, eps, d)) / std::abs(sum));
  }
  r.check("gaussian-normalisation", gauss, c.tol("gaussian", 1e-8));
  r.summary = {{"worst_residual", worst}, {"min_real_eig", worst_re}, {"gaussian_error", gauss}};
  return r;
}

inline RMat random_symplectic(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  RMat f = RMat::Identity(2 * d, 2 * d);
  for (int k = 0; k < 3; ++k) {
    RMat s(d, d), a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        s(i, j) = 0.5 * g(rng);
        a(i, j) = 0.3 * g(rng);
      }
    s = 0.5 * (s + s.transpose()).eval();
    a += RMat::Identity(d, d);
    RMat up = RMat::Identity(2 * d, 2 * d), lo = RMat::Identity(2 * d, 2 * d), di = RMat::Zero(2 * d, 2 * d);
    up.topRightCorner(d, d) = s;
    lo.bottomLeftCorner(d, d) = -s;
    di.topLeftCorner(d, d) = a;
    di.bottomRightCorner(d, d) = a.inverse().transpose();
    f = up * di * lo * f;
  }
  return f;
}

inline ExperimentResult symplectic_check(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  std::mt19937_64 rng(c.seed);
  const int samples = c.options.value("samples", 100);
  r.table = CsvTable({"check", "instance", "value"});
  double wres = 0.0, cond = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int d = 1 + s % 3;
    const RMat f = random_symplectic(d, rng);
    const ComplexSymMatrix tx = random_width(d, rng), ty = random_width(d, rng);
    const double res = w_identity_residual(f, tx, ty);
    const auto sv = Eigen::JacobiSVD<CMat>(w_matrix(f, tx, ty)).singularValues();
    const double k = sv(0) / sv(sv.size() - 1);
    wres = std::max(wres, res);
    cond = std::max(cond, k);
    r.table.add({"w_identity", s, res});
    r.table.add({"w_condition", s, k});
  }
  r.check("w-identity", wres, c.tol("w_identity", 1e-10));
  r.check("w-condition", cond, c.tol("w_condition", 1e12));
  // The configured map.
  const CanonicalMap kappa = build_map(c.d, c.kappa);
  const Box region = Box::symmetric(2 * c.d, c.options.value("region", 2.0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PhasePoint> pts;
  for (int s = 0; s < 100; ++s) {
    RVec z(2 * c.d);
    for (int j = 0; j < 2 * c.d; ++j) z(j) = region.lo(j) + unit(rng) * (region.hi(j) - region.lo(j));
    pts.push_back(PhasePoint::from_stacked(z));
  }
  double jac = 0.0, act = 0.0;
  for (const auto& z : pts) {
    jac = std::max(jac, is_symplectic(kappa(z).F, 1e-8).residual);
    act = std::max(act, action_residual(kappa, z));
  }
  r.check("jacobian-symplectic", jac, c.tol("jacobian", 1e-8));
  r.check("action-identity", act, c.tol("action", 1e-5));
  const double inv = cocycle_spread(identity_map(c.d), invert(kappa), kappa, pts);
  r.check("action-inverse-cocycle", inv, c.tol("cocycle", 1e-7));
  if (kappa.kind() == MapKind::flow) {
    const FlowData& fd = *kappa.flow;
    const CanonicalMap half = hamiltonian_flow(fd.h, 0.5 * fd.t, fd.step);
    r.check("action-flow-cocycle", cocycle_spread(kappa, half, half, pts), c.tol("cocycle", 1e-7));
  } else if (kappa.kind() == MapKind::linear) {
    const CanonicalMap sq = linear_map(kappa.linear_matrix * kappa.linear_matrix);
    r.check("action-linear-cocycle", cocycle_spread(sq, kappa, kappa, pts), c.tol("cocycle", 1e-7));
  }
  const ClassBReport cb = class_b_report(kappa, region, 200, c.seed);
  r.summary = {{"class_b",
                {{"M0", cb.M0}, {"M1", cb.M1}, {"c_lower", cb.c_lower}, {"pairs", cb.pairs}, {"violations", cb.violations}}}};
  return r;
}

inline ExperimentResult full_theorem(const ExperimentConfig& c) {
  ExperimentResult r;
  r.experiment = c.experiment;
  const CanonicalMap kappa = build_map(c.d, c.kappa);
  const SymbolSpec u = build_symbol(c.d, c.symbol);
  MeasureOptions o = measure_options(c);
  o.check_refinement = false;
  const double factor = c.tol("ratio", 2.0);
  const SweepReport sw = verify_full_theorem([&](double eps) { return FioSpec{kappa, u, c.theta_x, c.theta_y, eps}; },
                                             c.eps, factor, o);
  r.table = CsvTable({"eps", "measured", "ratio_to_first"});
  for (const auto& row : sw.rows) r.table.add({row.parameter, row.measured, row.normalized});
  r.check("eps-uniformity", sw.statistic, sw.limit);
  const Box region = Box::symmetric(2 * c.d, o.grid.region);
  const EtaEstimate eta = eta_fixed(kappa, c.theta_x, c.theta_y, region);
  r.summary = {{"eta", {{"kappa0_identity", eta.at_identity}, {"kappa0_kappa", eta.at_kappa}}}};
  return r;
}

}  // namespace experiments

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  const std::string& e = c.experiment;
  if (e == "fbi-isometry") return experiments::transform(c, false);
  if (e == "reconstruct") return experiments::transform(c, true);
  if (e == "identity-op") return experiments::identity_op(c);
  if (e == "norm-bounds") return experiments::norm_bounds(c);
  if (e == "adjoint-check") return experiments::adjoint_check(c);
  if (e == "separation-decay") return experiments::separation(c);
  if (e == "matrix-sqrt") return experiments::matrix_sqrt(c);
  if (e == "symplectic-check") return experiments::symplectic_check(c);
  if (e == "full-theorem") return experiments::full_theorem(c);
  throw ConfigError("experiment: unknown name '" + e + "'");
}

/// Writes report.json and data.csv into dir (created if needed).
inline void write_outputs(const std::string& dir, const ExperimentConfig& c, const ExperimentResult& r,
                          const std::string& timestamp = timestamp_utc()) {
  std::filesystem::create_directories(dir);
  std::ofstream rep(std::filesystem::path(dir) / "report.json");
  rep << report_json(c, r, timestamp).dump(2) << "\n";
  std::ofstream csv(std::filesystem::path(dir) / "data.csv", std::ios::binary);
  csv << r.table.str();
  if (!rep || !csv) throw Error("cannot write outputs to '" + dir + "'");
}

}  // namespace fiokit
