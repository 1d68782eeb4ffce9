#pragma once

// Fixed family of test functions used by the transform and operator
// experiments. In d > 1 each function is the tensor product of its 1-D
// profile over all axes.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fiokit/fbi.hpp"
#include "fiokit/fio.hpp"

namespace fiokit {

struct TestFunction {
  std::string name;
  std::function<cplx(double x, double eps)> profile;
  double radius = 9.0;      // |profile| < 1e-12 outside [-radius, radius]
  double momentum = 0.0;    // eps-independent momentum offset
  double frequency = 8.0;   // eps-independent angular-frequency content
};

inline const std::vector<TestFunction>& test_functions() {
  static const std::vector<TestFunction> fns = [] {
    auto g = [](double x) { return std::exp(-0.5 * x * x); };
    std::vector<TestFunction> v;
    v.push_back({"hermite0", [g](double x, double) { return cplx(g(x)); }, 8.0, 0.0, 8.0});
    v.push_back({"hermite1", [g](double x, double) { return cplx(2 * x * g(x)); }, 8.5, 0.0, 8.0});
    v.push_back({"hermite2", [g](double x, double) { return cplx((4 * x * x - 2) * g(x)); }, 9.0, 0.0, 9.0});
    v.push_back({"hermite3", [g](double x, double) { return cplx((8 * x * x * x - 12 * x) * g(x)); }, 9.0, 0.0, 9.0});
    v.push_back({"chirp", [g](double x, double) { return g(x) * std::polar(1.0, 0.5 * x * x); }, 8.0, 0.0, 14.0});
    v.push_back({"modulated",
                 [](double x, double eps) { return std::exp(-0.5 * (x - 0.5) * (x - 0.5)) * std::polar(1.0, x / eps); },
                 8.5, 1.0, 8.0});
    v.push_back({"cat", [g](double x, double) { return cplx(g(x - 1.5) + g(x + 1.5)); }, 10.0, 0.0, 8.0});
    v.push_back({"narrow", [](double x, double) { return cplx(std::exp(-2 * x * x)); }, 4.5, 0.0, 16.0});
    v.push_back({"sech", [](double x, double) { return std::polar(1.0 / std::cosh(2 * x), 0.5 * x); }, 15.0, 0.0, 32.0});
    v.push_back({"wave", [](double x, double) { return cplx(x * std::exp(-0.25 * x * x) * std::cos(2 * x)); }, 11.0, 0.0,
                 10.0});
    return v;
  }();
  return fns;
}

inline const TestFunction& test_function(const std::string& name) {
  for (const auto& f : test_functions())
    if (f.name == name) return f;
  throw InvalidArgument("unknown test function '" + name + "'");
}

inline cplx evaluate(const TestFunction& f, const RVec& x, double eps) {
  cplx v = 1.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) v *= f.profile(x(k), eps);
  return v;
}

inline GridFunction sample(const TestFunction& f, double eps, const GridLayout& layout) {
  return sample(layout, [&](const RVec& x) { return evaluate(f, x, eps); });
}

/// Phase-space box of f, from a sample on a grid resolving its frequency content.
inline Box phase_space_box(const TestFunction& f, double eps, int d) {
  const double w = f.frequency + f.momentum / eps;
  const double h = kPi / (2.0 * w);
  const GridLayout pre = detail::layout_for_box(RVec::Constant(d, -f.radius), RVec::Constant(d, f.radius), h);
  return estimate_phase_space_box(sample(f, eps, pre), eps, 1e-10);
}

/// Grids for f under the FBI transform with width matrix theta.
inline TransformLayouts layouts_for(const TestFunction& f, double eps, const ComplexSymMatrix& theta, double safety = 1.5) {
  return auto_layouts(eps, theta, phase_space_box(f, eps, theta.dim()), safety);
}

}  // namespace fiokit
