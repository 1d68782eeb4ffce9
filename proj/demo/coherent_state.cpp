// Pushes a coherent state through the harmonic-oscillator FIO and prints
// where it lands in phase space.

#include <cstdio>

#include "fiokit/fiokit.hpp"

int main() {
  using namespace fiokit;
  const double eps = 0.1;
  const ComplexSymMatrix theta = ComplexSymMatrix::identity(1);
  const CanonicalMap kappa = hamiltonian_flow(hamiltonians::harmonic(1), 0.8, 0.01);
  const FioSpec op{kappa, symbols::constant(1, 1.0), theta, theta, eps};

  const RVec q0 = RVec::Constant(1, 1.0), p0 = RVec::Constant(1, 0.0);
  // Resolve momenta up to |p| = 10, which covers the operator's phase-space grid.
  const int n = static_cast<int>(8.0 / (resolution_spacing(eps, theta, 10.0) / 1.5)) + 1;
  const GridLayout grid = GridLayout::cube(1, -4.0, 4.0, n);
  const GridFunction g = coherent_state(eps, theta, q0, p0, grid);
  const GridFunction out = apply_fio(op, g);

  const MapValue target = kappa(PhasePoint(q0, p0));
  const GridFunction expect = coherent_state(eps, theta, target.image.q, target.image.p, grid);
  std::printf("kappa(1, 0) = (%.6f, %.6f)\n", target.image.q(0), target.image.p(0));
  std::printf("|I g| = %.6f   (expected 2^{-1/2} = %.6f)\n", out.norm(), std::sqrt(0.5));
  std::printf("|<g_kappa(z), I g_z>| = %.6f\n", std::abs(expect.inner(out)));
  return 0;
}
