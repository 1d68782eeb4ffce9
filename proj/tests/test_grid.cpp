#include <gtest/gtest.h>

#include "fiokit/grid.hpp"

using namespace fiokit;

TEST(GridLayout, NodesAndIndexing) {
  const GridLayout g(RVec::Constant(2, -1.0), RVec::Constant(2, 1.0), Eigen::Vector2i(5, 3));
  EXPECT_EQ(g.size(), 15u);
  EXPECT_EQ(g.stride(0), 3u);
  EXPECT_DOUBLE_EQ(g.spacing(0), 0.5);
  EXPECT_DOUBLE_EQ(g.weight(), 0.5);
  const RVec x = g.node(7);  // (i0, i1) = (2, 1)
  EXPECT_DOUBLE_EQ(x(0), 0.0);
  EXPECT_DOUBLE_EQ(x(1), 0.0);
  EXPECT_EQ(g.multi_index(14), (std::vector<int>{4, 2}));
  const auto w = g.window(0, 0.1, 0.6);
  EXPECT_EQ(w.first, 1);
  EXPECT_EQ(w.second, 3);
  EXPECT_THROW(GridLayout(RVec::Constant(1, 1.0), RVec::Constant(1, 0.0), Eigen::VectorXi::Constant(1, 4)),
               InvalidArgument);
  EXPECT_THROW(GridLayout::cube(1, 0.0, 1.0, 1), InvalidArgument);
}

TEST(GridLayout, RefinedKeepsOldNodes) {
  const GridLayout g = GridLayout::cube(1, -2.0, 3.0, 11);
  const GridLayout f = g.refined(2);
  EXPECT_EQ(f.n(0), 21);
  for (int i = 0; i < g.n(0); ++i) EXPECT_NEAR(f.coord(0, 2 * i), g.coord(0, i), 1e-15);
  EXPECT_TRUE(g.scaled(2.0).scaled(0.5).same_as(g));
}

TEST(GridFunction, NormInnerAndSupport) {
  const GridLayout g = GridLayout::cube(1, -10.0, 10.0, 2001);
  const GridFunction f = sample(g, [](const RVec& x) { return cplx(std::exp(-0.5 * x(0) * x(0))); });
  EXPECT_NEAR(f.norm() * f.norm(), std::sqrt(kPi), 1e-12);
  EXPECT_NEAR(f.inner(f).real(), std::sqrt(kPi), 1e-12);
  const Box b = estimate_support(f, 1e-10);
  EXPECT_NEAR(b.hi(0), std::sqrt(2 * std::log(1e10)), 0.02);
  EXPECT_NEAR(b.lo(0), -b.hi(0), 1e-12);
}

TEST(Container, JsonRoundTrip) {
  const GridLayout g(RVec::Constant(2, -1.0), RVec::Constant(2, 2.0), Eigen::Vector2i(4, 3));
  const GridFunction f = sample(g, [](const RVec& x) { return cplx(x(0), x(1) * x(1)); });
  const nlohmann::json j = to_json(f);
  EXPECT_EQ(j["type"], "GridFunction");
  EXPECT_EQ(j["values"].size(), 2 * g.size());
  const GridFunction back = grid_function_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_TRUE(back.layout.same_as(g));
  EXPECT_EQ(back.values, f.values);

  const PhaseSpaceLayout ps{GridLayout::cube(1, 0.0, 1.0, 3), GridLayout::cube(1, -1.0, 1.0, 5)};
  PhaseSpaceField h = PhaseSpaceField::zeros(ps);
  h.values(7) = cplx(1.5, -2.0);
  const PhaseSpaceField hb = phase_space_field_from_json(to_json(h));
  EXPECT_EQ(hb.values, h.values);
  EXPECT_THROW(grid_function_from_json(to_json(h)), InvalidArgument);
}

TEST(PhaseSpaceLayout, NodeOrdering) {
  const PhaseSpaceLayout ps{GridLayout::cube(1, 0.0, 2.0, 3), GridLayout::cube(1, -3.0, 1.0, 5)};
  const PhasePoint z = ps.node(1 * 5 + 4);
  EXPECT_DOUBLE_EQ(z.q(0), 1.0);
  EXPECT_DOUBLE_EQ(z.p(0), 1.0);
  EXPECT_DOUBLE_EQ(ps.p_max(), 3.0);
  EXPECT_DOUBLE_EQ(ps.weight(), 1.0);
}
