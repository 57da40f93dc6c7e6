#include <gtest/gtest.h>

#include "wonham/grid.hpp"

using namespace wonham;

TEST(Grid, Shape) {
  const SpatialGrid g(2, 2.0, 0.25);
  EXPECT_EQ(g.per_axis(), 9u);
  EXPECT_EQ(g.size(), 81u);
  EXPECT_EQ(g.unit_cells(), 4u);
  const auto x = g.coords(g.index(std::vector<std::size_t>{3, 5}));
  EXPECT_DOUBLE_EQ(x[0], 0.75);
  EXPECT_DOUBLE_EQ(x[1], 1.25);
}

TEST(Grid, RejectsIncompatibleSpacing) {
  EXPECT_THROW(SpatialGrid(2, 2.0, 0.3), Error);
  EXPECT_THROW(SpatialGrid(2, 0.5, 0.25), Error);
}

TEST(Grid, InterpolationIsExactForLinearFunctions) {
  const SpatialGrid g(3, 2.0, 0.25);
  std::vector<double> v(g.size());
  const double c[3] = {0.3, -1.2, 2.0};
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto x = g.coords(n);
    v[n] = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
  }
  for (const auto& y : std::vector<std::vector<double>>{
           {0.1, 0.37, 1.9}, {2.0, 2.0, 0.0}, {0.0, 0.0, 0.0}, {2.7, 0.4, 0.2}, {3.1, 4.2, 0.5}})
    EXPECT_NEAR(g.interpolate(v, y), c[0] * y[0] + c[1] * y[1] + c[2] * y[2], 1e-12);
}

TEST(Grid, StencilRejectsPointsOutsideTheCone) {
  const SpatialGrid g(2, 2.0, 0.25);
  std::vector<StencilEntry> out;
  EXPECT_THROW(g.stencil(std::vector<double>{-0.1, 0.5}, 1.0, out), Error);
}

TEST(Grid, NearestSimplexNode) {
  const SpatialGrid g(3, 2.0, 0.1);
  const auto node = g.nearest_simplex_node(std::vector<double>{0.333, 0.333, 0.334});
  EXPECT_TRUE(g.on_simplex(node));
  const auto x = g.coords(node);
  EXPECT_NEAR(x[0] + x[1] + x[2], 1.0, 1e-12);
  // Scale invariance of the lookup.
  EXPECT_EQ(g.nearest_simplex_node(std::vector<double>{0.2, 0.5, 0.3}),
            g.nearest_simplex_node(std::vector<double>{2.0, 5.0, 3.0}));
  const auto y = g.coords(g.nearest_simplex_node(std::vector<double>{0.2, 0.5, 0.3}));
  EXPECT_NEAR(y[0], 0.2, 1e-12);
  EXPECT_NEAR(y[1], 0.5, 1e-12);
}
