#include <gtest/gtest.h>

#include <filesystem>

#include "helpers.hpp"
#include "msym/errors.hpp"
#include "msym/fields.hpp"

using namespace msym;
using namespace msym::test;

TEST(Grid, ValidateRejectsDegenerateSetups) {
  SpaceTimeGrid g = fixed_line(5, 0.1);
  g.nodes = {2};
  EXPECT_THROW(g.validate(), ConfigError);
  g = fixed_line(5, 0.1);
  g.dt = 0.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = fixed_line(5, 0.1);
  g.hi = {0.0};
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Grid, SpacingAndCounts) {
  const SpaceTimeGrid p = periodic_square(8, 0.1, 4.0);
  EXPECT_DOUBLE_EQ(p.spacing(0), 0.5);
  EXPECT_EQ(p.num_cells(), 64);
  EXPECT_EQ(p.num_nodes(), 64);
  const SpaceTimeGrid f = fixed_line(5, 0.1);
  EXPECT_DOUBLE_EQ(f.spacing(0), 0.25);
  EXPECT_EQ(f.num_cells(), 4);
  EXPECT_TRUE(f.on_fixed_boundary(0));
  EXPECT_TRUE(f.on_fixed_boundary(4));
  EXPECT_FALSE(f.on_fixed_boundary(2));
  EXPECT_EQ(f.cells_at_node(0), 1);
  EXPECT_EQ(f.cells_at_node(2), 2);
}

TEST(Grid, NodeIndexRoundTrip) {
  const SpaceTimeGrid g = polar_annulus(5, 7, 0.1);
  for (int n = 0; n < g.num_nodes(); ++n) EXPECT_EQ(g.node_index(g.node_multi(n)), n);
  for (int c = 0; c < g.num_cells(); ++c) EXPECT_EQ(g.cell_index(g.cell_multi(c)), c);
}

TEST(Grid, CornersAndIncidenceAreConsistent) {
  const SpaceTimeGrid g = periodic_square(4, 0.1);
  std::vector<int> count(g.num_nodes(), 0);
  for (int c = 0; c < g.num_cells(); ++c) {
    const auto cc = cell_corners(g, c);
    ASSERT_EQ(static_cast<int>(cc.size()), 4);
    for (const auto& e : cc) ++count[e.node];
  }
  for (int n = 0; n < g.num_nodes(); ++n) {
    EXPECT_EQ(count[n], 4);
    const auto inc = node_cells(g, n);
    EXPECT_EQ(static_cast<int>(inc.size()), 4);
    for (const auto& [cell, slot] : inc) EXPECT_EQ(cell_corners(g, cell)[slot].node, n);
  }
}

TEST(Field, PeriodicSeamOffsetsMakeIdentitySmooth) {
  const SpaceTimeGrid g = periodic_square(6, 0.1);
  const ConfigurationField f =
      sample_section(g, 2, 3, [](const Vec& x, double) { return x; }, deformation_offsets(g));
  for (int n = 0; n < g.num_nodes(); ++n) {
    const JetSample s = jet_extend(g, f, n, 1);
    EXPECT_LT(max_abs(s.F() - Mat::Identity(2, 2)), 1e-12);
    EXPECT_LT(max_abs(s.vdot()), 1e-12);
  }
}

TEST(Field, JetExtendIsSecondOrderForQuadratics) {
  // Central and one-sided stencils are exact on quadratics.
  const SpaceTimeGrid g = fixed_line(7, 0.2);
  auto fn = [](const Vec& x, double t) { return Vec::Constant(1, 1.0 + 0.5 * x[0] * x[0] + 0.3 * t * t + x[0] * t); };
  const ConfigurationField f = sample_section(g, 1, 3, fn, zero_offsets(g, 1));
  for (int lvl = 0; lvl < 3; ++lvl)
    for (int n = 0; n < g.num_nodes(); ++n) {
      const JetSample s = jet_extend(g, f, n, lvl);
      const double x = s.x[0], t = s.t;
      EXPECT_NEAR(s.F()(0, 0), x + t, 1e-12);
      EXPECT_NEAR(s.vdot()[0], 0.6 * t + x, 1e-12);
    }
}

TEST(Field, ValueAtRejectsLeavingFixedAxis) {
  const SpaceTimeGrid g = fixed_line(5, 0.1);
  const ConfigurationField f = sample_section(g, 1, 2, [](const Vec& x, double) { return x; }, zero_offsets(g, 1));
  EXPECT_THROW(f.value_at(g, 0, Index3{-1, 0, 0}), IndexError);
}

TEST(Field, CellJetOfAffineMapIsExact) {
  const SpaceTimeGrid g = periodic_square(5, 0.1);
  const Mat A = mat2(1.2, 0.3, -0.1, 0.9);
  const ConfigurationField f = sample_section(
      g, 2, 2, [&](const Vec& x, double) { return Vec(A * x); },
      {Vec(A.col(0) * 2.0 * M_PI), Vec(A.col(1) * 2.0 * M_PI)});
  for (int c = 0; c < g.num_cells(); ++c) {
    const CellJet cj = cell_jet(g, c, f.cell_values(g, 0, c));
    EXPECT_LT(max_abs(cj.F - A), 1e-12);
    EXPECT_LT(max_abs(cj.ybar - A * cj.xc), 1e-12);
  }
}

TEST(Field, LambdaAveragingAndMissingMultiplier) {
  const SpaceTimeGrid g = periodic_square(4, 0.1);
  ConfigurationField f = sample_section(g, 2, 2, [](const Vec& x, double) { return x; }, deformation_offsets(g));
  f.lambda_layout = LambdaLayout::cell;
  f.lambda = {Eigen::VectorXd::Constant(g.num_cells(), 2.5), Eigen::VectorXd()};
  EXPECT_LT(max_abs(lambda_at_nodes(g, f, 0).array() - 2.5), 1e-15);
  EXPECT_THROW(lambda_at_nodes(g, f, 1), MissingMultiplier);
}

TEST(Field, RegularityFloor) {
  JetSample s = make_jet(vec2(0, 0), 0.0, vec2(0, 0), vec2(0, 0), mat2(1, 0, 0, 1e-12));
  EXPECT_FALSE(regularity_check(s));
  s.v.rightCols(2) = Mat::Identity(2, 2);
  EXPECT_TRUE(regularity_check(s));
}

TEST(Field, SnapshotRoundTripKeepsFullPrecision) {
  const SpaceTimeGrid g = periodic_square(4, 0.1);
  ConfigurationField f =
      sample_section(g, 2, 2, [](const Vec& x, double) { return Vec(x + vec2(1.0 / 3.0, std::sqrt(2.0))); },
                     deformation_offsets(g));
  const auto path = std::filesystem::temp_directory_path() / "msym_snapshot_test.csv";
  write_snapshot_csv(path.string(), g, f, 0);
  const Snapshot s = read_snapshot_csv(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(s.rows.rows(), g.num_nodes());
  EXPECT_EQ(s.header[2], "phi0");
  for (int n = 0; n < g.num_nodes(); ++n) {
    EXPECT_EQ(s.rows(n, 2), f.phi[0](0, n));
    EXPECT_EQ(s.rows(n, 3), f.phi[0](1, n));
  }
}
