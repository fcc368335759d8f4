#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "msym/errors.hpp"
#include "msym/geometry.hpp"

using namespace msym;
using namespace msym::test;

TEST(Metric, EuclideanIsIdentityAndConstant) {
  const MetricField m = MetricField::euclidean(2);
  EXPECT_TRUE(m.is_constant());
  EXPECT_EQ(m.eval(vec2(0.3, -4.0)), Mat::Identity(2, 2));
  for (const Mat& d : m.deriv(vec2(1.0, 2.0))) EXPECT_EQ(max_abs(d), 0.0);
}

TEST(Metric, ConformalConstantScalesByFactorSquared) {
  const MetricField m = MetricField::conformal_constant(2, 2.0);
  EXPECT_EQ(m.eval(vec2(0.1, 0.2)), 4.0 * Mat::Identity(2, 2));
  EXPECT_DOUBLE_EQ(metric_det_sqrt(m, vec2(0.1, 0.2)), 4.0);
  EXPECT_THROW(MetricField::conformal_constant(2, 0.0), SingularMetric);
}

TEST(Metric, PolarValuesAndDerivative) {
  const MetricField m = MetricField::polar();
  const Vec x = vec2(1.5, 0.7);
  EXPECT_EQ(m.eval(x), mat2(1.0, 0.0, 0.0, 2.25));
  EXPECT_DOUBLE_EQ(metric_det_sqrt(m, x), 1.5);
  // d g / d r against a central difference of eval.
  const double h = 1e-6;
  const Mat fd = (m.eval(vec2(1.5 + h, 0.7)) - m.eval(vec2(1.5 - h, 0.7))) / (2 * h);
  EXPECT_LT(max_abs(m.deriv(x)[0] - fd), 1e-8);
  EXPECT_EQ(max_abs(m.deriv(x)[1]), 0.0);
  EXPECT_THROW(m.eval(vec2(1e-4, 0.0)), DomainError);
}

TEST(Christoffel, PolarMatchesClosedForm) {
  const MetricField m = MetricField::polar();
  for (double r : {1.0, 1.7, 3.2}) {
    const ChristoffelValue G = christoffel(m, vec2(r, 0.4));
    EXPECT_NEAR(G(0, 1, 1), -r, 1e-14);
    EXPECT_NEAR(G(1, 0, 1), 1.0 / r, 1e-14);
    EXPECT_NEAR(G(1, 1, 0), 1.0 / r, 1e-14);
    EXPECT_NEAR(G(0, 0, 0), 0.0, 1e-14);
    EXPECT_NEAR(G(1, 1, 1), 0.0, 1e-14);
  }
}

TEST(Christoffel, FlatMetricVanishes) {
  const ChristoffelValue G = christoffel(MetricField::euclidean(2), vec2(0.2, 0.3));
  for (int c = 0; c < 2; ++c) EXPECT_EQ(max_abs(G.gamma[c]), 0.0);
}

TEST(Christoffel, ConformalAgainstFiniteDifferenceOracle) {
  // g = c(x)^2 delta with c = 1 + 0.3 x0 + 0.1 x1^2.
  auto c = [](const Vec& x) { return 1.0 + 0.3 * x[0] + 0.1 * x[1] * x[1]; };
  auto gc = [](const Vec& x) { return vec2(0.3, 0.2 * x[1]); };
  const MetricField m = MetricField::conformal(2, c, gc);
  const Vec x = vec2(0.4, 0.9);
  const double h = 1e-5;
  std::array<Mat, kMaxDim> dm;
  for (int k = 0; k < 2; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    dm[k] = (m.eval(xp) - m.eval(xm)) / (2 * h);
  }
  const ChristoffelValue a = christoffel(m, x), b = christoffel_from(m.eval(x), dm);
  for (int k = 0; k < 2; ++k) EXPECT_LT(max_abs(a.gamma[k] - b.gamma[k]), 1e-8);
}

TEST(Christoffel, CovariantAccelerationOfCircularMotion) {
  // y = (r, w t): covariant acceleration (-r w^2, 0) in the polar chart.
  const double r = 1.3, w = 0.8;
  const Vec a = covariant_accel(MetricField::polar(), vec2(r, 0.5), vec2(0.0, w), vec2(0.0, 0.0));
  EXPECT_NEAR(a[0], -r * w * w, 1e-14);
  EXPECT_NEAR(a[1], 0.0, 1e-14);
}

TEST(MetricTable, RoundTripAndInterpolatesPolar) {
  MetricTable t;
  t.dim = 2;
  t.nodes = {21, 11};
  t.lo = {1.0, 0.0};
  t.hi = {2.0, 1.0};
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 11; ++j) {
      const double r = 1.0 + i * 0.05;
      for (double v : {1.0, 0.0, 0.0, r * r}) t.values.push_back(v);
    }
  const auto path = std::filesystem::temp_directory_path() / "msym_metric_table_test.txt";
  write_metric_table(path.string(), t);
  const MetricTable back = read_metric_table(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(back.values.size(), t.values.size());
  const MetricField m = MetricField::from_table(back);
  const MetricField p = MetricField::polar();
  for (const Vec& x : {vec2(1.23, 0.31), vec2(1.77, 0.9), vec2(1.5, 0.5)}) {
    // Cubic interpolation reproduces the quadratic r^2 exactly.
    EXPECT_LT(max_abs(m.eval(x) - p.eval(x)), 1e-12);
    EXPECT_LT(max_abs(m.deriv(x)[0] - p.deriv(x)[0]), 1e-6);
    const ChristoffelValue a = christoffel(m, x), b = christoffel(p, x);
    EXPECT_LT(max_abs(a.gamma[0] - b.gamma[0]), 1e-6);
  }
  EXPECT_THROW(m.eval(vec2(2.5, 0.5)), DomainError);
}

TEST(MetricTable, RejectsMalformedInput) {
  MetricTable t;
  t.dim = 1;
  t.nodes = {3};
  t.lo = {0.0};
  t.hi = {1.0};
  t.values = {1.0, 1.0, 1.0};
  EXPECT_THROW(MetricField::from_table(t), ShapeError);
  EXPECT_THROW(read_metric_table("/nonexistent/metric.txt"), ConfigError);
}

TEST(MetricTable, SingularEntriesAreReported) {
  MetricTable t;
  t.dim = 1;
  t.nodes = {5};
  t.lo = {0.0};
  t.hi = {1.0};
  t.values = {1.0, 1.0, 0.0, 1.0, 1.0};
  const MetricField m = MetricField::from_table(t);
  EXPECT_THROW(m.check_regular(Vec::Constant(1, 0.5)), SingularMetric);
}
