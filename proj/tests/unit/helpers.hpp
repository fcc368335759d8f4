#pragma once

#include <Eigen/LU>
#include <cmath>
#include <random>

#include "msym/fields.hpp"
#include "msym/geometry.hpp"
#include "msym/material.hpp"

namespace msym::test {

inline SpaceTimeGrid periodic_square(int n, double dt, double L = 2.0 * M_PI) {
  SpaceTimeGrid g;
  g.n_space = 2;
  g.lo = {0.0, 0.0};
  g.hi = {L, L};
  g.nodes = {n, n};
  g.boundary = {BoundaryKind::periodic, BoundaryKind::periodic};
  g.dt = dt;
  g.validate();
  return g;
}

inline SpaceTimeGrid fixed_line(int n, double dt, double lo = 0.0, double hi = 1.0) {
  SpaceTimeGrid g;
  g.n_space = 1;
  g.lo = {lo};
  g.hi = {hi};
  g.nodes = {n};
  g.boundary = {BoundaryKind::fixed};
  g.dt = dt;
  g.validate();
  return g;
}

inline SpaceTimeGrid polar_annulus(int nr, int nt, double dt) {
  SpaceTimeGrid g;
  g.n_space = 2;
  g.lo = {1.0, 0.0};
  g.hi = {2.0, 2.0 * M_PI};
  g.nodes = {nr, nt};
  g.boundary = {BoundaryKind::fixed, BoundaryKind::periodic};
  g.dt = dt;
  g.validate();
  return g;
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(unsigned seed) : eng(seed) {}
  double uni(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  Mat near_identity(int n, double spread) {
    Mat F = Mat::Identity(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) F(a, b) += spread * uni();
    return F;
  }
  /// Random regular 2D jet with det F in roughly [0.5, 2].
  JetSample jet2(double x_lo = 1.0, double x_hi = 2.0) {
    Vec x = vec2(uni(x_lo, x_hi), uni(x_lo, x_hi));
    Vec y = x + 0.05 * vec2(uni(), uni());
    Mat F;
    do {
      F = near_identity(2, 0.3);
    } while (F.determinant() < 0.5 || F.determinant() > 2.0);
    JetSample s = make_jet(x, 0.0, y, vec2(uni(), uni()), F);
    s.lambda = uni();
    Vec beta(3);
    beta << uni(), uni(), uni();
    s.beta = beta;
    return s;
  }
};

inline MaterialModel flat_model(int n, StoredEnergy W, double rho = 1.0, bool incompressible = false) {
  return MaterialModel::uniform(rho, std::move(W), MetricField::euclidean(n), MetricField::euclidean(n), incompressible);
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace msym::test
