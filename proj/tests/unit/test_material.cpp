#include <gtest/gtest.h>

#include <Eigen/LU>

#include "helpers.hpp"
#include "msym/errors.hpp"
#include "msym/material.hpp"

using namespace msym;
using namespace msym::test;

namespace {

JetSample identity_jet(int n) {
  return make_jet(Vec::Zero(n), 0.0, Vec::Zero(n), Vec::Zero(n), Mat::Identity(n, n));
}

JetSample jet_with(const Mat& F, const Vec& vdot) {
  const int n = static_cast<int>(F.rows());
  return make_jet(Vec::Constant(n, 1.3), 0.0, Vec::Constant(n, 1.4), vdot, F);
}

std::vector<StoredEnergy> all_kinds() {
  return {StoredEnergy::constant(0.7), StoredEnergy::barotropic_quadratic(1.3), StoredEnergy::barotropic_log(0.8),
          StoredEnergy::stvenant(1.2, 0.9), StoredEnergy::neohookean(0.6, 1.1)};
}

double rel(const Mat& a, const Mat& b) { return max_abs(a - b) / std::max(1.0, max_abs(b)); }

}  // namespace

TEST(Jacobian, Examples) {
  auto m2 = flat_model(2, StoredEnergy::constant(0.0));
  EXPECT_DOUBLE_EQ(jacobian(m2, identity_jet(2)), 1.0);
  EXPECT_DOUBLE_EQ(jacobian(m2, jet_with(mat2(2, 0, 0, 3), vec2(0, 0))), 6.0);
  auto scaled = MaterialModel::uniform(1.0, StoredEnergy::constant(0.0), MetricField::euclidean(2),
                                       MetricField::conformal_constant(2, 2.0));
  // g = 4 delta.
  EXPECT_DOUBLE_EQ(jacobian(scaled, identity_jet(2)), 4.0);
  EXPECT_THROW(jacobian(m2, jet_with(mat2(-1, 0, 0, 1), vec2(0, 0))), NonRegular);
}

TEST(Deformation, GreenAndFingerTensors) {
  auto m = flat_model(2, StoredEnergy::constant(0.0));
  EXPECT_LT(max_abs(green_tensor(m, identity_jet(2)) - Mat::Identity(2, 2)), 1e-15);
  EXPECT_LT(max_abs(green_tensor(m, jet_with(mat2(2, 0, 0, 1), vec2(0, 0))) - mat2(4, 0, 0, 1)), 1e-15);
  EXPECT_LT(max_abs(finger_inverse(m, jet_with(mat2(2, 0, 0, 1), vec2(0, 0))) - mat2(0.25, 0, 0, 1)), 1e-15);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const JetSample s = rng.jet2();
    const Mat F = s.F();
    EXPECT_LT(max_abs(green_tensor(m, s) - F.transpose() * F), 1e-14);
    const Mat Fi = F.inverse();
    EXPECT_LT(max_abs(finger_inverse(m, s) - Fi.transpose() * Fi), 1e-13);
  }
}

TEST(Lagrangian, Examples) {
  auto free = flat_model(2, StoredEnergy::constant(0.0));
  EXPECT_DOUBLE_EQ(lagrangian_density(free, jet_with(Mat::Identity(2, 2), vec2(1, 0))), 0.5);
  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic());
  EXPECT_DOUBLE_EQ(lagrangian_density(gas, identity_jet(2)), 0.0);
  auto heavy = flat_model(2, StoredEnergy::constant(3.0), 2.0);
  EXPECT_DOUBLE_EQ(lagrangian_density(heavy, jet_with(Mat::Identity(2, 2), vec2(1, 1))), -4.0);
}

TEST(Legendre, Examples) {
  auto m = flat_model(2, StoredEnergy::constant(0.4));
  const Momenta p = legendre(m, jet_with(Mat::Identity(2, 2), vec2(1, 0)));
  EXPECT_LT(max_abs(p.p0 - vec2(1, 0)), 1e-15);
  EXPECT_LT(max_abs(p.pj), 1e-15);

  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic());
  EXPECT_LT(max_abs(legendre(gas, identity_jet(2)).pj), 1e-15);
}

TEST(Legendre, BarotropicMomentaMatchFiniteDifferences) {
  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic());
  const JetSample s = jet_with(mat2(2, 0, 0, 1), vec2(0.3, -0.2));
  const Momenta p = legendre(gas, s);
  // Closed form: -w'(J) J F^-T.
  const Mat closed = -1.0 * 2.0 * Mat(s.F().inverse().transpose());
  EXPECT_LT(max_abs(p.pj - closed), 1e-12);
  const double h = 1e-6;
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 2; ++j) {
      JetSample sp = s, sm = s;
      sp.v(a, 1 + j) += h;
      sm.v(a, 1 + j) -= h;
      const double dW = (stored_energy(gas, sp.x, sp.y, sp.F()) - stored_energy(gas, sm.x, sm.y, sm.F())) / (2 * h);
      EXPECT_NEAR(p.pj(a, j), -dW, 1e-8);
    }
}

TEST(Legendre, IncompressibleNeedsMultiplier) {
  auto m = flat_model(2, StoredEnergy::constant(0.0), 1.0, true);
  JetSample s = identity_jet(2);
  EXPECT_THROW(legendre(m, s), MissingMultiplier);
  s.lambda = 1.0;
  const Momenta p = legendre(m, s);
  ASSERT_TRUE(p.pi_mu.has_value());
  EXPECT_EQ(max_abs(*p.pi_mu), 0.0);
}

TEST(Energy, Examples) {
  auto m = flat_model(2, StoredEnergy::constant(0.0));
  EXPECT_DOUBLE_EQ(energy_density(m, jet_with(Mat::Identity(2, 2), vec2(1, 0))), 0.5);
  auto pot = MaterialModel::uniform(1.0, StoredEnergy::constant(2.0), MetricField::polar(), MetricField::polar());
  const JetSample s = jet_with(Mat::Identity(2, 2), vec2(0, 0));
  EXPECT_NEAR(energy_density(pot, s), 2.0 * s.x[0], 1e-14);
}

TEST(Energy, EqualsKineticPlusPotential) {
  auto gas = MaterialModel::uniform(1.7, StoredEnergy::barotropic_log(1.2), MetricField::polar(), MetricField::polar());
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const JetSample s = rng.jet2();
    const double sqrtG = s.x[0];
    const Mat g = MetricField::polar().eval(s.y);
    const double J = s.F().determinant() * s.y[0] / s.x[0];
    const double K = 0.5 * s.vdot().dot(g * s.vdot());
    const double w = 1.2 * (J * std::log(J) - J + 1.0);
    EXPECT_NEAR(energy_density(gas, s), sqrtG * 1.7 * (K + w), 1e-12);
  }
}

TEST(Cartan, CoefficientsMatchLegendre) {
  Rng rng(7);
  for (const auto& W : all_kinds()) {
    auto m = flat_model(2, W, 1.3);
    for (int i = 0; i < 10; ++i) {
      const JetSample s = rng.jet2();
      const Momenta p = legendre(m, s);
      const CartanCoefficients c = cartan_coefficients(m, s);
      EXPECT_EQ(c.time, p.p0);
      EXPECT_EQ(c.space, p.pj);
      EXPECT_EQ(c.volume, p.Pi);
      EXPECT_NEAR(cartan_pullback(c, s), lagrangian_density(m, s), 1e-12);
    }
  }
  auto m = flat_model(2, StoredEnergy::constant(1.5));
  const CartanCoefficients c = cartan_coefficients(m, identity_jet(2));
  EXPECT_EQ(max_abs(c.time), 0.0);
  EXPECT_EQ(max_abs(c.space), 0.0);
  EXPECT_NE(c.volume, 0.0);
}

TEST(Stress, Examples) {
  auto m = flat_model(2, StoredEnergy::constant(1.0));
  EXPECT_EQ(max_abs(cauchy_stress(m, jet_with(mat2(1.2, 0.1, 0, 0.9), vec2(0, 0)))), 0.0);
  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic());
  const JetSample s = jet_with(mat2(1.5, 0, 0, 1), vec2(0, 0));
  EXPECT_NEAR(material_pressure(gas, s), -0.5, 1e-15);
  EXPECT_LT(max_abs(cauchy_stress(gas, s) - 0.5 * Mat::Identity(2, 2)), 1e-14);
}

TEST(Stress, PressureExamples) {
  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic());
  EXPECT_EQ(material_pressure(gas, identity_jet(2)), 0.0);
  auto heavy = flat_model(2, StoredEnergy::barotropic_quadratic(), 2.0);
  EXPECT_NEAR(material_pressure(heavy, jet_with(mat2(1.5, 0, 0, 1), vec2(0, 0))), -1.0, 1e-15);
  auto log = flat_model(2, StoredEnergy::barotropic_log());
  const double h = 1e-6;
  const double dw = ((2 + h) * std::log(2 + h) - (2 + h) - ((2 - h) * std::log(2 - h) - (2 - h))) / (2 * h);
  EXPECT_NEAR(material_pressure(log, jet_with(mat2(2, 0, 0, 1), vec2(0, 0))), -dw, 1e-9);
  EXPECT_NEAR(material_pressure(log, jet_with(mat2(2, 0, 0, 1), vec2(0, 0))), -std::log(2.0), 1e-15);
  auto solid = flat_model(2, StoredEnergy::stvenant(1, 1));
  EXPECT_THROW(material_pressure(solid, identity_jet(2)), WrongEnergyKind);
}

TEST(Stress, SymmetryForEveryKind) {
  Rng rng(11);
  for (const auto& W : all_kinds()) {
    auto m = MaterialModel::uniform(1.4, W, MetricField::polar(), MetricField::polar());
    for (int i = 0; i < 100; ++i) {
      const Mat s = cauchy_stress(m, rng.jet2());
      EXPECT_LE(max_abs(s - s.transpose()), 1e-13 * std::max(1.0, max_abs(s)));
    }
  }
}

TEST(Stress, StVenantMatchesSecondPiolaPushForward) {
  auto m = flat_model(2, StoredEnergy::stvenant(1.2, 0.9), 1.4);
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    JetSample s = rng.jet2();
    s.v.rightCols(2) = rng.near_identity(2, 0.05);
    const Mat F = s.F();
    const Mat E = 0.5 * (F.transpose() * F - Mat::Identity(2, 2));
    // Per-volume energy lambda/2 (tr E)^2 + mu tr(E^2); S = dPsi/dE.
    const Mat S = 1.2 * E.trace() * Mat::Identity(2, 2) + 2.0 * 0.9 * E;
    const Mat expected = F * S * F.transpose() / F.determinant();
    EXPECT_LT(rel(cauchy_stress(m, s), expected), 1e-10);
  }
}

TEST(Piola, Examples) {
  auto solid = flat_model(2, StoredEnergy::stvenant(1, 1));
  EXPECT_LT(max_abs(piola_kirchhoff(solid, identity_jet(2))), 1e-15);
  EXPECT_LT(max_abs(piola_transform(solid, identity_jet(2))), 1e-15);
  auto c = flat_model(2, StoredEnergy::constant(2.0));
  EXPECT_EQ(max_abs(piola_kirchhoff(c, jet_with(mat2(1.1, 0.2, 0, 1), vec2(0, 0)))), 0.0);
  EXPECT_EQ(max_abs(piola_transform(c, jet_with(mat2(1.1, 0.2, 0, 1), vec2(0, 0)))), 0.0);
}

TEST(Piola, StVenantMatchesFiniteDifference) {
  auto solid = flat_model(2, StoredEnergy::stvenant(1.2, 0.9), 1.6);
  const JetSample s = jet_with(mat2(1.1, 0, 0, 1), vec2(0, 0));
  const Mat P = piola_kirchhoff(solid, s);
  const double h = 1e-6;
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < 2; ++i) {
      Mat Fp = s.F(), Fm = s.F();
      Fp(a, i) += h;
      Fm(a, i) -= h;
      const double d = (stored_energy(solid, s.x, s.y, Fp) - stored_energy(solid, s.x, s.y, Fm)) / (2 * h);
      EXPECT_NEAR(P(a, i), 1.6 * d, 1e-8);
    }
}

TEST(Piola, TransformIdentityOnRandomSamples) {
  Rng rng(17);
  for (const auto& W : {StoredEnergy::stvenant(1.2, 0.9), StoredEnergy::neohookean(0.6, 1.1)}) {
    auto m = MaterialModel::uniform(1.3, W, MetricField::polar(), MetricField::polar());
    for (int i = 0; i < 100; ++i) {
      const JetSample s = rng.jet2();
      EXPECT_LT(rel(piola_transform(m, s), piola_kirchhoff(m, s)), 1e-8);
    }
  }
}

TEST(Piola, MomentaRelation) {
  Rng rng(19);
  auto m = MaterialModel::uniform(1.3, StoredEnergy::neohookean(0.6, 1.1), MetricField::euclidean(2),
                                  MetricField::polar());
  for (int i = 0; i < 20; ++i) {
    const JetSample s = rng.jet2();
    EXPECT_LT(max_abs(piola_kirchhoff(m, s) + legendre(m, s).pj), 1e-13);
  }
}

TEST(Partials, MatchCentralDifferences) {
  Rng rng(23);
  const double h = 1e-6;
  for (const auto& W : all_kinds()) {
    auto m = MaterialModel::uniform(1.0, W, MetricField::polar(), MetricField::polar());
    for (int i = 0; i < 100; ++i) {
      const JetSample s = rng.jet2();
      const EnergyPartials ep = energy_partials(m, s.x, s.y, s.F());
      for (int a = 0; a < 2; ++a)
        for (int j = 0; j < 2; ++j) {
          Mat Fp = s.F(), Fm = s.F();
          Fp(a, j) += h;
          Fm(a, j) -= h;
          const double fd = (stored_energy(m, s.x, s.y, Fp) - stored_energy(m, s.x, s.y, Fm)) / (2 * h);
          EXPECT_NEAR(ep.dF(a, j), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
  }
}

TEST(Spatial, DensityExamples) {
  auto gas = flat_model(2, StoredEnergy::barotropic_quadratic(), 2.0);
  EXPECT_DOUBLE_EQ(spatial_fields(gas, identity_jet(2)).rho_spatial, 2.0);
  EXPECT_DOUBLE_EQ(spatial_fields(gas, jet_with(mat2(2, 0, 0, 2), vec2(0, 0))).rho_spatial, 0.5);
}

TEST(Energy, BarotropicLawsMatchDerivatives) {
  for (const auto& W : {StoredEnergy::barotropic_quadratic(1.7), StoredEnergy::barotropic_log(0.9)}) {
    for (double J : {0.6, 1.0, 1.4, 2.5}) {
      const double h = 1e-6;
      EXPECT_NEAR(W.dw(J), (W.w(J + h) - W.w(J - h)) / (2 * h), 1e-8);
    }
  }
  EXPECT_THROW(StoredEnergy::stvenant(1, 1).w(1.0), WrongEnergyKind);
}
