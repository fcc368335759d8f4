#pragma once

#include <functional>
#include <optional>
#include <string>

#include "msym/fields.hpp"
#include "msym/geometry.hpp"

namespace msym {

enum class EnergyKind { constant, barotropic, stvenant, neohookean };
enum class BarotropicLaw { quadratic, log, custom };

/// Stored energy per unit mass.
///
/// Barotropic laws depend on the Jacobian only:
///   quadratic  w(J) = k (J - 1)^2 / 2
///   log        w(J) = k (J ln J - J + 1)
/// Elastic kinds are the per-volume St. Venant-Kirchhoff and neo-Hookean
/// energies divided by the reference density.
struct StoredEnergy {
  EnergyKind kind = EnergyKind::constant;
  double value = 0.0;
  BarotropicLaw law = BarotropicLaw::quadratic;
  double k = 1.0;
  std::function<double(double)> w_fn, dw_fn;
  double lame_lambda = 0.0, lame_mu = 0.0;

  static StoredEnergy constant(double c);
  static StoredEnergy barotropic_quadratic(double k = 1.0);
  static StoredEnergy barotropic_log(double k = 1.0);
  static StoredEnergy barotropic_custom(std::function<double(double)> w, std::function<double(double)> dw);
  static StoredEnergy stvenant(double lame_lambda, double lame_mu);
  static StoredEnergy neohookean(double lame_mu, double lame_lambda);

  bool barotropic() const { return kind == EnergyKind::barotropic; }
  bool elastic() const { return kind == EnergyKind::stvenant || kind == EnergyKind::neohookean; }
  std::string label() const;

  /// w(J) and w'(J); WrongEnergyKind unless barotropic.
  double w(double J) const;
  double dw(double J) const;
};

struct MaterialModel {
  std::function<double(const Vec&)> rho;
  StoredEnergy W;
  MetricField G;
  MetricField g;
  /// Adds the multiplier pairing lambda (J - 1) to the Lagrangian.
  bool incompressible = false;

  static MaterialModel uniform(double rho, StoredEnergy W, MetricField G, MetricField g, bool incompressible = false);
  /// Throws DomainError when rho(x) <= 0.
  double density(const Vec& x) const;
};

/// W and its partial derivatives at (x, y, F), with entries of g treated as independent.
struct EnergyPartials {
  double W = 0.0;
  Mat dF;       // dW / dv^a_i, N x n
  Mat dg;       // dW / dg_ab, N x N
  Vec dy;       // dW / dg_bc * d_a g_bc
  double J = 1.0;
};

EnergyPartials energy_partials(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F);
double stored_energy(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F);

/// det F sqrt(det g(y) / det G(x)); NonRegular when det F <= 0.
double jacobian_of(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F);
double jacobian(const MaterialModel& model, const JetSample& s);
Mat green_tensor(const MaterialModel& model, const JetSample& s);
Mat finger_inverse(const MaterialModel& model, const JetSample& s);
double lagrangian_density(const MaterialModel& model, const JetSample& s);

struct Momenta {
  Vec p0;   // p_a^0
  Mat pj;   // p_a^j, N x n
  double Pi = 0.0;
  std::optional<Vec> pi_mu;  // multiplier momenta, identically zero
};

/// Legendre transform; in the incompressible model it includes the multiplier
/// pairing and requires sample.lambda (MissingMultiplier otherwise).
Momenta legendre(const MaterialModel& model, const JetSample& s);

/// e = p_a^0 v^a_0 - L (the augmented L for incompressible models).
double energy_density(const MaterialModel& model, const JetSample& s);

/// Coefficients of the Cartan form on dy^a ^ d^n x_0, dy^a ^ d^n x_j and d^{n+1} x.
struct CartanCoefficients {
  Vec time;     // N
  Mat space;    // N x n
  double volume = 0.0;
};
CartanCoefficients cartan_coefficients(const MaterialModel& model, const JetSample& s);

/// Contraction of the Cartan coefficients with a holonomic jet; equals L.
double cartan_pullback(const CartanCoefficients& c, const JetSample& s);

/// sigma^ab = (2 rho / J) dW / dg_ab.
Mat cauchy_stress(const MaterialModel& model, const JetSample& s);
/// Barotropic pressure -rho w'(J).
double material_pressure(const MaterialModel& model, const JetSample& s);
/// rho dW / dv^a_i.
Mat piola_kirchhoff(const MaterialModel& model, const JetSample& s);
/// J g sigma F^-T, the Piola transform of the Cauchy stress.
Mat piola_transform(const MaterialModel& model, const JetSample& s);

struct SpatialFields {
  double rho_spatial = 0.0;
  /// Material pressure carried to the image point y (barotropic or multiplier based).
  std::optional<double> pressure;
  Vec image;
};
SpatialFields spatial_fields(const MaterialModel& model, const JetSample& s);

}  // namespace msym
