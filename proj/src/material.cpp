#include "msym/material.hpp"

#include <Eigen/LU>
#include <cmath>

#include "msym/errors.hpp"

namespace msym {

StoredEnergy StoredEnergy::constant(double c) {
  StoredEnergy e;
  e.kind = EnergyKind::constant;
  e.value = c;
  return e;
}

StoredEnergy StoredEnergy::barotropic_quadratic(double k) {
  StoredEnergy e;
  e.kind = EnergyKind::barotropic;
  e.law = BarotropicLaw::quadratic;
  e.k = k;
  return e;
}

StoredEnergy StoredEnergy::barotropic_log(double k) {
  StoredEnergy e;
  e.kind = EnergyKind::barotropic;
  e.law = BarotropicLaw::log;
  e.k = k;
  return e;
}

StoredEnergy StoredEnergy::barotropic_custom(std::function<double(double)> w, std::function<double(double)> dw) {
  StoredEnergy e;
  e.kind = EnergyKind::barotropic;
  e.law = BarotropicLaw::custom;
  e.w_fn = std::move(w);
  e.dw_fn = std::move(dw);
  return e;
}

StoredEnergy StoredEnergy::stvenant(double lame_lambda, double lame_mu) {
  StoredEnergy e;
  e.kind = EnergyKind::stvenant;
  e.lame_lambda = lame_lambda;
  e.lame_mu = lame_mu;
  return e;
}

StoredEnergy StoredEnergy::neohookean(double lame_mu, double lame_lambda) {
  StoredEnergy e;
  e.kind = EnergyKind::neohookean;
  e.lame_lambda = lame_lambda;
  e.lame_mu = lame_mu;
  return e;
}

std::string StoredEnergy::label() const {
  switch (kind) {
    case EnergyKind::constant:
      return "constant";
    case EnergyKind::barotropic:
      return law == BarotropicLaw::quadratic ? "barotropic_quadratic"
             : law == BarotropicLaw::log     ? "barotropic_log"
                                             : "barotropic_custom";
    case EnergyKind::stvenant:
      return "stvenant";
    case EnergyKind::neohookean:
      return "neohookean";
  }
  return "unknown";
}

double StoredEnergy::w(double J) const {
  if (!barotropic()) throw WrongEnergyKind("w(J) requested from a non-barotropic energy");
  switch (law) {
    case BarotropicLaw::quadratic:
      return 0.5 * k * (J - 1.0) * (J - 1.0);
    case BarotropicLaw::log:
      if (!(J > 0.0)) throw NonRegular("log barotropic law needs J > 0");
      return k * (J * std::log(J) - J + 1.0);
    case BarotropicLaw::custom:
      return w_fn(J);
  }
  return 0.0;
}

double StoredEnergy::dw(double J) const {
  if (!barotropic()) throw WrongEnergyKind("w'(J) requested from a non-barotropic energy");
  switch (law) {
    case BarotropicLaw::quadratic:
      return k * (J - 1.0);
    case BarotropicLaw::log:
      if (!(J > 0.0)) throw NonRegular("log barotropic law needs J > 0");
      return k * std::log(J);
    case BarotropicLaw::custom:
      if (!dw_fn) throw NonDifferentiable("custom barotropic law has no derivative");
      return dw_fn(J);
  }
  return 0.0;
}

MaterialModel MaterialModel::uniform(double rho, StoredEnergy W, MetricField G, MetricField g, bool incompressible) {
  MaterialModel m;
  m.rho = [rho](const Vec&) { return rho; };
  m.W = std::move(W);
  m.G = std::move(G);
  m.g = std::move(g);
  m.incompressible = incompressible;
  return m;
}

double MaterialModel::density(const Vec& x) const {
  const double r = rho(x);
  if (!(r > 0.0)) throw DomainError("reference density must be positive");
  return r;
}

double jacobian_of(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F) {
  if (F.rows() != F.cols()) throw ShapeError("Jacobian needs a square deformation gradient");
  if (F.rows() != y.size() || F.cols() != x.size()) throw ShapeError("jet shape does not match the charts");
  const double d = F.determinant();
  if (!(d > 0.0)) throw NonRegular("deformation gradient has non-positive determinant");
  const double ratio = model.g.eval(y).determinant() / model.G.eval(x).determinant();
  return d * std::sqrt(ratio);
}

EnergyPartials energy_partials(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F) {
  const int N = static_cast<int>(y.size());
  const int n = static_cast<int>(F.cols());
  if (F.rows() != N || x.size() != n) throw ShapeError("energy partials: jet shape does not match the charts");
  EnergyPartials out;
  out.dF = Mat::Zero(N, n);
  out.dg = Mat::Zero(N, N);
  out.dy = Vec::Zero(N);
  const StoredEnergy& W = model.W;
  switch (W.kind) {
    case EnergyKind::constant:
      out.W = W.value;
      return out;
    case EnergyKind::barotropic: {
      const double J = jacobian_of(model, x, y, F);
      const double wp = W.dw(J);
      out.J = J;
      out.W = W.w(J);
      out.dF = wp * J * small_inverse(F).transpose();
      out.dg = (0.5 * wp * J) * small_inverse(model.g.eval(y));
      break;
    }
    case EnergyKind::stvenant:
    case EnergyKind::neohookean: {
      const double rho = model.density(x);
      const Mat Gm = model.G.eval(x);
      const Mat gm = model.g.eval(y);
      const Mat Ginv = small_inverse(Gm);
      const Mat C = F.transpose() * gm * F;
      double psi = 0.0;
      Mat Sp;  // d psi / dC
      if (W.kind == EnergyKind::stvenant) {
        const Mat E = 0.5 * (C - Gm);
        const Mat GE = Ginv * E;
        const double trE = GE.trace();
        psi = 0.5 * W.lame_lambda * trE * trE + W.lame_mu * (GE * GE).trace();
        Sp = 0.5 * (W.lame_lambda * trE * Ginv + 2.0 * W.lame_mu * GE * Ginv);
        if (N == n && F.determinant() > 0.0) out.J = jacobian_of(model, x, y, F);
      } else {
        const double J = jacobian_of(model, x, y, F);
        const double lnJ = std::log(J);
        out.J = J;
        psi = 0.5 * W.lame_mu * ((Ginv * C).trace() - n) - W.lame_mu * lnJ + 0.5 * W.lame_lambda * lnJ * lnJ;
        Sp = 0.5 * W.lame_mu * Ginv + 0.5 * (-W.lame_mu + W.lame_lambda * lnJ) * small_inverse(C);
      }
      Sp = 0.5 * (Sp + Sp.transpose());
      out.W = psi / rho;
      out.dF = (2.0 / rho) * gm * F * Sp;
      out.dg = (1.0 / rho) * F * Sp * F.transpose();
      break;
    }
  }
  if (!model.g.is_constant()) {
    const auto dgm = model.g.deriv(y);
    for (int a = 0; a < N; ++a) out.dy[a] = out.dg.cwiseProduct(dgm[a]).sum();
  }
  return out;
}

double stored_energy(const MaterialModel& model, const Vec& x, const Vec& y, const Mat& F) {
  const StoredEnergy& W = model.W;
  switch (W.kind) {
    case EnergyKind::constant:
      return W.value;
    case EnergyKind::barotropic:
      return W.w(jacobian_of(model, x, y, F));
    case EnergyKind::stvenant:
    case EnergyKind::neohookean:
      break;
  }
  const int n = static_cast<int>(F.cols());
  if (F.rows() != y.size() || x.size() != n) throw ShapeError("stored energy: jet shape does not match the charts");
  const Mat Gm = model.G.eval(x);
  const Mat Ginv = small_inverse(Gm);
  const Mat C = F.transpose() * model.g.eval(y) * F;
  double psi;
  if (W.kind == EnergyKind::stvenant) {
    const Mat GE = Ginv * (0.5 * (C - Gm));
    const double trE = GE.trace();
    psi = 0.5 * W.lame_lambda * trE * trE + W.lame_mu * (GE * GE).trace();
  } else {
    const double lnJ = std::log(jacobian_of(model, x, y, F));
    psi = 0.5 * W.lame_mu * ((Ginv * C).trace() - n) - W.lame_mu * lnJ + 0.5 * W.lame_lambda * lnJ * lnJ;
  }
  return psi / model.density(x);
}

double jacobian(const MaterialModel& model, const JetSample& s) { return jacobian_of(model, s.x, s.y, s.F()); }

Mat green_tensor(const MaterialModel& model, const JetSample& s) {
  const Mat F = s.F();
  if (F.rows() != s.y.size()) throw ShapeError("green_tensor: jet shape mismatch");
  return F.transpose() * model.g.eval(s.y) * F;
}

Mat finger_inverse(const MaterialModel& model, const JetSample& s) {
  const Mat F = s.F();
  if (F.rows() != F.cols()) throw ShapeError("finger_inverse needs a square deformation gradient");
  const double d = F.determinant();
  if (!(std::abs(d) > kRegularityFloor)) throw NonRegular("deformation gradient is not invertible");
  const Mat Finv = small_inverse(F);
  return Finv.transpose() * model.G.eval(s.x) * Finv;
}

namespace {

double sqrt_det_G(const MaterialModel& model, const Vec& x) { return std::sqrt(model.G.eval(x).determinant()); }

double multiplier(const MaterialModel& model, const JetSample& s) {
  if (!s.lambda) throw MissingMultiplier("incompressible model evaluated without a multiplier value");
  (void)model;
  return *s.lambda;
}

}  // namespace

double lagrangian_density(const MaterialModel& model, const JetSample& s) {
  const Vec v0 = s.vdot();
  const double kinetic = 0.5 * v0.dot(model.g.eval(s.y) * v0);
  return sqrt_det_G(model, s.x) * model.density(s.x) * (kinetic - stored_energy(model, s.x, s.y, s.F()));
}

Momenta legendre(const MaterialModel& model, const JetSample& s) {
  const Vec v0 = s.vdot();
  const Mat F = s.F();
  const double rho = model.density(s.x);
  const double sg = sqrt_det_G(model, s.x);
  const Mat gm = model.g.eval(s.y);
  const EnergyPartials ep = energy_partials(model, s.x, s.y, F);
  Momenta m;
  m.p0 = rho * sg * (gm * v0);
  m.pj = -rho * sg * ep.dF;
  double L = sg * rho * (0.5 * v0.dot(gm * v0) - ep.W);
  if (model.incompressible) {
    const double lam = multiplier(model, s);
    const double J = jacobian_of(model, s.x, s.y, F);
    m.pj += lam * J * small_inverse(F).transpose();
    L += lam * (J - 1.0);
    m.pi_mu = Vec::Zero(s.n() + 1);
  }
  m.Pi = L - m.p0.dot(v0) - m.pj.cwiseProduct(F).sum();
  return m;
}

double energy_density(const MaterialModel& model, const JetSample& s) {
  double L = lagrangian_density(model, s);
  if (model.incompressible) L += multiplier(model, s) * (jacobian(model, s) - 1.0);
  const Vec v0 = s.vdot();
  const double p0v0 = model.density(s.x) * sqrt_det_G(model, s.x) * v0.dot(model.g.eval(s.y) * v0);
  return p0v0 - L;
}

CartanCoefficients cartan_coefficients(const MaterialModel& model, const JetSample& s) {
  const Momenta m = legendre(model, s);
  return CartanCoefficients{m.p0, m.pj, m.Pi};
}

double cartan_pullback(const CartanCoefficients& c, const JetSample& s) {
  return c.time.dot(s.vdot()) + c.space.cwiseProduct(s.F()).sum() + c.volume;
}

Mat cauchy_stress(const MaterialModel& model, const JetSample& s) {
  const double J = jacobian(model, s);
  const EnergyPartials ep = energy_partials(model, s.x, s.y, s.F());
  return (2.0 * model.density(s.x) / J) * ep.dg;
}

double material_pressure(const MaterialModel& model, const JetSample& s) {
  if (!model.W.barotropic()) throw WrongEnergyKind("material pressure needs a barotropic energy");
  return -model.density(s.x) * model.W.dw(jacobian(model, s));
}

Mat piola_kirchhoff(const MaterialModel& model, const JetSample& s) {
  return model.density(s.x) * energy_partials(model, s.x, s.y, s.F()).dF;
}

Mat piola_transform(const MaterialModel& model, const JetSample& s) {
  const Mat F = s.F();
  const double J = jacobian(model, s);
  return J * model.g.eval(s.y) * cauchy_stress(model, s) * small_inverse(F).transpose();
}

SpatialFields spatial_fields(const MaterialModel& model, const JetSample& s) {
  SpatialFields out;
  out.rho_spatial = model.density(s.x) / jacobian(model, s);
  out.image = s.y;
  if (model.W.barotropic()) out.pressure = material_pressure(model, s);
  if (model.incompressible && s.lambda) {
    out.pressure = out.pressure.value_or(0.0) + *s.lambda / sqrt_det_G(model, s.x);
  }
  return out;
}

}  // namespace msym
