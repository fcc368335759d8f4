#include "msym/conservation.hpp"

#include <Eigen/LU>
#include <cmath>

#include "msym/dynamics.hpp"
#include "msym/errors.hpp"

namespace msym {

SymmetryGenerator SymmetryGenerator::relabeling(std::function<Vec(const Vec&)> xi, std::function<Mat(const Vec&)> dxi) {
  if (!xi || !dxi) throw ConfigError("relabeling generator needs xi and its derivative");
  SymmetryGenerator g;
  g.kind = GeneratorKind::relabeling;
  g.xi = std::move(xi);
  g.dxi = std::move(dxi);
  return g;
}

SymmetryGenerator SymmetryGenerator::translation(const Vec& c) {
  const int n = static_cast<int>(c.size());
  return relabeling([c](const Vec&) { return c; }, [n](const Vec&) { return Mat::Zero(n, n); });
}

SymmetryGenerator SymmetryGenerator::stream_function(std::function<Vec(const Vec&)> grad_psi,
                                                     std::function<Mat(const Vec&)> hess_psi) {
  auto xi = [grad_psi](const Vec& x) {
    const Vec g = grad_psi(x);
    Vec v(2);
    v << -g[1], g[0];
    return v;
  };
  auto dxi = [hess_psi](const Vec& x) {
    const Mat H = hess_psi(x);
    Mat D(2, 2);
    D << -H(1, 0), -H(1, 1), H(0, 0), H(0, 1);
    return D;
  };
  return relabeling(xi, dxi);
}

SymmetryGenerator SymmetryGenerator::sine_stream(double amplitude) {
  return stream_function(
      [amplitude](const Vec& x) {
        Vec g(2);
        g << amplitude * std::cos(x[0]) * std::sin(x[1]), amplitude * std::sin(x[0]) * std::cos(x[1]);
        return g;
      },
      [amplitude](const Vec& x) {
        const double s0 = std::sin(x[0]), c0 = std::cos(x[0]), s1 = std::sin(x[1]), c1 = std::cos(x[1]);
        Mat H(2, 2);
        H << -s0 * s1, c0 * c1, c0 * c1, -s0 * s1;
        return Mat(amplitude * H);
      });
}

SymmetryGenerator SymmetryGenerator::time_translation(double zeta) {
  SymmetryGenerator g;
  g.kind = GeneratorKind::time_translation;
  g.zeta = zeta;
  return g;
}

SymmetryGenerator SymmetryGenerator::fiber_translation(const Vec& direction) {
  SymmetryGenerator g;
  g.kind = GeneratorKind::fiber_translation;
  g.direction = direction;
  return g;
}

double SymmetryGenerator::check_solenoidal(const SpaceTimeGrid& grid, double tol) const {
  if (kind != GeneratorKind::relabeling) return 0.0;
  double worst = 0.0;
  for (int node = 0; node < grid.num_nodes(); ++node) worst = std::max(worst, std::abs(dxi(grid.node_coord(node)).trace()));
  if (worst > tol) throw DomainError("relabeling generator is not divergence free");
  return worst;
}

ProlongedGenerator prolong_generator(const SymmetryGenerator& gen, const JetSample& s) {
  const int n = s.n(), N = s.fiber_dim();
  ProlongedGenerator out;
  out.base = Vec::Zero(n + 1);
  out.fiber = Vec::Zero(N);
  out.jet = Mat::Zero(N, n + 1);
  switch (gen.kind) {
    case GeneratorKind::relabeling: {
      const Vec xi = gen.xi(s.x);
      const Mat D = gen.dxi(s.x);
      if (xi.size() != n || D.rows() != n || D.cols() != n) throw ShapeError("generator dimension mismatch");
      out.base.tail(n) = xi;
      out.jet.rightCols(n) = -s.F() * D;
      if (s.beta) {
        Vec b = Vec::Zero(n + 1);
        b.tail(n) = -(s.beta->tail(n).transpose() * D).transpose();
        out.beta = b;
      }
      break;
    }
    case GeneratorKind::time_translation:
      out.base[0] = gen.zeta;
      if (s.beta) out.beta = Vec::Zero(n + 1);
      break;
    case GeneratorKind::fiber_translation:
      if (gen.direction.size() != N) throw ShapeError("fiber translation dimension mismatch");
      out.fiber = gen.direction;
      if (s.beta) out.beta = Vec::Zero(n + 1);
      break;
  }
  return out;
}

NoetherCurrent momentum_map(const MaterialModel& model, const JetSample& s, const SymmetryGenerator& gen) {
  const ProlongedGenerator V = prolong_generator(gen, s);
  const CartanCoefficients c = cartan_coefficients(model, s);
  const int n = s.n();
  // p^mu_a with mu = 0 the time slot.
  Mat p(s.fiber_dim(), n + 1);
  p.col(0) = c.time;
  p.rightCols(n) = c.space;
  const Vec vxi = s.v * V.base;                 // v^a_nu xi^nu
  const double pv = p.cwiseProduct(s.v).sum();  // p^nu_a v^a_nu
  Vec J = p.transpose() * (V.fiber - vxi) + (c.volume + pv) * V.base;
  NoetherCurrent out;
  out.J0 = J[0];
  out.Jk = J.tail(n);
  return out;
}

NoetherCurrent barotropic_current(const MaterialModel& model, const JetSample& s, const SymmetryGenerator& gen) {
  if (!model.W.barotropic()) throw WrongEnergyKind("barotropic current needs a barotropic energy");
  if (gen.kind != GeneratorKind::relabeling) throw ConfigError("closed-form current needs a relabeling generator");
  const double rho = model.density(s.x);
  const double sg = metric_det_sqrt(model.G, s.x);
  const Mat g = model.g.eval(s.y);
  const Vec v0 = s.vdot();
  const double J = jacobian(model, s);
  const double P = material_pressure(model, s);
  const Vec xi = gen.xi(s.x);
  NoetherCurrent out;
  out.Jk = (0.5 * rho * v0.dot(g * v0) - rho * model.W.w(J) - P * J) * sg * xi;
  out.J0 = -rho * sg * v0.dot(g * (s.F() * xi));
  return out;
}

NoetherCurrent incompressible_current(const MaterialModel& model, const JetSample& s, const SymmetryGenerator& gen) {
  if (model.W.kind != EnergyKind::constant) throw WrongEnergyKind("incompressible closed form needs a constant energy");
  if (gen.kind != GeneratorKind::relabeling) throw ConfigError("closed-form current needs a relabeling generator");
  if (!s.lambda) throw MissingMultiplier("incompressible current needs the multiplier");
  const double rho = model.density(s.x);
  const double sg = metric_det_sqrt(model.G, s.x);
  const Mat g = model.g.eval(s.y);
  const Vec v0 = s.vdot();
  const double P = *s.lambda / sg;
  const Vec xi = gen.xi(s.x);
  NoetherCurrent out;
  out.Jk = (0.5 * rho * v0.dot(g * v0) - rho * model.W.value - P) * sg * xi;
  out.J0 = -rho * sg * v0.dot(g * (s.F() * xi));
  return out;
}

NoetherCurrent time_translation_current(const MaterialModel& model, const JetSample& s, double zeta) {
  // e = sqrt(G) rho (g(v0, v0)/2 + W) - lambda (J - 1), flux -p^j_a v0^a.
  const double rho = model.density(s.x);
  const double sg = metric_det_sqrt(model.G, s.x);
  const Vec v0 = s.vdot();
  const Mat F = s.F();
  const EnergyPartials ep = energy_partials(model, s.x, s.y, F);
  double e = sg * rho * (0.5 * v0.dot(model.g.eval(s.y) * v0) + ep.W);
  Mat pj = -rho * sg * ep.dF;
  if (model.incompressible) {
    if (!s.lambda) throw MissingMultiplier("incompressible current needs the multiplier");
    const double J = jacobian(model, s);
    e -= *s.lambda * (J - 1.0);
    pj += *s.lambda * J * small_inverse(F).transpose();
  }
  NoetherCurrent out;
  out.J0 = -zeta * e;
  out.Jk = -zeta * (pj.transpose() * v0);
  return out;
}

namespace {

int resolve(const ConfigurationField& field, int level) {
  const int l = level < 0 ? default_level(field) : level;
  if (l < 1 || l > field.levels() - 2) throw IndexError("divergence needs a level on each side");
  return l;
}

std::vector<char> interior_mask(const SpaceTimeGrid& grid) {
  std::vector<char> mask(grid.num_nodes());
  for (int node = 0; node < grid.num_nodes(); ++node) mask[node] = grid.on_fixed_boundary(node) ? 0 : 1;
  return mask;
}

DivergenceField divergence_of(const SpaceTimeGrid& grid, const CurrentField& before, const CurrentField& now,
                              const CurrentField& after) {
  DivergenceField out;
  out.interior = interior_mask(grid);
  out.values = Eigen::VectorXd::Zero(grid.num_nodes());
  std::vector<Eigen::MatrixXd> flux(grid.n_space);
  for (int k = 0; k < grid.n_space; ++k) flux[k] = now.Jk.row(k);
  for (int node = 0; node < grid.num_nodes(); ++node) {
    if (!out.interior[node]) continue;
    double d = (after.J0[node] - before.J0[node]) / (2.0 * grid.dt);
    for (int k = 0; k < grid.n_space; ++k) d += nodal_derivative(grid, flux[k], node, k)[0];
    out.values[node] = d;
    out.worst = std::max(out.worst, std::abs(d));
  }
  return out;
}

}  // namespace

CurrentField current_field(const MaterialModel& model, const ConfigurationField& field, const SpaceTimeGrid& grid,
                           const SymmetryGenerator& gen, int level) {
  CurrentField out;
  const int nn = grid.num_nodes();
  out.J0 = Eigen::VectorXd::Zero(nn);
  out.Jk = Eigen::MatrixXd::Zero(grid.n_space, nn);
  out.interior = interior_mask(grid);
  for (int node = 0; node < nn; ++node) {
    const NoetherCurrent c = momentum_map(model, jet_extend(grid, field, node, level), gen);
    out.J0[node] = c.J0;
    out.Jk.col(node) = c.Jk;
  }
  return out;
}

DivergenceField noether_divergence(const MaterialModel& model, const ConfigurationField& field,
                                   const SpaceTimeGrid& grid, const SymmetryGenerator& gen, int level) {
  const int l = resolve(field, level);
  return divergence_of(grid, current_field(model, field, grid, gen, l - 1), current_field(model, field, grid, gen, l),
                       current_field(model, field, grid, gen, l + 1));
}

DivergenceField energy_continuity_residual(const MaterialModel& model, const ConfigurationField& field,
                                           const SpaceTimeGrid& grid, int level) {
  if (!model.W.barotropic() && !model.W.elastic())
    throw WrongEnergyKind("energy continuity needs a barotropic or elastic energy");
  // The time-translation current is (-e, -p^j v0) = (-e, sqrt(G) P v0), so the residual is -div J.
  DivergenceField d = noether_divergence(model, field, grid, SymmetryGenerator::time_translation(1.0), level);
  d.values = -d.values;
  return d;
}

NoetherELGap noether_implies_el_check(const MaterialModel& model, const ConfigurationField& field,
                                      const SpaceTimeGrid& grid, const SymmetryGenerator& gen, int level) {
  if (gen.kind != GeneratorKind::relabeling) throw ConfigError("the EL recovery check uses a relabeling generator");
  if (!model.W.barotropic() && !model.incompressible)
    throw WrongEnergyKind("the EL recovery check needs a barotropic or incompressible model");
  const int l = resolve(field, level);
  const DivergenceField div = noether_divergence(model, field, grid, gen, l);
  Eigen::MatrixXd R_full, R_unit;
  if (model.incompressible) {
    const ConstrainedState state{field};
    R_full = el_residual_constrained(model, state, grid, l, false).el.values;
    R_unit = el_residual_constrained(model, state, grid, l, true).el.values;
  } else {
    R_full = el_residual_barotropic(model, field, grid, l).values;
    R_unit = R_full;
  }
  NoetherELGap out;
  out.divergence = div.worst;
  for (int node = 0; node < grid.num_nodes(); ++node) {
    if (!div.interior[node]) continue;
    const JetSample s = jet_extend(grid, field, node, l);
    const Vec Fxi = s.F() * gen.xi(s.x);
    const double sg = metric_det_sqrt(model.G, s.x);
    out.gap = std::max(out.gap, std::abs(div.values[node] + sg * Fxi.dot(R_full.col(node))));
    out.gap_unit_jacobian = std::max(out.gap_unit_jacobian, std::abs(div.values[node] + sg * Fxi.dot(R_unit.col(node))));
  }
  return out;
}

JetSample relabel_jet(const JetSample& s, const Mat& A, const Vec& b) {
  const int n = s.n();
  if (A.rows() != n || A.cols() != n || b.size() != n) throw ShapeError("affine map dimension mismatch");
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw NonRegular("affine relabeling is singular");
  const Mat Ainv = lu.inverse();
  JetSample out = s;
  out.x = A * s.x + b;
  out.v.rightCols(n) = s.F() * Ainv;
  if (s.beta) {
    Vec beta = *s.beta;
    beta.tail(n) = (s.beta->tail(n).transpose() * Ainv).transpose();
    out.beta = beta;
  }
  return out;
}

double summed_density(const CurrentField& c, const SpaceTimeGrid& grid) {
  double sum = 0.0;
  for (int node = 0; node < c.J0.size(); ++node)
    if (c.interior[node]) sum += c.J0[node];
  return sum * grid.cell_measure();
}

}  // namespace msym
