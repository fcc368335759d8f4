#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <vector>

#include "msym/fields.hpp"
#include "msym/material.hpp"

namespace msym {

enum class GeneratorKind { relabeling, time_translation, fiber_translation };

/// Infinitesimal symmetry: a divergence-free relabeling field xi on the reference
/// chart, a time shift zeta, or a constant shift of the fiber.
struct SymmetryGenerator {
  GeneratorKind kind = GeneratorKind::relabeling;
  std::function<Vec(const Vec&)> xi;
  /// dxi(x)(m, j) = d xi^m / d x^j.
  std::function<Mat(const Vec&)> dxi;
  double zeta = 1.0;
  Vec direction;

  static SymmetryGenerator relabeling(std::function<Vec(const Vec&)> xi, std::function<Mat(const Vec&)> dxi);
  static SymmetryGenerator translation(const Vec& c);
  /// xi = (-d psi / dx^2, d psi / dx^1) from a stream function, its gradient and Hessian.
  static SymmetryGenerator stream_function(std::function<Vec(const Vec&)> grad_psi,
                                           std::function<Mat(const Vec&)> hess_psi);
  /// psi = amplitude sin(x^1) sin(x^2).
  static SymmetryGenerator sine_stream(double amplitude = 1.0);
  static SymmetryGenerator time_translation(double zeta = 1.0);
  static SymmetryGenerator fiber_translation(const Vec& direction);

  /// Max |div xi| over the grid nodes; DomainError above tol.
  double check_solenoidal(const SpaceTimeGrid& grid, double tol = 1e-10) const;
};

/// Tangent vector of the lifted action at a jet point.
struct ProlongedGenerator {
  Vec base;   // (n + 1) components, time first
  Vec fiber;  // N components
  Mat jet;    // N x (n + 1) change of v
  std::optional<Vec> beta;
};

ProlongedGenerator prolong_generator(const SymmetryGenerator& gen, const JetSample& sample);

struct NoetherCurrent {
  double J0 = 0.0;
  Vec Jk;  // n components
};

/// Contraction of the prolonged generator with the Cartan form, pulled back by the jet.
NoetherCurrent momentum_map(const MaterialModel& model, const JetSample& sample, const SymmetryGenerator& gen);

/// J^k = (rho g(v0, v0)/2 - rho W - P J) sqrt(G) xi^k, J^0 = -rho g(v0, F xi) sqrt(G).
NoetherCurrent barotropic_current(const MaterialModel& model, const JetSample& sample, const SymmetryGenerator& gen);
/// Incompressible relabeling current: the potential part becomes rho c + P with P = lambda / sqrt(G).
NoetherCurrent incompressible_current(const MaterialModel& model, const JetSample& sample,
                                      const SymmetryGenerator& gen);
/// J^0 = -zeta e, J^j = -zeta p^j_a v^a_0.
NoetherCurrent time_translation_current(const MaterialModel& model, const JetSample& sample, double zeta);

/// Nodal currents of one level. Fixed-boundary nodes are masked out.
struct CurrentField {
  Eigen::VectorXd J0;
  Eigen::MatrixXd Jk;  // n x num_nodes
  std::vector<char> interior;
};

CurrentField current_field(const MaterialModel& model, const ConfigurationField& field, const SpaceTimeGrid& grid,
                           const SymmetryGenerator& gen, int level);

struct DivergenceField {
  Eigen::VectorXd values;
  std::vector<char> interior;
  double worst = 0.0;
};

/// d_t J^0 + d_k J^k at the nodes of window level `level` (1 <= level <= levels - 2).
DivergenceField noether_divergence(const MaterialModel& model, const ConfigurationField& field,
                                   const SpaceTimeGrid& grid, const SymmetryGenerator& gen, int level = -1);

/// e_dot - d_j(sqrt(G) P^j_a v^a_0); barotropic or elastic W only.
DivergenceField energy_continuity_residual(const MaterialModel& model, const ConfigurationField& field,
                                           const SpaceTimeGrid& grid, int level = -1);

/// Gap between the current divergence and -sqrt(G) xi^k F^a_k R_a for the EL residual R.
/// For incompressible models `gap` uses the full constrained residual and
/// `gap_unit_jacobian` the form with J = 1 substituted in the pressure force.
struct NoetherELGap {
  double gap = 0.0;
  double gap_unit_jacobian = 0.0;
  double divergence = 0.0;  // max |div J| for scale
};

NoetherELGap noether_implies_el_check(const MaterialModel& model, const ConfigurationField& field,
                                      const SpaceTimeGrid& grid, const SymmetryGenerator& gen, int level = -1);

/// Jet transformed by the affine relabeling x -> A x + b: spatial derivatives (and
/// multiplier gradients) pick up A^-1, the base point moves.
JetSample relabel_jet(const JetSample& sample, const Mat& A, const Vec& b);

/// Sum of J^0 over interior nodes times the cell measure.
double summed_density(const CurrentField& c, const SpaceTimeGrid& grid);

}  // namespace msym
