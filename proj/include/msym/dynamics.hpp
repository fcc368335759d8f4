#pragma once

#include <Eigen/Core>
#include <vector>

#include "msym/fields.hpp"
#include "msym/material.hpp"

namespace msym {

/// Euler-Lagrange residual at one time level, in force-density units:
///   rho g (D phi_dot / Dt) - (1/sqrt G) d_k(sqrt G P^k) + rho dW/dg_bc d_a g_bc.
/// Fixed-boundary nodes are excluded (mask 0, value 0).
struct ELResidual {
  Eigen::MatrixXd values;     // fiber_dim x num_nodes
  std::vector<char> interior; // 1 where evaluated
  int level = 0;
  double worst = 0.0;
};

/// Middle level of the stored window, used when no level is given.
int default_level(const ConfigurationField& field);

/// Numerical differentiation of the Lagrangian density (augmented by
/// lambda (J - 1) for incompressible models) in its y and v slots, divided by -sqrt(det G).
ELResidual el_residual_general(const MaterialModel& model, const ConfigurationField& field, const SpaceTimeGrid& grid,
                               int level = -1);
ELResidual el_residual_continuum(const MaterialModel& model, const ConfigurationField& field,
                                 const SpaceTimeGrid& grid, int level = -1);
/// rho g D phi_dot + (dP/dx^k) J (F^-1)^k_a.
ELResidual el_residual_barotropic(const MaterialModel& model, const ConfigurationField& field,
                                  const SpaceTimeGrid& grid, int level = -1);
/// rho g D V - DIV P with the two-point covariant divergence.
ELResidual el_residual_elastic(const MaterialModel& model, const ConfigurationField& field,
                               const SpaceTimeGrid& grid, int level = -1);

/// Phi = J - 1 per cell from the corner-averaged cell jet.
Eigen::VectorXd induced_constraint(const ConfigurationField& field, const SpaceTimeGrid& grid,
                                   const MaterialModel& model, int level = -1);

/// L + lambda (J - 1); MissingMultiplier when the sample has no lambda.
double augmented_lagrangian(const MaterialModel& model, const JetSample& sample);

/// Configuration with a populated multiplier; P = lambda / sqrt(det G).
struct ConstrainedState {
  ConfigurationField field;
};

/// Multiplier pressure lambda / sqrt(det G) at nodes.
Eigen::VectorXd multiplier_pressure(const MaterialModel& model, const ConstrainedState& state,
                                    const SpaceTimeGrid& grid, int level);

struct ConstrainedResidual {
  ELResidual el;
  Eigen::VectorXd constraint;
};

/// Continuum residual plus the multiplier force (dP/dx^k) J (F^-1)^k_a, and the
/// induced constraint. With unit_jacobian the factor J is replaced by 1.
ConstrainedResidual el_residual_constrained(const MaterialModel& model, const ConstrainedState& state,
                                            const SpaceTimeGrid& grid, int level = -1, bool unit_jacobian = false);

struct PressureSplit {
  Eigen::VectorXd P_W;
  Eigen::VectorXd P_lambda;
  Eigen::VectorXd total;
};

/// Per-node split of the total pressure into -rho w'(J) and lambda / sqrt(det G).
PressureSplit pressure_decomposition(const MaterialModel& model, const ConstrainedState& state,
                                     const SpaceTimeGrid& grid, int level = -1);

/// Spatial (Eulerian) fields obtained through the inverse map on the reference grid.
struct EulerianFields {
  Eigen::MatrixXd velocity;  // fiber_dim x num_nodes at spatial grid points
  Eigen::VectorXd pressure;
};

/// Evaluate V and P at every grid point y by inverting phi: nearest image
/// node, Newton on the multilinear patch, then on the tensor-product cubic interpolant
/// (V and P use the same cubic weights). NonRegular when no preimage is found.
EulerianFields eulerian_fields(const ConfigurationField& field, const SpaceTimeGrid& grid, int level,
                               const Eigen::VectorXd& nodal_pressure);

struct PoissonCheck {
  Eigen::VectorXd residual;  // Laplace p + div((u . grad) u) per spatial node
  std::vector<char> interior;
  EulerianFields fields;
  double worst = 0.0;
};

/// Flat metrics only (DomainError otherwise). Pressure is the total pressure of the state.
PoissonCheck pressure_poisson_residual(const ConstrainedState& state, const SpaceTimeGrid& grid,
                                       const MaterialModel& model, int level = -1);

/// Same check with caller-supplied Eulerian velocity and pressure on the grid.
PoissonCheck poisson_residual_from(const SpaceTimeGrid& grid, const EulerianFields& fields);

}  // namespace msym
