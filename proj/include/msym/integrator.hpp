#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "msym/fields.hpp"
#include "msym/material.hpp"

namespace msym {

enum class Quadrature {
  /// One-point rule at the space-time cell centre.
  midpoint,
  /// Trapezoid in time, midpoint in space, with nodally lumped kinetic energy.
  trapezoid,
};

struct DiscreteLagrangianConfig {
  Quadrature quadrature = Quadrature::trapezoid;
};

enum class LinearSolver { direct_lu, conjugate_gradient };

struct SolverSettings {
  double newton_tol = 1e-10;
  int max_iter = 50;
  LinearSolver linear_solver = LinearSolver::direct_lu;
  double krylov_tol = 1e-13;
  void validate() const;
};

/// Discrete Lagrangian of one spatial cell over one time step. Corner matrices are
/// fiber_dim x 2^n in cell_corners order, with periodic seam offsets already applied.
double discrete_lagrangian(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                           const Eigen::MatrixXd& corners_now, const Eigen::MatrixXd& corners_next,
                           const DiscreteLagrangianConfig& config = {});

/// Gradient of the trapezoid discrete Lagrangian of one cell: level-k corners first,
/// then level-(k+1) corners, fiber index fastest.
Eigen::VectorXd discrete_lagrangian_gradient(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                                             const Eigen::MatrixXd& corners_now,
                                             const Eigen::MatrixXd& corners_next);

/// Symmetrised finite-difference Hessian of the cell discrete Lagrangian.
Eigen::MatrixXd discrete_lagrangian_hessian(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                                            const Eigen::MatrixXd& corners_now,
                                            const Eigen::MatrixXd& corners_next);

struct StepReport {
  long level = 0;        // absolute index of the level that was solved for
  int iterations = 0;    // residual evaluations
  double residual = 0.0; // final max-norm of the discrete EL rows
  double constraint = 0.0;
};

/// Advance by one level. Needs two committed levels; returns a field with the new level
/// appended (and the multiplier of the previous last level in constrained mode).
ConfigurationField step(const MaterialModel& model, const ConfigurationField& field, const SpaceTimeGrid& grid,
                        const SolverSettings& settings, bool constrained, StepReport* report = nullptr,
                        const DiscreteLagrangianConfig& config = {});

/// Two-level start phi_1 = phi_0 + dt V_0, projected onto J_d = 1 in constrained mode.
ConfigurationField initialize(const MaterialModel& model, const SpaceTimeGrid& grid, const Eigen::MatrixXd& phi0,
                              const Eigen::MatrixXd& V0, std::vector<Vec> offsets, bool constrained,
                              const SolverSettings& settings = {});

struct LevelDiagnostics {
  long level = 0;
  int iterations = 0;
  double residual = 0.0;
  double constraint = 0.0;
  double energy = 0.0;
  Vec momentum;
};

using DiagnosticsHook = std::function<void(const ConfigurationField& window, long absolute_level)>;

struct RunOptions {
  long n_steps = 0;
  bool constrained = false;
  /// Keep every level instead of a rolling window of three.
  bool keep_history = false;
  /// Hook cadence in steps (0 disables hooks).
  long cadence = 1;
};

struct Trajectory {
  ConfigurationField field;
  std::vector<LevelDiagnostics> diagnostics;  // one entry per solved level
};

Trajectory run(const MaterialModel& model, const ConfigurationField& initial, const SpaceTimeGrid& grid,
               const SolverSettings& settings, const RunOptions& options,
               const std::vector<DiagnosticsHook>& hooks = {});

/// Total discrete energy of the step between window levels k and k + 1.
double discrete_energy(const MaterialModel& model, const SpaceTimeGrid& grid, const ConfigurationField& field,
                       int level);

/// Discrete fiber momentum sum_n -D1 L_d(k, k + 1), exactly conserved on flat
/// periodic grids. Includes the multiplier of level k when present.
Vec discrete_momentum(const MaterialModel& model, const SpaceTimeGrid& grid, const ConfigurationField& field,
                      int level);

/// Discrete EL rows at window level k (needs k - 1 and k + 1), divided by the cell measure.
Eigen::MatrixXd discrete_el_rows(const MaterialModel& model, const SpaceTimeGrid& grid,
                                 const ConfigurationField& field, int level);

struct MultisymplecticDefect {
  double defect = 0.0;     // |boundary sum|
  double magnitude = 0.0;  // sum of |boundary terms|
  double relative = 0.0;
  double interior_residual = 0.0;  // max linearised EL defect of the two variations
};

/// Space-time patch of patch_nodes^n nodes by patch_levels levels.
struct PatchSpec {
  Index3 origin{0, 0, 0};
  int first_level = 0;
  int nodes = 8;
  int levels = 8;
};

/// Build two solutions of the linearised discrete EL equations around the stored
/// trajectory (random data on the first two levels) and evaluate the discrete
/// multisymplectic form formula on the patch boundary. Unconstrained trapezoid scheme.
MultisymplecticDefect multisymplectic_defect(const MaterialModel& model, const SpaceTimeGrid& grid,
                                             const ConfigurationField& trajectory, const PatchSpec& patch,
                                             unsigned seed);

}  // namespace msym
