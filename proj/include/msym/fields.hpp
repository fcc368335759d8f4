#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msym/types.hpp"

namespace msym {

enum class BoundaryKind { periodic, fixed };

using Index3 = std::array<int, kMaxDim>;

/// Uniform node-centred grid on a rectangular reference domain times a time axis.
///
/// Periodic axes have spacing (hi - lo) / nodes and as many cells as nodes.
/// Fixed axes include both end nodes, spacing (hi - lo) / (nodes - 1).
struct SpaceTimeGrid {
  int n_space = 1;
  std::vector<double> lo, hi;
  std::vector<int> nodes;
  std::vector<BoundaryKind> boundary;
  double dt = 0.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  double spacing(int axis) const;
  /// Product of the spatial spacings.
  double cell_measure() const;
  int num_nodes() const;
  int cells_along(int axis) const;
  int num_cells() const;
  bool all_periodic() const;

  Index3 node_multi(int node) const;
  int node_index(const Index3& m) const;
  Vec node_coord(int node) const;
  /// True when the node lies on a fixed (Dirichlet) face.
  bool on_fixed_boundary(int node) const;

  Index3 cell_multi(int cell) const;
  int cell_index(const Index3& m) const;
  Vec cell_center(int cell) const;
  int corners_per_cell() const { return 1 << n_space; }
  /// Number of cells touching a node (2^n in the interior).
  int cells_at_node(int node) const;
};

/// One corner of a spatial cell: the stored node plus the number of periodic
/// seams crossed along each axis to reach it.
struct CellCorner {
  int node = 0;
  Index3 wraps{0, 0, 0};
  /// +1 along axis k when the corner sits on the high side of the cell.
  Index3 side{0, 0, 0};
};

std::vector<CellCorner> cell_corners(const SpaceTimeGrid& grid, int cell);

/// Cells containing a node together with the corner slot the node occupies.
std::vector<std::pair<int, int>> node_cells(const SpaceTimeGrid& grid, int node);

enum class LambdaLayout { none, node, cell };

/// Nodal section values per time level plus an optional multiplier field.
struct ConfigurationField {
  int fiber_dim = 0;
  /// phi[level] is fiber_dim x num_nodes.
  std::vector<Eigen::MatrixXd> phi;
  LambdaLayout lambda_layout = LambdaLayout::none;
  /// lambda[level] has one entry per node or per cell; an empty vector marks
  /// a level whose multiplier is not known yet.
  std::vector<Eigen::VectorXd> lambda;
  /// Jump of phi across the periodic seam of each spatial axis.
  std::vector<Vec> period_offset;
  /// Absolute time index of phi[0].
  long first_level = 0;

  int levels() const { return static_cast<int>(phi.size()); }
  bool has_lambda(int level) const;
  Vec node_value(int level, int node) const;
  /// Value at a multi-index that may step outside periodic axes.
  Vec value_at(const SpaceTimeGrid& grid, int level, const Index3& m) const;
  Vec corner_value(int level, const CellCorner& c) const;
  /// fiber_dim x corners matrix of corner values.
  Eigen::MatrixXd cell_values(const SpaceTimeGrid& grid, int level, int cell) const;
  /// Throws ShapeError when array sizes disagree with the grid.
  void check_shape(const SpaceTimeGrid& grid) const;
};

/// Seam offsets for a deformation map: (hi - lo) e_k on periodic axes.
std::vector<Vec> deformation_offsets(const SpaceTimeGrid& grid);
/// Zero seam offsets for a plain periodic field with the given component count.
std::vector<Vec> zero_offsets(const SpaceTimeGrid& grid, int components);

using SectionFn = std::function<Vec(const Vec& x, double t)>;

/// Sample phi(x, t) at every node for levels first_level .. first_level + levels - 1.
ConfigurationField sample_section(const SpaceTimeGrid& grid, int fiber_dim, int levels, const SectionFn& fn,
                                  std::vector<Vec> offsets, long first_level = 0);

/// Point of the first jet bundle, optionally extended by a multiplier.
struct JetSample {
  Vec x;    // spatial base point
  double t = 0.0;
  Vec y;    // fiber point
  Mat v;    // fiber_dim x (n + 1); column 0 is the time derivative
  std::optional<double> lambda;
  std::optional<Vec> beta;  // (n + 1) derivatives of lambda, time first

  int n() const { return static_cast<int>(v.cols()) - 1; }
  int fiber_dim() const { return static_cast<int>(v.rows()); }
  Vec vdot() const { return v.col(0); }
  Mat F() const { return v.rightCols(v.cols() - 1); }
};

JetSample make_jet(const Vec& x, double t, const Vec& y, const Vec& vdot, const Mat& F);

/// Finite-difference first-jet extension at a node and level.
JetSample jet_extend(const SpaceTimeGrid& grid, const ConfigurationField& field, int node, int level);

/// Multiplier values averaged to nodes (identity for node layouts).
Eigen::VectorXd lambda_at_nodes(const SpaceTimeGrid& grid, const ConfigurationField& field, int level);

/// Spatial derivative of a nodal quantity (no seam jump) along an axis:
/// centred in the interior and on periodic axes, one-sided 2nd order at fixed faces and
/// at their inner neighbours (which then never read face values).
Eigen::VectorXd nodal_derivative(const SpaceTimeGrid& grid, const Eigen::MatrixXd& data, int node, int axis);

inline constexpr double kRegularityFloor = 1e-10;

/// det of the spatial block exceeds the floor. False for non-square blocks.
bool regularity_check(const JetSample& sample, double floor = kRegularityFloor);

/// Cell-centred jet of one level: corner-averaged point and cell-averaged gradient.
struct CellJet {
  Vec xc;
  Vec ybar;
  Mat F;
};

CellJet cell_jet(const SpaceTimeGrid& grid, int cell, const Eigen::MatrixXd& corners);

/// d F^a_i / d(corner e value a) for the cell-averaged gradient.
double cell_gradient_weight(const SpaceTimeGrid& grid, const CellCorner& corner, int axis);

/// Snapshot CSV: one row per node with coordinates, phi components and lambda.
void write_snapshot_csv(const std::string& path, const SpaceTimeGrid& grid, const ConfigurationField& field,
                        int level);

struct Snapshot {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;  // one row per node
};
Snapshot read_snapshot_csv(const std::string& path);

}  // namespace msym
