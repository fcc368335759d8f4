#include "msym/fields.hpp"

#include <Eigen/LU>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msym/errors.hpp"

namespace msym {

namespace {

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

void SpaceTimeGrid::validate() const {
  if (n_space < 1 || n_space > kMaxDim) throw ConfigError("grid: spatial dimension must be 1..3");
  const auto n = static_cast<std::size_t>(n_space);
  if (lo.size() != n || hi.size() != n || nodes.size() != n || boundary.size() != n) {
    throw ConfigError("grid: per-axis arrays must have n_space entries");
  }
  for (int k = 0; k < n_space; ++k) {
    if (nodes[k] < 3) throw ConfigError("grid: axis " + std::to_string(k) + " needs at least 3 nodes");
    if (!(hi[k] > lo[k])) throw ConfigError("grid: axis " + std::to_string(k) + " has a degenerate extent");
  }
  if (!(dt > 0.0)) throw ConfigError("grid: dt must be positive");
}

double SpaceTimeGrid::spacing(int axis) const {
  const double len = hi[axis] - lo[axis];
  return boundary[axis] == BoundaryKind::periodic ? len / nodes[axis] : len / (nodes[axis] - 1);
}

double SpaceTimeGrid::cell_measure() const {
  double v = 1.0;
  for (int k = 0; k < n_space; ++k) v *= spacing(k);
  return v;
}

int SpaceTimeGrid::num_nodes() const {
  int c = 1;
  for (int k = 0; k < n_space; ++k) c *= nodes[k];
  return c;
}

int SpaceTimeGrid::cells_along(int axis) const {
  return boundary[axis] == BoundaryKind::periodic ? nodes[axis] : nodes[axis] - 1;
}

int SpaceTimeGrid::num_cells() const {
  int c = 1;
  for (int k = 0; k < n_space; ++k) c *= cells_along(k);
  return c;
}

bool SpaceTimeGrid::all_periodic() const {
  for (int k = 0; k < n_space; ++k)
    if (boundary[k] != BoundaryKind::periodic) return false;
  return true;
}

Index3 SpaceTimeGrid::node_multi(int node) const {
  Index3 m{0, 0, 0};
  for (int k = 0; k < n_space; ++k) {
    m[k] = node % nodes[k];
    node /= nodes[k];
  }
  return m;
}

int SpaceTimeGrid::node_index(const Index3& m) const {
  int idx = 0;
  for (int k = n_space - 1; k >= 0; --k) idx = idx * nodes[k] + m[k];
  return idx;
}

Vec SpaceTimeGrid::node_coord(int node) const {
  const Index3 m = node_multi(node);
  Vec x(n_space);
  for (int k = 0; k < n_space; ++k) x[k] = lo[k] + m[k] * spacing(k);
  return x;
}

bool SpaceTimeGrid::on_fixed_boundary(int node) const {
  const Index3 m = node_multi(node);
  for (int k = 0; k < n_space; ++k) {
    if (boundary[k] == BoundaryKind::fixed && (m[k] == 0 || m[k] == nodes[k] - 1)) return true;
  }
  return false;
}

Index3 SpaceTimeGrid::cell_multi(int cell) const {
  Index3 m{0, 0, 0};
  for (int k = 0; k < n_space; ++k) {
    m[k] = cell % cells_along(k);
    cell /= cells_along(k);
  }
  return m;
}

int SpaceTimeGrid::cell_index(const Index3& m) const {
  int idx = 0;
  for (int k = n_space - 1; k >= 0; --k) idx = idx * cells_along(k) + m[k];
  return idx;
}

Vec SpaceTimeGrid::cell_center(int cell) const {
  const Index3 m = cell_multi(cell);
  Vec x(n_space);
  for (int k = 0; k < n_space; ++k) x[k] = lo[k] + (m[k] + 0.5) * spacing(k);
  return x;
}

int SpaceTimeGrid::cells_at_node(int node) const {
  const Index3 m = node_multi(node);
  int c = 1;
  for (int k = 0; k < n_space; ++k) {
    const bool edge = boundary[k] == BoundaryKind::fixed && (m[k] == 0 || m[k] == nodes[k] - 1);
    c *= edge ? 1 : 2;
  }
  return c;
}

std::vector<CellCorner> cell_corners(const SpaceTimeGrid& grid, int cell) {
  const Index3 c = grid.cell_multi(cell);
  std::vector<CellCorner> out(grid.corners_per_cell());
  for (int e = 0; e < grid.corners_per_cell(); ++e) {
    Index3 m{0, 0, 0};
    CellCorner& cc = out[e];
    for (int k = 0; k < grid.n_space; ++k) {
      const int bit = (e >> k) & 1;
      m[k] = c[k] + bit;
      cc.side[k] = bit;
      if (m[k] == grid.nodes[k]) {  // only reachable on periodic axes
        m[k] = 0;
        cc.wraps[k] = 1;
      }
    }
    cc.node = grid.node_index(m);
  }
  return out;
}

std::vector<std::pair<int, int>> node_cells(const SpaceTimeGrid& grid, int node) {
  const Index3 m = grid.node_multi(node);
  std::vector<std::pair<int, int>> out;
  for (int e = 0; e < grid.corners_per_cell(); ++e) {
    Index3 c{0, 0, 0};
    bool ok = true;
    for (int k = 0; k < grid.n_space; ++k) {
      c[k] = m[k] - ((e >> k) & 1);
      if (c[k] < 0) {
        if (grid.boundary[k] == BoundaryKind::periodic) {
          c[k] += grid.cells_along(k);
        } else {
          ok = false;
        }
      }
      if (c[k] >= grid.cells_along(k)) ok = false;
    }
    if (ok) out.emplace_back(grid.cell_index(c), e);
  }
  return out;
}

bool ConfigurationField::has_lambda(int level) const {
  return lambda_layout != LambdaLayout::none && level >= 0 && level < static_cast<int>(lambda.size()) &&
         lambda[level].size() > 0;
}

Vec ConfigurationField::node_value(int level, int node) const { return phi[level].col(node); }

Vec ConfigurationField::value_at(const SpaceTimeGrid& grid, int level, const Index3& m) const {
  Index3 w{0, 0, 0};
  Index3 r = m;
  for (int k = 0; k < grid.n_space; ++k) {
    if (grid.boundary[k] == BoundaryKind::periodic) {
      w[k] = floor_div(m[k], grid.nodes[k]);
      r[k] = m[k] - w[k] * grid.nodes[k];
    } else if (m[k] < 0 || m[k] >= grid.nodes[k]) {
      throw IndexError("stencil leaves the fixed axis " + std::to_string(k));
    }
  }
  Vec y = phi[level].col(grid.node_index(r));
  for (int k = 0; k < grid.n_space; ++k)
    if (w[k] != 0) y += w[k] * period_offset[k];
  return y;
}

Vec ConfigurationField::corner_value(int level, const CellCorner& c) const {
  Vec y = phi[level].col(c.node);
  for (std::size_t k = 0; k < period_offset.size(); ++k)
    if (c.wraps[k] != 0) y += c.wraps[k] * period_offset[k];
  return y;
}

Eigen::MatrixXd ConfigurationField::cell_values(const SpaceTimeGrid& grid, int level, int cell) const {
  const auto corners = cell_corners(grid, cell);
  Eigen::MatrixXd out(fiber_dim, corners.size());
  for (std::size_t e = 0; e < corners.size(); ++e) out.col(e) = corner_value(level, corners[e]);
  return out;
}

void ConfigurationField::check_shape(const SpaceTimeGrid& grid) const {
  if (static_cast<int>(period_offset.size()) != grid.n_space) throw ShapeError("field: one seam offset per axis");
  for (const auto& o : period_offset)
    if (o.size() != fiber_dim) throw ShapeError("field: seam offset has wrong length");
  for (const auto& p : phi) {
    if (p.rows() != fiber_dim || p.cols() != grid.num_nodes()) throw ShapeError("field: phi level shape mismatch");
  }
  if (lambda_layout != LambdaLayout::none) {
    const int want = lambda_layout == LambdaLayout::node ? grid.num_nodes() : grid.num_cells();
    for (const auto& l : lambda)
      if (l.size() != 0 && l.size() != want) throw ShapeError("field: lambda level shape mismatch");
  }
}

std::vector<Vec> deformation_offsets(const SpaceTimeGrid& grid) {
  std::vector<Vec> out;
  for (int k = 0; k < grid.n_space; ++k) {
    Vec o = Vec::Zero(grid.n_space);
    if (grid.boundary[k] == BoundaryKind::periodic) o[k] = grid.hi[k] - grid.lo[k];
    out.push_back(o);
  }
  return out;
}

std::vector<Vec> zero_offsets(const SpaceTimeGrid& grid, int components) {
  return std::vector<Vec>(grid.n_space, Vec::Zero(components));
}

ConfigurationField sample_section(const SpaceTimeGrid& grid, int fiber_dim, int levels, const SectionFn& fn,
                                  std::vector<Vec> offsets, long first_level) {
  ConfigurationField f;
  f.fiber_dim = fiber_dim;
  f.period_offset = std::move(offsets);
  f.first_level = first_level;
  for (int l = 0; l < levels; ++l) {
    const double t = (first_level + l) * grid.dt;
    Eigen::MatrixXd m(fiber_dim, grid.num_nodes());
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const Vec y = fn(grid.node_coord(n), t);
      if (y.size() != fiber_dim) throw ShapeError("section function returned the wrong fiber dimension");
      m.col(n) = y;
    }
    f.phi.push_back(std::move(m));
  }
  f.check_shape(grid);
  return f;
}

JetSample make_jet(const Vec& x, double t, const Vec& y, const Vec& vdot, const Mat& F) {
  JetSample s;
  s.x = x;
  s.t = t;
  s.y = y;
  s.v.resize(y.size(), F.cols() + 1);
  s.v.col(0) = vdot;
  s.v.rightCols(F.cols()) = F;
  return s;
}

namespace {

// Time derivative of level values given a value lookup per level.
template <class Get>
auto time_derivative(int level, int levels, double dt, const Get& get) {
  if (levels < 2) throw ShapeError("jet extension needs at least 2 time levels");
  if (level > 0 && level < levels - 1) return ((get(level + 1) - get(level - 1)) / (2.0 * dt)).eval();
  if (level == 0) {
    if (levels >= 3) return ((-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * dt)).eval();
    return ((get(1) - get(0)) / dt).eval();
  }
  if (levels >= 3) return ((3.0 * get(level) - 4.0 * get(level - 1) + get(level - 2)) / (2.0 * dt)).eval();
  return ((get(level) - get(level - 1)) / dt).eval();
}

// Spatial derivative along one axis via a multi-index lookup.
template <class Get>
auto space_derivative(const SpaceTimeGrid& grid, const Index3& m, int axis, const Get& get) {
  const double h = grid.spacing(axis);
  auto shifted = [&](int d) {
    Index3 q = m;
    q[axis] += d;
    return get(q);
  };
  if (grid.boundary[axis] == BoundaryKind::fixed) {
    if (m[axis] == 0) return ((-3.0 * shifted(0) + 4.0 * shifted(1) - shifted(2)) / (2.0 * h)).eval();
    if (m[axis] == grid.nodes[axis] - 1)
      return ((3.0 * shifted(0) - 4.0 * shifted(-1) + shifted(-2)) / (2.0 * h)).eval();
  }
  return ((shifted(1) - shifted(-1)) / (2.0 * h)).eval();
}

Index3 wrap_index(const SpaceTimeGrid& grid, Index3 q) {
  for (int k = 0; k < grid.n_space; ++k) {
    if (grid.boundary[k] == BoundaryKind::periodic) {
      q[k] %= grid.nodes[k];
      if (q[k] < 0) q[k] += grid.nodes[k];
    } else if (q[k] < 0 || q[k] >= grid.nodes[k]) {
      throw IndexError("stencil leaves the fixed axis " + std::to_string(k));
    }
  }
  return q;
}

}  // namespace

Eigen::VectorXd lambda_at_nodes(const SpaceTimeGrid& grid, const ConfigurationField& field, int level) {
  if (!field.has_lambda(level)) throw MissingMultiplier("no multiplier stored for this level");
  if (field.lambda_layout == LambdaLayout::node) return field.lambda[level];
  Eigen::VectorXd out(grid.num_nodes());
  for (int n = 0; n < grid.num_nodes(); ++n) {
    double s = 0.0;
    const auto cells = node_cells(grid, n);
    for (const auto& [c, e] : cells) s += field.lambda[level][c];
    out[n] = s / static_cast<double>(cells.size());
  }
  return out;
}

Eigen::VectorXd nodal_derivative(const SpaceTimeGrid& grid, const Eigen::MatrixXd& data, int node, int axis) {
  const Index3 m = grid.node_multi(node);
  const int last = grid.nodes[axis] - 1;
  if (grid.boundary[axis] == BoundaryKind::fixed && last >= 4 && (m[axis] == 1 || m[axis] == last - 1)) {
    // Face values come from one-sided jets; their O(h^2) error must not be divided by h here.
    const int dir = m[axis] == 1 ? 1 : -1;
    auto at = [&](int d) {
      Index3 q = m;
      q[axis] += dir * d;
      return data.col(grid.node_index(q));
    };
    return (dir * (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * grid.spacing(axis))).eval();
  }
  return space_derivative(grid, m, axis, [&](const Index3& q) -> Eigen::VectorXd {
    return data.col(grid.node_index(wrap_index(grid, q)));
  });
}

JetSample jet_extend(const SpaceTimeGrid& grid, const ConfigurationField& field, int node, int level) {
  if (field.fiber_dim < 1) throw ShapeError("field has no fiber components");
  if (node < 0 || node >= grid.num_nodes()) throw IndexError("node index out of range");
  if (level < 0 || level >= field.levels()) throw IndexError("level index out of range");
  if (field.levels() < 2) throw ShapeError("jet extension needs at least 2 time levels");
  const int n = grid.n_space;
  const Index3 m = grid.node_multi(node);

  const Vec vdot = time_derivative(level, field.levels(), grid.dt,
                                   [&](int l) -> Vec { return field.node_value(l, node); });
  Mat F(field.fiber_dim, n);
  for (int k = 0; k < n; ++k) {
    F.col(k) = space_derivative(grid, m, k, [&](const Index3& q) { return field.value_at(grid, level, q); });
  }
  JetSample s = make_jet(grid.node_coord(node), (field.first_level + level) * grid.dt, field.node_value(level, node),
                         vdot, F);

  if (field.has_lambda(level)) {
    const Eigen::VectorXd lam = lambda_at_nodes(grid, field, level);
    s.lambda = lam[node];
    Vec beta = Vec::Zero(n + 1);
    // Time slot only when the neighbouring multiplier levels exist.
    const bool prev = field.has_lambda(level - 1), next = field.has_lambda(level + 1);
    if (prev && next) {
      beta[0] = (lambda_at_nodes(grid, field, level + 1)[node] - lambda_at_nodes(grid, field, level - 1)[node]) /
                (2.0 * grid.dt);
    } else if (next) {
      beta[0] = (lambda_at_nodes(grid, field, level + 1)[node] - lam[node]) / grid.dt;
    } else if (prev) {
      beta[0] = (lam[node] - lambda_at_nodes(grid, field, level - 1)[node]) / grid.dt;
    }
    const Eigen::MatrixXd lam_row = lam.transpose();
    for (int k = 0; k < n; ++k) beta[k + 1] = nodal_derivative(grid, lam_row, node, k)[0];
    s.beta = beta;
  }
  return s;
}

bool regularity_check(const JetSample& sample, double floor) {
  if (sample.v.rows() != sample.v.cols() - 1 || sample.v.rows() < 1) return false;
  const double d = sample.F().determinant();
  return std::isfinite(d) && d > floor;
}

double cell_gradient_weight(const SpaceTimeGrid& grid, const CellCorner& corner, int axis) {
  const double sign = corner.side[axis] ? 1.0 : -1.0;
  return sign / (static_cast<double>(grid.corners_per_cell() / 2) * grid.spacing(axis));
}

CellJet cell_jet(const SpaceTimeGrid& grid, int cell, const Eigen::MatrixXd& corners) {
  const auto cc = cell_corners(grid, cell);
  if (static_cast<int>(corners.cols()) != static_cast<int>(cc.size())) throw ShapeError("cell corner count mismatch");
  CellJet j;
  j.xc = grid.cell_center(cell);
  j.ybar = corners.rowwise().mean();
  j.F = Mat::Zero(corners.rows(), grid.n_space);
  for (std::size_t e = 0; e < cc.size(); ++e)
    for (int k = 0; k < grid.n_space; ++k) j.F.col(k) += cell_gradient_weight(grid, cc[e], k) * corners.col(e);
  return j;
}

void write_snapshot_csv(const std::string& path, const SpaceTimeGrid& grid, const ConfigurationField& field,
                        int level) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("cannot write snapshot " + path);
  const bool lam = field.has_lambda(level);
  for (int k = 0; k < grid.n_space; ++k) std::fprintf(f, "%sx%d", k ? "," : "", k);
  for (int a = 0; a < field.fiber_dim; ++a) std::fprintf(f, ",phi%d", a);
  if (lam) std::fprintf(f, ",lambda");
  std::fprintf(f, "\n");
  Eigen::VectorXd lnode;
  if (lam) lnode = lambda_at_nodes(grid, field, level);
  for (int n = 0; n < grid.num_nodes(); ++n) {
    const Vec x = grid.node_coord(n);
    for (int k = 0; k < grid.n_space; ++k) std::fprintf(f, "%s%.17g", k ? "," : "", x[k]);
    for (int a = 0; a < field.fiber_dim; ++a) std::fprintf(f, ",%.17g", field.phi[level](a, n));
    if (lam) std::fprintf(f, ",%.17g", lnode[n]);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

Snapshot read_snapshot_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open snapshot " + path);
  Snapshot s;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("snapshot is empty: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) s.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> r;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    if (r.size() != s.header.size()) throw ConfigError("snapshot row width mismatch in " + path);
    rows.push_back(std::move(r));
  }
  s.rows.resize(rows.size(), s.header.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < s.header.size(); ++j) s.rows(i, j) = rows[i][j];
  return s;
}

}  // namespace msym
