#include "msym/integrator.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <cmath>
#include <random>

#include "msym/errors.hpp"

namespace msym {

void SolverSettings::validate() const {
  if (!(newton_tol > 0.0)) throw ConfigError("solver: newton_tol must be positive");
  if (max_iter < 1) throw ConfigError("solver: max_iter must be at least 1");
  if (!(krylov_tol > 0.0)) throw ConfigError("solver: krylov tolerance must be positive");
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

double sqrt_det(const MetricField& m, const Vec& x) { return std::sqrt(m.eval(x).determinant()); }

// w^T (d_c g)(y) w for every c.
Vec metric_slope(const MetricField& g, const Vec& y, const Vec& w) {
  Vec out = Vec::Zero(y.size());
  if (g.is_constant()) return out;
  const auto dg = g.deriv(y);
  for (int c = 0; c < y.size(); ++c) out[c] = w.dot(dg[c] * w);
  return out;
}

Vec corner_position(const SpaceTimeGrid& grid, const Vec& xc, const CellCorner& cc) {
  Vec x = xc;
  for (int k = 0; k < grid.n_space; ++k) x[k] += (cc.side[k] - 0.5) * grid.spacing(k);
  return x;
}

struct CellPotential {
  double U = 0.0;
  Eigen::MatrixXd grad;  // N x corners, derivative of U (per unit volume)
};

CellPotential cell_potential(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                             const std::vector<CellCorner>& cc, const Eigen::MatrixXd& corners) {
  const CellJet cj = cell_jet(grid, cell, corners);
  const double s = model.density(cj.xc) * sqrt_det(model.G, cj.xc);
  const EnergyPartials ep = energy_partials(model, cj.xc, cj.ybar, cj.F);
  CellPotential out;
  out.U = s * ep.W;
  const int m = static_cast<int>(cc.size());
  out.grad.resize(corners.rows(), m);
  for (int e = 0; e < m; ++e) {
    Vec gcol = ep.dy / static_cast<double>(m);
    for (int k = 0; k < grid.n_space; ++k) gcol += cell_gradient_weight(grid, cc[e], k) * ep.dF.col(k);
    out.grad.col(e) = s * gcol;
  }
  return out;
}

struct CellVolume {
  double J = 1.0;
  Eigen::MatrixXd grad;  // N x corners
};

CellVolume cell_volume(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                       const std::vector<CellCorner>& cc, const Eigen::MatrixXd& corners) {
  const CellJet cj = cell_jet(grid, cell, corners);
  CellVolume out;
  out.J = jacobian_of(model, cj.xc, cj.ybar, cj.F);
  const Mat cof = out.J * small_inverse(cj.F).transpose();
  Vec dy = Vec::Zero(corners.rows());
  if (!model.g.is_constant()) {
    const Mat ginv = small_inverse(model.g.eval(cj.ybar));
    const auto dg = model.g.deriv(cj.ybar);
    for (int a = 0; a < dy.size(); ++a) dy[a] = 0.5 * out.J * (ginv * dg[a]).trace();
  }
  const int m = static_cast<int>(cc.size());
  out.grad.resize(corners.rows(), m);
  for (int e = 0; e < m; ++e) {
    Vec gcol = dy / static_cast<double>(m);
    for (int k = 0; k < grid.n_space; ++k) gcol += cell_gradient_weight(grid, cc[e], k) * cof.col(k);
    out.grad.col(e) = gcol;
  }
  return out;
}

// Lumped kinetic term of one node over one step: K = dt mu (g(a) + g(b))(w, w) / 4.
struct Kinetic {
  const MetricField& g;
  double dt;
  Vec d_end(double mu, const Vec& a, const Vec& b) const {  // dK/db
    const Vec w = (b - a) / dt;
    const Mat gbar = 0.5 * (g.eval(a) + g.eval(b));
    return mu * (gbar * w + 0.25 * dt * metric_slope(g, b, w));
  }
  Vec d_start(double mu, const Vec& a, const Vec& b) const {  // dK/da
    const Vec w = (b - a) / dt;
    const Mat gbar = 0.5 * (g.eval(a) + g.eval(b));
    return mu * (-gbar * w + 0.25 * dt * metric_slope(g, a, w));
  }
  double value(double mu, const Vec& a, const Vec& b) const {
    const Vec w = (b - a) / dt;
    return 0.25 * dt * mu * w.dot((g.eval(a) + g.eval(b)) * w);
  }
  // d(d_start)/db.
  Mat jac_start_end(double mu, const Vec& a, const Vec& b) const {
    const int N = static_cast<int>(b.size());
    if (g.is_constant()) return -(mu / dt) * g.eval(b);
    Mat J(N, N);
    for (int c = 0; c < N; ++c) {
      const double h = 1e-7 * std::max(1.0, std::abs(b[c]));
      Vec bp = b, bm = b;
      bp[c] += h;
      bm[c] -= h;
      J.col(c) = (d_start(mu, a, bp) - d_start(mu, a, bm)) / (2.0 * h);
    }
    return J;
  }
};

struct Topology {
  const SpaceTimeGrid& grid;
  int N = 0, n = 0, nn = 0, nc = 0;
  std::vector<std::vector<CellCorner>> corners;
  std::vector<std::vector<std::pair<int, int>>> incident;
  Eigen::VectorXd mu;
  std::vector<int> free_index;
  int nfree = 0;

  Topology(const MaterialModel& model, const SpaceTimeGrid& g, int fiber_dim) : grid(g) {
    N = fiber_dim;
    n = g.n_space;
    nn = g.num_nodes();
    nc = g.num_cells();
    corners.resize(nc);
    for (int c = 0; c < nc; ++c) corners[c] = cell_corners(g, c);
    incident.resize(nn);
    mu.resize(nn);
    free_index.assign(nn, -1);
    const double h = g.cell_measure();
    for (int node = 0; node < nn; ++node) {
      incident[node] = node_cells(g, node);
      const Vec x = g.node_coord(node);
      mu[node] = h * model.density(x) * sqrt_det(model.G, x) * g.cells_at_node(node) /
                 static_cast<double>(g.corners_per_cell());
      if (!g.on_fixed_boundary(node)) free_index[node] = nfree++;
    }
  }

  Eigen::MatrixXd corner_values(const ConfigurationField& f, const Eigen::MatrixXd& phi, int cell) const {
    const auto& cc = corners[cell];
    Eigen::MatrixXd out(N, cc.size());
    for (std::size_t e = 0; e < cc.size(); ++e) {
      Vec y = phi.col(cc[e].node);
      for (int k = 0; k < n; ++k)
        if (cc[e].wraps[k]) y += cc[e].wraps[k] * f.period_offset[k];
      out.col(e) = y;
    }
    return out;
  }
};

// Sum over cells of a per-corner gradient, scattered to nodes.
template <class CellFn>
Eigen::MatrixXd scatter(const Topology& topo, const CellFn& fn) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(topo.N, topo.nn);
  for (int c = 0; c < topo.nc; ++c) {
    const Eigen::MatrixXd gr = fn(c);
    for (std::size_t e = 0; e < topo.corners[c].size(); ++e) out.col(topo.corners[c][e].node) += gr.col(e);
  }
  return out;
}

// Sparse matrix of d J_c / d phi over free dofs: rows cells, columns dofs.
SpMat volume_jacobian(const MaterialModel& model, const Topology& topo, const ConfigurationField& f,
                      const Eigen::MatrixXd& phi, Eigen::VectorXd* J_minus_one) {
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(topo.nc) * topo.corners[0].size() * topo.N);
  if (J_minus_one) J_minus_one->resize(topo.nc);
  for (int c = 0; c < topo.nc; ++c) {
    const CellVolume cv = cell_volume(model, topo.grid, c, topo.corners[c], topo.corner_values(f, phi, c));
    if (J_minus_one) (*J_minus_one)[c] = cv.J - 1.0;
    for (std::size_t e = 0; e < topo.corners[c].size(); ++e) {
      const int fi = topo.free_index[topo.corners[c][e].node];
      if (fi < 0) continue;
      for (int a = 0; a < topo.N; ++a) trip.emplace_back(c, fi * topo.N + a, cv.grad(a, e));
    }
  }
  SpMat B(topo.nc, topo.nfree * topo.N);
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

bool use_gauge(const MaterialModel& model, const SpaceTimeGrid& grid) {
  // Constant multipliers are an exact null direction when the discrete image volume is invariant.
  return model.g.is_constant() && grid.n_space <= 2;
}

// Solve the multiplier system S x = rhs, bordered by sum(x) = border when gauged.
Eigen::VectorXd solve_multiplier(const SpMat& S, const Eigen::VectorXd& rhs, bool gauge, double border,
                                 const SolverSettings& settings) {
  const int m = static_cast<int>(S.rows());
  SpMat A = S;
  Eigen::VectorXd b = rhs;
  if (gauge) {
    std::vector<Triplet> trip;
    trip.reserve(S.nonZeros() + 2 * m);
    for (int k = 0; k < S.outerSize(); ++k)
      for (SpMat::InnerIterator it(S, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < m; ++i) {
      trip.emplace_back(i, m, 1.0);
      trip.emplace_back(m, i, 1.0);
    }
    A.resize(m + 1, m + 1);
    A.setFromTriplets(trip.begin(), trip.end());
    b.conservativeResize(m + 1);
    b[m] = border;
  }
  A.makeCompressed();
  Eigen::VectorXd x;
  if (settings.linear_solver == LinearSolver::direct_lu) {
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw SingularSaddle("multiplier system is singular");
    x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw SingularSaddle("multiplier solve failed");
  } else {
    Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> it;
    it.setTolerance(settings.krylov_tol);
    it.setMaxIterations(10 * (m + 1));
    it.compute(A);
    if (it.info() != Eigen::Success) throw SingularSaddle("multiplier preconditioner failed");
    x = it.solve(b);
    if (it.info() != Eigen::Success || !x.allFinite()) throw SingularSaddle("Krylov multiplier solve failed");
  }
  return x.head(m);
}

// S = B1 Minv Bk^T restricted to cells sharing a free node.
SpMat schur(const Topology& topo, const SpMat& B1, const std::vector<Mat>& Minv, const SpMat& Bk) {
  const SpMat B1c = B1;  // column-major: column = dof
  const SpMat Bkc = Bk;
  std::vector<Triplet> trip;
  for (int node = 0; node < topo.nn; ++node) {
    const int fi = topo.free_index[node];
    if (fi < 0) continue;
    const auto& inc = topo.incident[node];
    // Gather dense rows of B1 and Bk for this node's dofs.
    Eigen::MatrixXd b1(inc.size(), topo.N), bk(inc.size(), topo.N);
    b1.setZero();
    bk.setZero();
    for (int a = 0; a < topo.N; ++a) {
      const int col = fi * topo.N + a;
      for (SpMat::InnerIterator it(B1c, col); it; ++it)
        for (std::size_t i = 0; i < inc.size(); ++i)
          if (inc[i].first == it.row()) b1(i, a) += it.value();
      for (SpMat::InnerIterator it(Bkc, col); it; ++it)
        for (std::size_t i = 0; i < inc.size(); ++i)
          if (inc[i].first == it.row()) bk(i, a) += it.value();
    }
    const Eigen::MatrixXd blk = b1 * Minv[node] * bk.transpose();
    for (std::size_t i = 0; i < inc.size(); ++i)
      for (std::size_t j = 0; j < inc.size(); ++j) trip.emplace_back(inc[i].first, inc[j].first, blk(i, j));
  }
  SpMat S(topo.nc, topo.nc);
  S.setFromTriplets(trip.begin(), trip.end());
  return S;
}

// Discrete EL rows at level k given the three position levels and optional multipliers.
Eigen::MatrixXd el_rows(const MaterialModel& model, const Topology& topo, const ConfigurationField& f,
                        const Eigen::MatrixXd& prev, const Eigen::MatrixXd& cur, const Eigen::MatrixXd& next,
                        const Eigen::VectorXd* lambda) {
  const SpaceTimeGrid& grid = topo.grid;
  const double dt = grid.dt, h = grid.cell_measure();
  const Kinetic kin{model.g, dt};
  Eigen::MatrixXd R = scatter(topo, [&](int c) {
    const CellPotential cp = cell_potential(model, grid, c, topo.corners[c], topo.corner_values(f, cur, c));
    Eigen::MatrixXd gr = -dt * cp.grad;
    if (lambda) {
      const CellVolume cv = cell_volume(model, grid, c, topo.corners[c], topo.corner_values(f, cur, c));
      gr += dt * (*lambda)[c] * cv.grad;
    }
    return gr;
  });
  for (int node = 0; node < topo.nn; ++node) {
    if (topo.free_index[node] < 0) {
      R.col(node).setZero();
      continue;
    }
    const Vec a = prev.col(node), b = cur.col(node), c = next.col(node);
    R.col(node) += (kin.d_end(topo.mu[node], a, b) + kin.d_start(topo.mu[node], b, c)) / h;
  }
  return R;
}

double max_free(const Topology& topo, const Eigen::MatrixXd& R) {
  double m = 0.0;
  for (int node = 0; node < topo.nn; ++node)
    if (topo.free_index[node] >= 0) m = std::max(m, R.col(node).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

double discrete_lagrangian(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                           const Eigen::MatrixXd& corners_now, const Eigen::MatrixXd& corners_next,
                           const DiscreteLagrangianConfig& config) {
  const auto cc = cell_corners(grid, cell);
  if (corners_now.cols() != static_cast<int>(cc.size()) || corners_next.cols() != corners_now.cols() ||
      corners_next.rows() != corners_now.rows()) {
    throw ShapeError("discrete Lagrangian needs a full corner stencil on both levels");
  }
  const double V = grid.dt * grid.cell_measure();
  const Vec xc = grid.cell_center(cell);
  if (config.quadrature == Quadrature::midpoint) {
    const CellJet a = cell_jet(grid, cell, corners_now), b = cell_jet(grid, cell, corners_next);
    const JetSample s = make_jet(xc, 0.0, 0.5 * (a.ybar + b.ybar), (b.ybar - a.ybar) / grid.dt, 0.5 * (a.F + b.F));
    return V * lagrangian_density(model, s);
  }
  const Kinetic kin{model.g, grid.dt};
  double K = 0.0;
  const double share = grid.cell_measure() / static_cast<double>(cc.size());
  for (std::size_t e = 0; e < cc.size(); ++e) {
    const Vec x = corner_position(grid, xc, cc[e]);
    const double mu = share * model.density(x) * sqrt_det(model.G, x);
    K += kin.value(mu, corners_now.col(e), corners_next.col(e));
  }
  const double U0 = cell_potential(model, grid, cell, cc, corners_now).U;
  const double U1 = cell_potential(model, grid, cell, cc, corners_next).U;
  return K - 0.5 * V * (U0 + U1);
}

Eigen::VectorXd discrete_lagrangian_gradient(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                                             const Eigen::MatrixXd& corners_now,
                                             const Eigen::MatrixXd& corners_next) {
  const auto cc = cell_corners(grid, cell);
  const int N = static_cast<int>(corners_now.rows());
  const int m = static_cast<int>(cc.size());
  const double V = grid.dt * grid.cell_measure();
  const Vec xc = grid.cell_center(cell);
  const Kinetic kin{model.g, grid.dt};
  const double share = grid.cell_measure() / static_cast<double>(m);
  Eigen::VectorXd out(2 * m * N);
  const CellPotential p0 = cell_potential(model, grid, cell, cc, corners_now);
  const CellPotential p1 = cell_potential(model, grid, cell, cc, corners_next);
  for (int e = 0; e < m; ++e) {
    const Vec x = corner_position(grid, xc, cc[e]);
    const double mu = share * model.density(x) * sqrt_det(model.G, x);
    const Vec a = corners_now.col(e), b = corners_next.col(e);
    out.segment(e * N, N) = kin.d_start(mu, a, b) - 0.5 * V * p0.grad.col(e);
    out.segment((m + e) * N, N) = kin.d_end(mu, a, b) - 0.5 * V * p1.grad.col(e);
  }
  return out;
}

Eigen::MatrixXd discrete_lagrangian_hessian(const MaterialModel& model, const SpaceTimeGrid& grid, int cell,
                                            const Eigen::MatrixXd& corners_now,
                                            const Eigen::MatrixXd& corners_next) {
  const int N = static_cast<int>(corners_now.rows());
  const int m = static_cast<int>(corners_now.cols());
  const int dim = 2 * m * N;
  Eigen::MatrixXd H(dim, dim);
  for (int j = 0; j < dim; ++j) {
    Eigen::MatrixXd a = corners_now, b = corners_next;
    double& slot = j < m * N ? a((j % N), j / N) : b((j % N), (j - m * N) / N);
    const double base = slot;
    const double h = 1e-6 * std::max(1.0, std::abs(base));
    slot = base + h;
    const Eigen::VectorXd up = discrete_lagrangian_gradient(model, grid, cell, a, b);
    slot = base - h;
    const Eigen::VectorXd dn = discrete_lagrangian_gradient(model, grid, cell, a, b);
    H.col(j) = (up - dn) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

ConfigurationField step(const MaterialModel& model, const ConfigurationField& field, const SpaceTimeGrid& grid,
                        const SolverSettings& settings, bool constrained, StepReport* report,
                        const DiscreteLagrangianConfig& config) {
  settings.validate();
  if (config.quadrature != Quadrature::trapezoid) {
    throw ConfigError("time stepping uses the trapezoid quadrature; midpoint is available for evaluation only");
  }
  if (field.levels() < 2) throw ShapeError("step needs two committed levels");
  field.check_shape(grid);
  const int L = field.levels();
  const Topology topo(model, grid, field.fiber_dim);
  const int N = topo.N;
  const Eigen::MatrixXd& prev = field.phi[L - 2];
  const Eigen::MatrixXd& cur = field.phi[L - 1];
  Eigen::MatrixXd next = 2.0 * cur - prev;
  for (int node = 0; node < topo.nn; ++node)
    if (topo.free_index[node] < 0) next.col(node) = cur.col(node);

  Eigen::VectorXd lambda;
  SpMat Bk;
  const bool gauge = constrained && use_gauge(model, grid);
  if (constrained) {
    if (N != grid.n_space) throw ShapeError("constrained stepping needs fiber and base of equal dimension");
    lambda = field.has_lambda(L - 2) && field.lambda_layout == LambdaLayout::cell ? field.lambda[L - 2]
                                                                                  : Eigen::VectorXd::Zero(topo.nc);
    if (gauge) lambda.array() -= lambda.mean();
    Bk = grid.dt * volume_jacobian(model, topo, field, cur, nullptr);
  }

  const long abs_level = field.first_level + L;
  StepReport rep;
  rep.level = abs_level;
  bool converged = false;
  double res = 0.0;
  Eigen::VectorXd C;
  for (int it = 0; it <= settings.max_iter; ++it) {
    const Eigen::MatrixXd R = el_rows(model, topo, field, prev, cur, next, constrained ? &lambda : nullptr);
    ++rep.iterations;
    res = max_free(topo, R);
    SpMat B1;
    if (constrained) {
      B1 = volume_jacobian(model, topo, field, next, &C);
      rep.constraint = C.cwiseAbs().maxCoeff();
      res = std::max(res, rep.constraint);
    }
    if (res <= settings.newton_tol) {
      converged = true;
      break;
    }
    if (it == settings.max_iter) break;

    const double h = grid.cell_measure();
    const Kinetic kin{model.g, grid.dt};
    std::vector<Mat> Minv(topo.nn);
    for (int node = 0; node < topo.nn; ++node) {
      if (topo.free_index[node] < 0) continue;
      const Mat M = kin.jac_start_end(topo.mu[node], cur.col(node), next.col(node)) / h;
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (!lu.isInvertible()) throw SingularSaddle("singular mass block at node " + std::to_string(node));
      Minv[node] = lu.inverse();
    }
    Eigen::MatrixXd force = R;  // R + Bk^T dlambda after the multiplier solve
    if (constrained) {
      // rhs = C - B1 Minv R.
      Eigen::VectorXd MR = Eigen::VectorXd::Zero(topo.nfree * N);
      for (int node = 0; node < topo.nn; ++node) {
        const int fi = topo.free_index[node];
        if (fi >= 0) MR.segment(fi * N, N) = Minv[node] * R.col(node);
      }
      const Eigen::VectorXd rhs = C - B1 * MR;
      const SpMat S = schur(topo, B1, Minv, Bk);
      const Eigen::VectorXd dl = solve_multiplier(S, rhs, gauge, -lambda.sum(), settings);
      lambda += dl;
      const Eigen::VectorXd Bdl = Bk.transpose() * dl;
      for (int node = 0; node < topo.nn; ++node) {
        const int fi = topo.free_index[node];
        if (fi >= 0) force.col(node) += Bdl.segment(fi * N, N);
      }
    }
    for (int node = 0; node < topo.nn; ++node) {
      if (topo.free_index[node] < 0) continue;
      next.col(node) -= Minv[node] * force.col(node);
    }
  }
  rep.residual = res;
  if (report) *report = rep;
  if (!converged) {
    throw NewtonDiverged("Newton did not reach the tolerance at level " + std::to_string(abs_level), abs_level, res);
  }

  ConfigurationField out = field;
  out.phi.push_back(next);
  if (constrained) {
    out.lambda_layout = LambdaLayout::cell;
    out.lambda.resize(out.phi.size());
    out.lambda[L - 1] = lambda;
    out.lambda[L] = Eigen::VectorXd();
  } else if (out.lambda_layout != LambdaLayout::none) {
    out.lambda.resize(out.phi.size());
  }
  return out;
}

ConfigurationField initialize(const MaterialModel& model, const SpaceTimeGrid& grid, const Eigen::MatrixXd& phi0,
                              const Eigen::MatrixXd& V0, std::vector<Vec> offsets, bool constrained,
                              const SolverSettings& settings) {
  grid.validate();
  settings.validate();
  ConfigurationField f;
  f.fiber_dim = static_cast<int>(phi0.rows());
  f.period_offset = std::move(offsets);
  f.phi.push_back(phi0);
  if (V0.rows() != phi0.rows() || V0.cols() != phi0.cols()) throw ShapeError("initial velocity shape mismatch");
  Eigen::MatrixXd phi1 = phi0 + grid.dt * V0;
  for (int node = 0; node < grid.num_nodes(); ++node)
    if (grid.on_fixed_boundary(node)) phi1.col(node) = phi0.col(node);
  f.check_shape(grid);
  if (constrained) {
    const Topology topo(model, grid, f.fiber_dim);
    const int N = topo.N;
    const bool gauge = use_gauge(model, grid);
    const SpMat Bp = volume_jacobian(model, topo, f, phi1, nullptr);
    std::vector<Mat> Minv(topo.nn);
    for (int node = 0; node < topo.nn; ++node) {
      if (topo.free_index[node] >= 0) Minv[node] = small_inverse(topo.mu[node] * model.g.eval(phi1.col(node)));
    }
    bool done = false;
    double res = 0.0;
    for (int it = 0; it <= settings.max_iter; ++it) {
      Eigen::VectorXd C;
      const SpMat B = volume_jacobian(model, topo, f, phi1, &C);
      res = C.cwiseAbs().maxCoeff();
      if (res <= settings.newton_tol) {
        done = true;
        break;
      }
      if (it == settings.max_iter) break;
      const SpMat S = schur(topo, B, Minv, Bp);
      const Eigen::VectorXd dm = solve_multiplier(S, C, gauge, 0.0, settings);
      const Eigen::VectorXd corr = Bp.transpose() * dm;
      for (int node = 0; node < topo.nn; ++node) {
        const int fi = topo.free_index[node];
        if (fi >= 0) phi1.col(node) -= Minv[node] * corr.segment(fi * N, N);
      }
    }
    if (!done) throw NewtonDiverged("initial constraint projection did not converge", 1, res);
    f.lambda_layout = LambdaLayout::cell;
    f.lambda.assign(2, Eigen::VectorXd());
  }
  f.phi.push_back(phi1);
  return f;
}

Eigen::MatrixXd discrete_el_rows(const MaterialModel& model, const SpaceTimeGrid& grid,
                                 const ConfigurationField& field, int level) {
  if (level < 1 || level > field.levels() - 2) throw IndexError("discrete EL rows need a level on each side");
  const Topology topo(model, grid, field.fiber_dim);
  const bool lam = field.has_lambda(level) && field.lambda_layout == LambdaLayout::cell;
  return el_rows(model, topo, field, field.phi[level - 1], field.phi[level], field.phi[level + 1],
                 lam ? &field.lambda[level] : nullptr);
}

double discrete_energy(const MaterialModel& model, const SpaceTimeGrid& grid, const ConfigurationField& field,
                       int level) {
  if (level < 0 || level > field.levels() - 2) throw IndexError("discrete energy needs levels k and k + 1");
  const Topology topo(model, grid, field.fiber_dim);
  const Kinetic kin{model.g, grid.dt};
  const Eigen::MatrixXd& a = field.phi[level];
  const Eigen::MatrixXd& b = field.phi[level + 1];
  double K = 0.0, U = 0.0;
  for (int node = 0; node < topo.nn; ++node) K += kin.value(topo.mu[node], a.col(node), b.col(node)) / grid.dt;
  for (int c = 0; c < topo.nc; ++c) {
    U += cell_potential(model, grid, c, topo.corners[c], topo.corner_values(field, a, c)).U;
    U += cell_potential(model, grid, c, topo.corners[c], topo.corner_values(field, b, c)).U;
  }
  return K + 0.5 * grid.cell_measure() * U;
}

Vec discrete_momentum(const MaterialModel& model, const SpaceTimeGrid& grid, const ConfigurationField& field,
                      int level) {
  if (level < 0 || level > field.levels() - 2) throw IndexError("discrete momentum needs levels k and k + 1");
  const Topology topo(model, grid, field.fiber_dim);
  const Kinetic kin{model.g, grid.dt};
  const double dt = grid.dt, h = grid.cell_measure();
  const Eigen::MatrixXd& a = field.phi[level];
  const Eigen::MatrixXd& b = field.phi[level + 1];
  const bool lam = field.has_lambda(level) && field.lambda_layout == LambdaLayout::cell;
  Vec P = Vec::Zero(topo.N);
  for (int node = 0; node < topo.nn; ++node) P -= kin.d_start(topo.mu[node], a.col(node), b.col(node));
  for (int c = 0; c < topo.nc; ++c) {
    const Eigen::MatrixXd cv = topo.corner_values(field, a, c);
    P += 0.5 * dt * h * cell_potential(model, grid, c, topo.corners[c], cv).grad.rowwise().sum();
    if (lam) P -= dt * h * field.lambda[level][c] * cell_volume(model, grid, c, topo.corners[c], cv).grad.rowwise().sum();
  }
  return P;
}

Trajectory run(const MaterialModel& model, const ConfigurationField& initial, const SpaceTimeGrid& grid,
               const SolverSettings& settings, const RunOptions& options,
               const std::vector<DiagnosticsHook>& hooks) {
  if (options.n_steps < 0) throw ConfigError("n_steps must be non-negative");
  Trajectory tr;
  tr.field = initial;
  for (long s = 0; s < options.n_steps; ++s) {
    StepReport rep;
    tr.field = step(model, tr.field, grid, settings, options.constrained, &rep);
    const int k = tr.field.levels() - 2;
    LevelDiagnostics d;
    d.level = rep.level;
    d.iterations = rep.iterations;
    d.residual = rep.residual;
    d.constraint = rep.constraint;
    d.energy = discrete_energy(model, grid, tr.field, k);
    d.momentum = discrete_momentum(model, grid, tr.field, k);
    tr.diagnostics.push_back(d);
    if (!options.keep_history && tr.field.levels() > 3) {
      const int drop = tr.field.levels() - 3;
      tr.field.phi.erase(tr.field.phi.begin(), tr.field.phi.begin() + drop);
      if (!tr.field.lambda.empty()) tr.field.lambda.erase(tr.field.lambda.begin(), tr.field.lambda.begin() + drop);
      tr.field.first_level += drop;
    }
    if (options.cadence > 0 && (s + 1) % options.cadence == 0) {
      for (const auto& hook : hooks) hook(tr.field, rep.level);
    }
  }
  return tr;
}

MultisymplecticDefect multisymplectic_defect(const MaterialModel& model, const SpaceTimeGrid& grid,
                                             const ConfigurationField& traj, const PatchSpec& patch,
                                             unsigned seed) {
  const int n = grid.n_space;
  const Topology topo(model, grid, traj.fiber_dim);
  const int N = topo.N, nn = topo.nn, nc = topo.nc, m = grid.corners_per_cell();
  const int K = patch.first_level + patch.levels;
  if (K > traj.levels()) throw IndexError("patch extends past the stored trajectory");
  for (int k = 0; k < n; ++k) {
    if (patch.nodes > grid.nodes[k]) throw IndexError("patch wider than the grid");
    if (grid.boundary[k] == BoundaryKind::fixed && patch.origin[k] + patch.nodes > grid.nodes[k])
      throw IndexError("patch leaves a fixed axis");
  }

  // Hessians of every cell on every slab up to the end of the patch.
  std::vector<std::vector<Eigen::MatrixXd>> H(K - 1, std::vector<Eigen::MatrixXd>(nc));
  for (int k = 0; k < K - 1; ++k)
    for (int c = 0; c < nc; ++c)
      H[k][c] = discrete_lagrangian_hessian(model, grid, c, topo.corner_values(traj, traj.phi[k], c),
                                            topo.corner_values(traj, traj.phi[k + 1], c));

  auto cell_vec = [&](const std::vector<Eigen::MatrixXd>& W, int k, int c) {
    Eigen::VectorXd v(2 * m * N);
    for (int e = 0; e < m; ++e) {
      v.segment(e * N, N) = W[k].col(topo.corners[c][e].node);
      v.segment((m + e) * N, N) = W[k + 1].col(topo.corners[c][e].node);
    }
    return v;
  };

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto march = [&]() {
    std::vector<Eigen::MatrixXd> W(K, Eigen::MatrixXd::Zero(N, nn));
    for (int k = 0; k < std::min(2, K); ++k)
      for (int node = 0; node < nn; ++node)
        if (topo.free_index[node] >= 0)
          for (int a = 0; a < N; ++a) W[k](a, node) = uni(rng);
    for (int k = 1; k + 1 < K; ++k) {
      // Rows: level-k dofs; unknowns: level-(k+1) dofs.
      const int dof = topo.nfree * N;
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dof, dof);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(dof);
      for (int c = 0; c < nc; ++c) {
        const Eigen::VectorXd prev = H[k - 1][c] * cell_vec(W, k - 1, c);
        Eigen::VectorXd known = cell_vec(W, k, c);
        known.tail(m * N).setZero();
        const Eigen::VectorXd here = H[k][c] * known;
        for (int e = 0; e < m; ++e) {
          const int fi = topo.free_index[topo.corners[c][e].node];
          if (fi < 0) continue;
          b.segment(fi * N, N) -= prev.segment((m + e) * N, N) + here.segment(e * N, N);
          for (int f = 0; f < m; ++f) {
            const int fj = topo.free_index[topo.corners[c][f].node];
            if (fj < 0) continue;
            A.block(fi * N, fj * N, N, N) += H[k][c].block(e * N, (m + f) * N, N, N);
          }
        }
      }
      const Eigen::VectorXd x = A.partialPivLu().solve(b);
      for (int node = 0; node < nn; ++node) {
        const int fi = topo.free_index[node];
        if (fi >= 0) W[k + 1].col(node) = x.segment(fi * N, N);
      }
    }
    return W;
  };
  const std::vector<Eigen::MatrixXd> V = march();
  const std::vector<Eigen::MatrixXd> W = march();

  // Patch membership in periodic index space.
  auto offset_along = [&](int node, int axis) {
    const int i = grid.node_multi(node)[axis] - patch.origin[axis];
    return grid.boundary[axis] == BoundaryKind::periodic ? ((i % grid.nodes[axis]) + grid.nodes[axis]) % grid.nodes[axis]
                                                         : i;
  };
  auto cell_in_patch = [&](int c) {
    const Index3 cm = grid.cell_multi(c);
    for (int k = 0; k < n; ++k) {
      int i = cm[k] - patch.origin[k];
      if (grid.boundary[k] == BoundaryKind::periodic) i = ((i % grid.cells_along(k)) + grid.cells_along(k)) % grid.cells_along(k);
      if (i < 0 || i > patch.nodes - 2) return false;
    }
    return true;
  };
  auto on_patch_boundary = [&](int node, int level) {
    if (level == patch.first_level || level == K - 1) return true;
    for (int k = 0; k < n; ++k) {
      const int i = offset_along(node, k);
      if (i == 0 || i == patch.nodes - 1) return true;
    }
    return false;
  };

  MultisymplecticDefect out;
  double boundary_sum = 0.0;
  for (int k = patch.first_level; k + 1 < K; ++k) {
    for (int c = 0; c < nc; ++c) {
      if (!cell_in_patch(c)) continue;
      const Eigen::VectorXd v = cell_vec(V, k, c), w = cell_vec(W, k, c);
      const Eigen::VectorXd Hw = H[k][c] * w, Hv = H[k][c] * v;
      for (int slot = 0; slot < 2 * m; ++slot) {
        const int node = topo.corners[c][slot % m].node;
        const int level = k + slot / m;
        if (!on_patch_boundary(node, level)) continue;
        const double term =
            v.segment(slot * N, N).dot(Hw.segment(slot * N, N)) - w.segment(slot * N, N).dot(Hv.segment(slot * N, N));
        boundary_sum += term;
        out.magnitude += std::abs(term);
      }
    }
  }
  // Linearised EL defect at interior patch nodes, relative to the row scale.
  double worst = 0.0, scale = 0.0;
  for (int k = patch.first_level + 1; k + 1 < K; ++k) {
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(N, nn), mag = Eigen::MatrixXd::Zero(N, nn);
    for (int c = 0; c < nc; ++c) {
      const Eigen::VectorXd a = H[k - 1][c] * cell_vec(V, k - 1, c);
      const Eigen::VectorXd b = H[k][c] * cell_vec(V, k, c);
      for (int e = 0; e < m; ++e) {
        const int node = topo.corners[c][e].node;
        rows.col(node) += a.segment((m + e) * N, N) + b.segment(e * N, N);
        mag.col(node) += a.segment((m + e) * N, N).cwiseAbs() + b.segment(e * N, N).cwiseAbs();
      }
    }
    for (int node = 0; node < nn; ++node) {
      if (topo.free_index[node] < 0 || on_patch_boundary(node, k)) continue;
      worst = std::max(worst, rows.col(node).cwiseAbs().maxCoeff());
      scale = std::max(scale, mag.col(node).maxCoeff());
    }
  }
  out.interior_residual = scale > 0.0 ? worst / scale : worst;
  out.defect = std::abs(boundary_sum);
  out.relative = out.magnitude > 0.0 ? out.defect / out.magnitude : out.defect;
  return out;
}

}  // namespace msym
