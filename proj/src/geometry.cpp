#include "msym/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "msym/errors.hpp"

namespace msym {

namespace {

void require_dim(const Vec& x, int dim) {
  if (x.size() != dim) {
    throw ShapeError("metric query point has dimension " + std::to_string(x.size()) +
                     ", chart has " + std::to_string(dim));
  }
}

// Four-point Lagrange weights for the stencil starting at integer index `first`.
std::array<double, 4> lagrange4(double s, int first) {
  std::array<double, 4> w{};
  for (int i = 0; i < 4; ++i) {
    double num = 1.0, den = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j == i) continue;
      num *= s - (first + j);
      den *= static_cast<double>(i - j);
    }
    w[i] = num / den;
  }
  return w;
}

}  // namespace

struct MetricField::Table {
  MetricTable data;
  std::vector<double> spacing;
};

MetricField MetricField::euclidean(int dim) {
  if (dim < 1 || dim > kMaxDim) throw ShapeError("euclidean metric dimension out of range");
  MetricField m;
  m.kind_ = Kind::euclidean;
  m.dim_ = dim;
  m.label_ = "euclidean";
  return m;
}

MetricField MetricField::conformal(int dim, ScalarFn c, GradFn grad_c, std::string label) {
  if (dim < 1 || dim > kMaxDim) throw ShapeError("conformal metric dimension out of range");
  MetricField m;
  m.kind_ = Kind::conformal;
  m.dim_ = dim;
  m.label_ = std::move(label);
  m.c_ = std::move(c);
  m.grad_c_ = std::move(grad_c);
  m.constant_ = false;
  return m;
}

MetricField MetricField::conformal_constant(int dim, double c) {
  if (dim < 1 || dim > kMaxDim) throw ShapeError("conformal metric dimension out of range");
  if (!(c > 0.0)) throw SingularMetric("conformal factor must be positive");
  MetricField m;
  m.kind_ = Kind::conformal;
  m.dim_ = dim;
  m.label_ = "conformal";
  m.constant_c_ = c;
  m.constant_ = true;
  return m;
}

MetricField MetricField::polar(double r_min) {
  MetricField m;
  m.kind_ = Kind::polar;
  m.dim_ = 2;
  m.label_ = "polar";
  m.r_min_ = r_min;
  m.constant_ = false;
  return m;
}

MetricField MetricField::from_table(MetricTable table, double fd_step) {
  if (table.dim < 1 || table.dim > 2) throw ShapeError("tabulated metrics support 1 or 2 dimensions");
  if (static_cast<int>(table.nodes.size()) != table.dim || static_cast<int>(table.lo.size()) != table.dim ||
      static_cast<int>(table.hi.size()) != table.dim) {
    throw ShapeError("metric table header inconsistent with its dimension");
  }
  std::size_t count = 1;
  for (int n : table.nodes) {
    if (n < 4) throw ShapeError("metric table needs at least 4 nodes per axis");
    count *= static_cast<std::size_t>(n);
  }
  if (table.values.size() != count * table.dim * table.dim) {
    throw ShapeError("metric table has " + std::to_string(table.values.size()) + " values, expected " +
                     std::to_string(count * table.dim * table.dim));
  }
  auto t = std::make_shared<Table>();
  double scale = 0.0;
  for (int k = 0; k < table.dim; ++k) {
    const double len = table.hi[k] - table.lo[k];
    if (!(len > 0.0)) throw ShapeError("metric table extent is degenerate");
    t->spacing.push_back(len / (table.nodes[k] - 1));
    scale = std::max(scale, len);
  }
  MetricField m;
  m.kind_ = Kind::user_table;
  m.dim_ = table.dim;
  m.label_ = "user_table";
  m.constant_ = false;
  m.fd_step_ = fd_step > 0.0 ? fd_step : 1e-5 * scale;
  t->data = std::move(table);
  m.table_ = std::move(t);
  return m;
}

bool MetricField::is_constant() const {
  return kind_ == Kind::euclidean || (kind_ == Kind::conformal && constant_);
}

void MetricField::check_domain(const Vec& x) const {
  require_dim(x, dim_);
  if (kind_ == Kind::polar && x[0] < r_min_) {
    throw DomainError("polar chart queried at r = " + std::to_string(x[0]) + " below r_min");
  }
  if (kind_ == Kind::user_table) {
    const auto& d = table_->data;
    for (int k = 0; k < dim_; ++k) {
      const double tol = 1e-9 * (d.hi[k] - d.lo[k]);
      if (x[k] < d.lo[k] - tol || x[k] > d.hi[k] + tol) {
        throw DomainError("point outside the tabulated metric extent");
      }
    }
  }
}

Mat MetricField::table_eval(const Vec& x) const {
  const auto& d = table_->data;
  std::array<std::array<double, 4>, 2> w{};
  std::array<int, 2> first{};
  for (int k = 0; k < dim_; ++k) {
    const double s = (x[k] - d.lo[k]) / table_->spacing[k];
    int f = static_cast<int>(std::floor(s)) - 1;
    f = std::clamp(f, 0, d.nodes[k] - 4);
    first[k] = f;
    w[k] = lagrange4(s, f);
  }
  Mat m = Mat::Zero(dim_, dim_);
  const int stride = dim_ * dim_;
  if (dim_ == 1) {
    for (int i = 0; i < 4; ++i) m(0, 0) += w[0][i] * d.values[first[0] + i];
  } else {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const std::size_t node = static_cast<std::size_t>(first[0] + i) * d.nodes[1] + (first[1] + j);
        const double wij = w[0][i] * w[1][j];
        for (int a = 0; a < dim_; ++a)
          for (int b = 0; b < dim_; ++b) m(a, b) += wij * d.values[node * stride + a * dim_ + b];
      }
    }
  }
  return 0.5 * (m + m.transpose());
}

Mat MetricField::eval(const Vec& x) const {
  check_domain(x);
  switch (kind_) {
    case Kind::euclidean:
      return Mat::Identity(dim_, dim_);
    case Kind::conformal: {
      const double c = constant_ ? constant_c_ : c_(x);
      return (c * c) * Mat::Identity(dim_, dim_);
    }
    case Kind::polar: {
      Mat m = Mat::Identity(2, 2);
      m(1, 1) = x[0] * x[0];
      return m;
    }
    case Kind::user_table:
      return table_eval(x);
  }
  return Mat::Identity(dim_, dim_);
}

std::array<Mat, kMaxDim> MetricField::deriv(const Vec& x) const {
  check_domain(x);
  std::array<Mat, kMaxDim> out;
  for (int k = 0; k < dim_; ++k) out[k] = Mat::Zero(dim_, dim_);
  switch (kind_) {
    case Kind::euclidean:
      break;
    case Kind::conformal:
      if (!constant_) {
        const double c = c_(x);
        const Vec gc = grad_c_(x);
        for (int k = 0; k < dim_; ++k) out[k] = (2.0 * c * gc[k]) * Mat::Identity(dim_, dim_);
      }
      break;
    case Kind::polar:
      out[0](1, 1) = 2.0 * x[0];
      break;
    case Kind::user_table: {
      const auto& d = table_->data;
      for (int k = 0; k < dim_; ++k) {
        // Clamp the stencil inside the table so boundary queries stay valid.
        const double h = fd_step_;
        Vec base = x;
        base[k] = std::clamp(x[k], d.lo[k] + 2.0 * h, d.hi[k] - 2.0 * h);
        auto at = [&](double off) {
          Vec p = base;
          p[k] += off;
          return table_eval(p);
        };
        out[k] = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
      }
      break;
    }
  }
  return out;
}

void MetricField::check_regular(const Vec& x) const {
  const Mat m = eval(x);
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kConditionCap) {
    throw SingularMetric("metric is singular or ill-conditioned (eigenvalues " + std::to_string(lo) + ", " +
                         std::to_string(hi) + ")");
  }
}

ChristoffelValue christoffel_from(const Mat& m, const std::array<Mat, kMaxDim>& dm) {
  const int n = static_cast<int>(m.rows());
  const Mat inv = small_inverse(m);
  ChristoffelValue out;
  out.dim = n;
  for (int c = 0; c < n; ++c) out.gamma[c] = Mat::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += inv(c, d) * (dm[b](a, d) + dm[a](b, d) - dm[d](a, b));
        out.gamma[c](a, b) = 0.5 * s;
        out.gamma[c](b, a) = 0.5 * s;
      }
    }
  }
  return out;
}

ChristoffelValue christoffel(const MetricField& metric, const Vec& x) {
  metric.check_regular(x);
  return christoffel_from(metric.eval(x), metric.deriv(x));
}

double metric_det_sqrt(const MetricField& metric, const Vec& x) {
  metric.check_regular(x);
  return std::sqrt(metric.eval(x).determinant());
}

Mat metric_inverse(const MetricField& metric, const Vec& x) {
  metric.check_regular(x);
  return small_inverse(metric.eval(x));
}

Vec covariant_accel(const MetricField& metric, const Vec& y, const Vec& ydot, const Vec& yddot) {
  const int n = metric.dim();
  if (ydot.size() != n || yddot.size() != n) throw ShapeError("covariant_accel: dimension mismatch");
  const ChristoffelValue gam = christoffel(metric, y);
  Vec out = yddot;
  for (int b = 0; b < n; ++b) out[b] += ydot.dot(gam.gamma[b] * ydot);
  return out;
}

MetricTable read_metric_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metric table " + path);
  MetricTable t;
  std::string line;
  auto next_content = [&](std::string& out) {
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out = line;
      return true;
    }
    return false;
  };
  std::string content;
  auto expect_key = [&](const std::string& key) {
    if (!next_content(content)) throw ConfigError("metric table truncated before '" + key + "'");
    std::istringstream ss(content);
    std::string k;
    ss >> k;
    if (k != key) throw ConfigError("metric table: expected '" + key + "', got '" + k + "'");
    return std::string(content.substr(content.find(key) + key.size()));
  };
  {
    std::istringstream ss(expect_key("dim"));
    ss >> t.dim;
    if (t.dim < 1 || t.dim > 2) throw ConfigError("metric table: dim must be 1 or 2");
  }
  {
    std::istringstream ss(expect_key("nodes"));
    t.nodes.resize(t.dim);
    for (auto& n : t.nodes) ss >> n;
    if (!ss) throw ConfigError("metric table: malformed nodes line");
  }
  {
    std::istringstream ss(expect_key("extent"));
    t.lo.resize(t.dim);
    t.hi.resize(t.dim);
    for (int k = 0; k < t.dim; ++k) ss >> t.lo[k] >> t.hi[k];
    if (!ss) throw ConfigError("metric table: malformed extent line");
  }
  double v = 0.0;
  while (next_content(content)) {
    std::istringstream ss(content);
    while (ss >> v) t.values.push_back(v);
  }
  return t;
}

void write_metric_table(const std::string& path, const MetricTable& t) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write metric table " + path);
  out << std::setprecision(17);
  out << "dim " << t.dim << "\nnodes";
  for (int n : t.nodes) out << ' ' << n;
  out << "\nextent";
  for (int k = 0; k < t.dim; ++k) out << ' ' << t.lo[k] << ' ' << t.hi[k];
  out << '\n';
  const int stride = t.dim * t.dim;
  for (std::size_t i = 0; i < t.values.size(); i += stride) {
    for (int j = 0; j < stride; ++j) out << (j ? " " : "") << t.values[i + j];
    out << '\n';
  }
}

}  // namespace msym
