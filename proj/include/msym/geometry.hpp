#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msym/types.hpp"

namespace msym {

/// Metric components tabulated on a uniform grid, interpolated with
/// tensor-product cubic Lagrange polynomials.
struct MetricTable {
  int dim = 0;                        // metric dimension == chart dimension
  std::vector<int> nodes;             // per axis
  std::vector<double> lo, hi;         // per-axis extents
  std::vector<double> values;         // row-major per node: dim*dim entries
};

/// Parse the structured text format documented in docs/metric_table.md.
MetricTable read_metric_table(const std::string& path);
void write_metric_table(const std::string& path, const MetricTable& table);

/// Symmetric positive-definite metric on a single coordinate chart.
///
/// Analytic kinds carry closed-form first derivatives. Tabulated metrics
/// are differentiated with 4th-order central differences of the interpolant.
class MetricField {
 public:
  enum class Kind { euclidean, conformal, polar, user_table };

  using ScalarFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;

  static MetricField euclidean(int dim);
  /// c(x)^2 * identity.
  static MetricField conformal(int dim, ScalarFn c, GradFn grad_c, std::string label = "conformal");
  static MetricField conformal_constant(int dim, double c);
  /// diag(1, r^2) in (r, theta); queries with r < r_min raise DomainError.
  static MetricField polar(double r_min = 1e-3);
  static MetricField from_table(MetricTable table, double fd_step = 0.0);

  int dim() const { return dim_; }
  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }
  /// True when eval does not depend on the point.
  bool is_constant() const;

  Mat eval(const Vec& x) const;
  /// out[k](i, j) = d M_ij / d x^k.
  std::array<Mat, kMaxDim> deriv(const Vec& x) const;

  /// Throws SingularMetric when eval(x) is not positive definite or its
  /// condition number exceeds kConditionCap.
  void check_regular(const Vec& x) const;

  static constexpr double kConditionCap = 1e12;

 private:
  struct Table;

  Kind kind_ = Kind::euclidean;
  int dim_ = 0;
  std::string label_;
  double constant_c_ = 1.0;
  bool constant_ = true;
  ScalarFn c_;
  GradFn grad_c_;
  double r_min_ = 1e-3;
  double fd_step_ = 0.0;
  std::shared_ptr<const Table> table_;

  void check_domain(const Vec& x) const;
  Mat table_eval(const Vec& x) const;
};

/// gamma[c](a, b) = Christoffel symbol with upper index c.
struct ChristoffelValue {
  int dim = 0;
  std::array<Mat, kMaxDim> gamma;

  double operator()(int c, int a, int b) const { return gamma[c](a, b); }
};

/// Christoffel symbols of the second kind built from the metric derivatives.
ChristoffelValue christoffel(const MetricField& metric, const Vec& x);

/// Same contraction from already-evaluated metric and derivatives (no checks).
ChristoffelValue christoffel_from(const Mat& m, const std::array<Mat, kMaxDim>& dm);

double metric_det_sqrt(const MetricField& metric, const Vec& x);

Mat metric_inverse(const MetricField& metric, const Vec& x);

/// yddot^b + gamma^b_ac(y) ydot^a ydot^c.
Vec covariant_accel(const MetricField& metric, const Vec& y, const Vec& ydot, const Vec& yddot);

}  // namespace msym
