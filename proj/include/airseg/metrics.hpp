#pragma once

#include "airseg/common.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace airseg {

enum class MetricForm { Full, Diagonal };

enum class MetricProvenance { Identity, CovarianceInverse, Mmc, Itml, Lmnn };

std::string to_string(MetricForm form);
std::string to_string(MetricProvenance p);
MetricForm metric_form_from_string(const std::string& s);
MetricProvenance metric_provenance_from_string(const std::string& s);

/// Symmetric PSD weight matrix defining a generalized Mahalanobis distance.
struct MetricMatrix {
  Matrix M;
  MetricForm form = MetricForm::Full;
  MetricProvenance provenance = MetricProvenance::Identity;

  Index dim() const { return M.rows(); }

  static MetricMatrix identity(Index d);

  /// Throws unless M is square, symmetric within 1e-10, PSD within -1e-8 on
  /// the smallest eigenvalue, and exactly diagonal when form says so.
  void validate() const;
};

/// Sentinel for the Chebyshev limit of the Minkowski family.
inline constexpr double kMinkowskiInf = std::numeric_limits<double>::infinity();

/// Distance function selector: Minkowski of order p, or generalized
/// Mahalanobis under a weight matrix.
struct DistanceSpec {
  enum class Kind { Minkowski, Mahalanobis };

  Kind kind = Kind::Minkowski;
  double p = 2.0;
  MetricMatrix metric;

  static DistanceSpec minkowski(double p);
  static DistanceSpec euclidean() { return minkowski(2.0); }
  static DistanceSpec mahalanobis(MetricMatrix m);

  std::string describe() const;
};

/// (sum |x_i - y_i|^p)^(1/p); the max-coordinate distance for p = inf.
template <typename DerivedA, typename DerivedB>
double minkowski_distance(const Eigen::MatrixBase<DerivedA>& x,
                          const Eigen::MatrixBase<DerivedB>& y, double p) {
  if (x.size() != y.size()) throw Error("minkowski_distance: dimension mismatch");
  if (!(p > 0.0)) throw Error("minkowski_distance: order p must be positive");
  const auto diff = (x.derived() - y.derived()).cwiseAbs().eval();
  if (std::isinf(p)) return diff.size() == 0 ? 0.0 : diff.maxCoeff();
  if (p == 2.0) return diff.norm();
  if (p == 1.0) return diff.sum();
  double acc = 0.0;
  for (Index i = 0; i < diff.size(); ++i) acc += std::pow(diff(i), p);
  return std::pow(acc, 1.0 / p);
}

/// sqrt((x-y)^T M (x-y)). Quadratic forms in (-1e-10, 0) are rounded to zero;
/// anything lower signals a non-PSD weight matrix and throws.
template <typename DerivedA, typename DerivedB>
double mahalanobis_distance(const Eigen::MatrixBase<DerivedA>& x,
                            const Eigen::MatrixBase<DerivedB>& y,
                            const MetricMatrix& metric) {
  if (x.size() != y.size()) throw Error("mahalanobis_distance: dimension mismatch");
  if (metric.dim() != x.size())
    throw Error("mahalanobis_distance: metric dimension mismatch");
  const Vector diff = x.derived() - y.derived();
  double q;
  if (metric.form == MetricForm::Diagonal) {
    q = diff.dot(metric.M.diagonal().cwiseProduct(diff));
  } else {
    q = diff.dot(metric.M * diff);
  }
  if (q < -1e-10)
    throw Error("mahalanobis_distance: negative quadratic form (non-PSD metric)");
  return std::sqrt(std::max(q, 0.0));
}

double distance(const Vector& x, const Vector& y, const DistanceSpec& spec);

/// Pseudo-inverse of the sample covariance of the rows of X, as a metric.
/// Eigenvalues below 1e-10 * lambda_max are treated as exact zeros.
MetricMatrix covariance_metric(const Matrix& X);

/// Nearest PSD matrix: eigendecompose, clamp negative eigenvalues to zero.
MetricMatrix project_psd(const Matrix& A);

/// Symmetric zero-diagonal matrix of all pairwise distances between the rows
/// of X. Entries match per-pair `distance` calls exactly; `threads` > 1 splits
/// the row blocks without changing any entry.
Matrix pairwise_distances(const Matrix& X, const DistanceSpec& spec, int threads = 1);

void save_metric(const MetricMatrix& m, const std::string& path);
MetricMatrix load_metric(const std::string& path);

}  // namespace airseg
