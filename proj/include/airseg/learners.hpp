#pragma once

#include "airseg/constraints.hpp"
#include "airseg/dataset.hpp"
#include "airseg/metrics.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace airseg {

struct LearnerConfig {
  std::string algorithm = "mmc";  // mmc | itml | lmnn
  Index max_iterations = 1000;
  double tolerance = 1e-6;  // relative objective / multiplier change

  // ITML
  double gamma = 1.0;                 // slack trade-off
  std::optional<double> u;            // similar-pair upper bound on squared distance
  std::optional<double> l;            // dissimilar-pair lower bound on squared distance
  std::optional<MetricMatrix> prior;  // default identity

  // LMNN
  double mu = 0.5;  // pull/push trade-off
  double initial_step = 1.0;

  std::uint64_t seed = 0;  // reserved; all three solvers are deterministic

  void validate() const;
};

struct FitReport {
  std::string algorithm;
  double final_objective = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each iteration / sweep
  Index violated_similar = 0;
  Index violated_dissimilar = 0;
  Index violated_triplets = 0;
  std::string stop_reason;
};

struct ViolationReport {
  Index violated_similar = 0;    // squared distance above the upper bound
  Index violated_dissimilar = 0;  // squared distance below the lower bound
  Index violated_triplets = 0;    // positive hinge
  double lmnn_loss = 0.0;
  double u = 0.0;  // bounds the counts were taken against
  double l = 0.0;
};

/// Observer invoked after every accepted iterate (or sweep) with the current
/// matrix and internal objective.
using FitObserver = std::function<void(const Matrix&, double)>;

/// 5th / 95th percentiles of pairwise squared distances under the prior:
/// the default (u, l) bounds.
std::pair<double, double> default_bounds(const FeatureMatrix& X, const MetricMatrix& prior);

/// tr(A B^-1) - logdet(A B^-1) - d for positive definite A, B.
double logdet_divergence(const Matrix& A, const Matrix& B);

/// Diagonal metric minimizing
///   sum_{(i,j) in S} d²(i,j) - log(sum_{(i,j) in Dset} d(i,j))
/// by projected gradient descent with backtracking, entries clipped at 0.
/// The returned metric is rescaled so the dissimilar-pair distance sum is
/// exactly 1; the report's trace stays in the optimizer's scale (pairwise
/// distance rankings are unaffected by the rescale).
std::pair<MetricMatrix, FitReport> fit_mmc(const FeatureMatrix& X,
                                           const std::vector<IndexPair>& S,
                                           const std::vector<IndexPair>& Dset,
                                           const LearnerConfig& cfg);

/// Full metric regularized toward the prior in LogDet divergence, fit by
/// cycling Bregman projections with rank-one updates: similar pairs are
/// pressed under the bound u, dissimilar pairs above l, softened by gamma.
/// With no constraints the prior is returned exactly.
std::pair<MetricMatrix, FitReport> fit_itml(const FeatureMatrix& X,
                                            const std::vector<IndexPair>& S,
                                            const std::vector<IndexPair>& Dset,
                                            const LearnerConfig& cfg,
                                            const FitObserver& observer = {});

/// Full metric minimizing
///   (1-mu) * sum_pull d²(i,j) + mu * sum_R [1 + d²(i,j) - d²(i,k)]_+
/// where the pull set is S plus the (i,j) leg of every triplet. Projected
/// subgradient descent with backtracking and a PSD projection per step;
/// accepted-step objectives strictly decrease.
std::pair<MetricMatrix, FitReport> fit_lmnn(const FeatureMatrix& X,
                                            const std::vector<IndexPair>& S,
                                            const std::vector<Triplet>& R,
                                            const LearnerConfig& cfg,
                                            const FitObserver& observer = {});

/// Dispatch on cfg.algorithm using the matching constraint sets.
std::pair<MetricMatrix, FitReport> fit(const FeatureMatrix& X, const ConstraintSets& cs,
                                       const LearnerConfig& cfg);

/// Counts bound and hinge violations under M (bounds from cfg, or the
/// default percentiles when unset) and evaluates the pull/push loss at
/// cfg.mu with the same pull-set convention as fit_lmnn.
ViolationReport evaluate_constraints(const MetricMatrix& M, const FeatureMatrix& X,
                                     const std::vector<IndexPair>& S,
                                     const std::vector<IndexPair>& Dset,
                                     const std::vector<Triplet>& R,
                                     const LearnerConfig& cfg);

/// Structured text dump including the objective trace.
void save_fit_report(const FitReport& report, const std::string& path);

}  // namespace airseg
