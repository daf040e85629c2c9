#pragma once

#include "airseg/clustering.hpp"
#include "airseg/dataset.hpp"
#include "airseg/metrics.hpp"

#include <string>
#include <vector>

namespace airseg {

/// Boxplot summary of the per-cluster coefficient-of-variation distribution.
/// Whiskers are the plain fence formulas, not clamped to observed values;
/// raw per-cluster CVs ride along so any plotting convention can be applied.
struct CvSummary {
  std::vector<double> cluster_cv;  // indexed by cluster label
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double whisker_min = 0.0;  // q1 - 1.5 * iqr
  double whisker_max = 0.0;  // q3 + 1.5 * iqr
};

struct RankedFeature {
  Index column = 0;
  std::string name;
  double score = 0.0;
};

struct FeatureImportance {
  std::vector<double> scores;       // per column, sum to 1
  std::vector<RankedFeature> top;   // descending score, ties by column order
  Index zero_weight_count = 0;
};

/// One (method, output, k) cell of a segmentation sweep.
struct SegmentationCell {
  std::string method;
  std::string output;
  Index k = 0;
  Clustering clustering;
  CvSummary cv;
  double max_range = 0.0;
};

/// Median-CV win/loss entry for one non-baseline method cell.
struct MedianComparison {
  std::string method;
  std::string output;
  Index k = 0;
  double median_cv = 0.0;
  double baseline_median_cv = 0.0;
  bool win = false;  // strictly below the baseline median
};

struct SegmentationReport {
  std::vector<SegmentationCell> cells;  // method-major, then output, then k
  std::vector<MedianComparison> comparisons;
  std::string baseline;  // empty when no spec carried the baseline name
};

struct NamedSpec {
  std::string name;
  DistanceSpec spec;
};

/// Sample sd over mean. Singletons have no dispersion and score 0.
/// Throws when the mean is within 1e-12 of zero or the cluster is empty.
double coefficient_of_variation(const std::vector<double>& values);

/// Largest within-cluster output range (max y - min y) across clusters.
double maximum_range(const Clustering& c, const OutputVector& y);

/// Per-cluster CVs plus type-7 interpolated quartiles and fence whiskers.
CvSummary cv_summary(const Clustering& c, const OutputVector& y);

/// Normalized diagonal weights of a diagonal metric, ranked. Scores are
/// scale-free: any positive rescale of M yields the same scores.
FeatureImportance feature_importance(const MetricMatrix& M,
                                     const std::vector<FeatureColumn>& columns,
                                     Index top_m);

/// Full sweep: every spec is segmented once per k and scored against every
/// output. When a spec named `baseline` is present, each other method's
/// median CV is compared against the baseline's at the same (output, k).
SegmentationReport compare_metrics(const FeatureMatrix& X,
                                   const std::vector<OutputVector>& outputs,
                                   const std::vector<NamedSpec>& specs,
                                   const std::vector<Index>& ks,
                                   const std::string& baseline = "euclidean",
                                   int threads = 1);

/// Long-form CSV: one cv row per cluster and one mr row per cell.
void save_long_form(const SegmentationReport& report, const std::string& path);

/// One row of boxplot statistics per (method, output, k) cell.
void save_boxplot_stats(const SegmentationReport& report, const std::string& path);

/// Ranked top list with per-column scores; sparsity recorded up front.
void save_feature_importance(const FeatureImportance& fi, const std::string& path);

}  // namespace airseg
