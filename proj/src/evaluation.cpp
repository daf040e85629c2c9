#include "airseg/evaluation.hpp"

#include "airseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace airseg {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_aligned(const Clustering& c, const OutputVector& y, const char* who) {
  if (Index(c.labels.size()) != y.y.size())
    throw Error(std::string(who) + ": clustering and output sizes differ");
  if (c.k < 1) throw Error(std::string(who) + ": clustering has no clusters");
  for (Index label : c.labels)
    if (label < 0 || label >= c.k)
      throw Error(std::string(who) + ": label outside [0, k)");
}

std::vector<std::vector<double>> group_by_label(const Clustering& c,
                                                const OutputVector& y) {
  std::vector<std::vector<double>> groups(size_t(c.k));
  for (std::size_t i = 0; i < c.labels.size(); ++i)
    groups[size_t(c.labels[i])].push_back(y.y(Index(i)));
  return groups;
}

}  // namespace

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) throw Error("coefficient_of_variation: empty cluster");
  if (values.size() == 1) return 0.0;
  const double m = mean(values);
  if (std::abs(m) < 1e-12)
    throw Error("coefficient_of_variation: mean within 1e-12 of zero");
  return sample_sd(values) / m;
}

double maximum_range(const Clustering& c, const OutputVector& y) {
  check_aligned(c, y, "maximum_range");
  std::vector<double> lo(size_t(c.k), std::numeric_limits<double>::infinity());
  std::vector<double> hi(size_t(c.k), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    const double v = y.y(Index(i));
    lo[size_t(c.labels[i])] = std::min(lo[size_t(c.labels[i])], v);
    hi[size_t(c.labels[i])] = std::max(hi[size_t(c.labels[i])], v);
  }
  double worst = 0.0;
  for (Index g = 0; g < c.k; ++g) {
    if (lo[size_t(g)] > hi[size_t(g)])
      throw Error("maximum_range: empty cluster " + std::to_string(g));
    worst = std::max(worst, hi[size_t(g)] - lo[size_t(g)]);
  }
  return worst;
}

CvSummary cv_summary(const Clustering& c, const OutputVector& y) {
  check_aligned(c, y, "cv_summary");
  CvSummary s;
  for (const std::vector<double>& group : group_by_label(c, y))
    s.cluster_cv.push_back(coefficient_of_variation(group));
  s.median = quantile(s.cluster_cv, 0.5);
  s.q1 = quantile(s.cluster_cv, 0.25);
  s.q3 = quantile(s.cluster_cv, 0.75);
  s.iqr = s.q3 - s.q1;
  s.whisker_min = s.q1 - 1.5 * s.iqr;
  s.whisker_max = s.q3 + 1.5 * s.iqr;
  return s;
}

FeatureImportance feature_importance(const MetricMatrix& M,
                                     const std::vector<FeatureColumn>& columns,
                                     Index top_m) {
  const Index d = M.dim();
  if (top_m < 0) throw Error("feature_importance: top_m must be nonnegative");
  if (Index(columns.size()) != d)
    throw Error("feature_importance: column metadata does not match the metric dimension");
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (i != j && M.M(i, j) != 0.0)
        throw Error("feature_importance: metric is not diagonal");

  const Vector w = M.M.diagonal();
  if (w.minCoeff() < 0.0) throw Error("feature_importance: negative diagonal weight");
  const double total = w.sum();
  if (total <= 0.0) throw Error("feature_importance: all feature weights are zero");

  FeatureImportance fi;
  fi.scores.resize(size_t(d));
  for (Index i = 0; i < d; ++i) {
    fi.scores[size_t(i)] = w(i) / total;
    if (w(i) == 0.0) ++fi.zero_weight_count;
  }

  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (fi.scores[size_t(a)] != fi.scores[size_t(b)])
      return fi.scores[size_t(a)] > fi.scores[size_t(b)];
    return a < b;
  });
  const Index keep = std::min(top_m, d);
  for (Index r = 0; r < keep; ++r) {
    const Index col = order[size_t(r)];
    fi.top.push_back({col, columns[size_t(col)].name, fi.scores[size_t(col)]});
  }
  return fi;
}

SegmentationReport compare_metrics(const FeatureMatrix& X,
                                   const std::vector<OutputVector>& outputs,
                                   const std::vector<NamedSpec>& specs,
                                   const std::vector<Index>& ks,
                                   const std::string& baseline, int threads) {
  if (specs.empty()) throw Error("compare_metrics: no distance specs");
  if (outputs.empty()) throw Error("compare_metrics: no outputs");

  std::vector<OutputVector> aligned;
  aligned.reserve(outputs.size());
  for (const OutputVector& out : outputs) aligned.push_back(align_output(X, out));

  SegmentationReport report;
  for (const NamedSpec& ns : specs) {
    const std::vector<Clustering> cuts = segment(X, ns.spec, ks, threads);
    for (const OutputVector& out : aligned)
      for (const Clustering& c : cuts) {
        SegmentationCell cell;
        cell.method = ns.name;
        cell.output = out.name;
        cell.k = c.k;
        cell.clustering = c;
        cell.cv = cv_summary(c, out);
        cell.max_range = maximum_range(c, out);
        report.cells.push_back(std::move(cell));
      }
  }

  const bool have_baseline =
      std::any_of(specs.begin(), specs.end(),
                  [&](const NamedSpec& ns) { return ns.name == baseline; });
  if (have_baseline) {
    report.baseline = baseline;
    auto median_of = [&](const std::string& method, const std::string& output,
                         Index k) {
      for (const SegmentationCell& cell : report.cells)
        if (cell.method == method && cell.output == output && cell.k == k)
          return cell.cv.median;
      throw Error("compare_metrics: missing cell for " + method);
    };
    for (const SegmentationCell& cell : report.cells) {
      if (cell.method == baseline) continue;
      MedianComparison mc;
      mc.method = cell.method;
      mc.output = cell.output;
      mc.k = cell.k;
      mc.median_cv = cell.cv.median;
      mc.baseline_median_cv = median_of(baseline, cell.output, cell.k);
      mc.win = mc.median_cv < mc.baseline_median_cv;
      report.comparisons.push_back(std::move(mc));
    }
  }
  return report;
}

void save_long_form(const SegmentationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_long_form: cannot open " + path);
  out << "method,output,k,measure,cluster,value\n";
  for (const SegmentationCell& cell : report.cells) {
    for (std::size_t g = 0; g < cell.cv.cluster_cv.size(); ++g)
      out << cell.method << ',' << cell.output << ',' << cell.k << ",cv," << g
          << ',' << fmt(cell.cv.cluster_cv[g]) << "\n";
    out << cell.method << ',' << cell.output << ',' << cell.k << ",mr,,"
        << fmt(cell.max_range) << "\n";
  }
  if (!out) throw Error("save_long_form: write failed for " + path);
}

void save_boxplot_stats(const SegmentationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_boxplot_stats: cannot open " + path);
  out << "method,output,k,median,q1,q3,iqr,whisker_min,whisker_max\n";
  for (const SegmentationCell& cell : report.cells)
    out << cell.method << ',' << cell.output << ',' << cell.k << ','
        << fmt(cell.cv.median) << ',' << fmt(cell.cv.q1) << ',' << fmt(cell.cv.q3)
        << ',' << fmt(cell.cv.iqr) << ',' << fmt(cell.cv.whisker_min) << ','
        << fmt(cell.cv.whisker_max) << "\n";
  if (!out) throw Error("save_boxplot_stats: write failed for " + path);
}

void save_feature_importance(const FeatureImportance& fi, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_feature_importance: cannot open " + path);
  out << "# zero_weight_features " << fi.zero_weight_count << "\n";
  out << "rank,column,name,score\n";
  for (std::size_t r = 0; r < fi.top.size(); ++r)
    out << (r + 1) << ',' << fi.top[r].column << ',' << fi.top[r].name << ','
        << fmt(fi.top[r].score) << "\n";
  if (!out) throw Error("save_feature_importance: write failed for " + path);
}

}  // namespace airseg
