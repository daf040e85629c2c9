#include "airseg/constraints.hpp"

#include "airseg/metrics.hpp"
#include "airseg/stats.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

namespace airseg {

namespace {

/// Standardizes a symmetric zero-diagonal matrix over its upper-triangle
/// entries, in place. The label names the matrix in error messages.
void standardize_upper(Matrix& M, const char* label) {
  const Index n = M.rows();
  std::vector<double> entries;
  entries.reserve(size_t(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) entries.push_back(M(i, j));
  const double mu = mean(entries);
  const double sd = sample_sd(entries);
  if (sd <= 0.0)
    throw Error(std::string("build_pair_matrices: zero variance in ") + label +
                " (all pairwise values identical)");
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double v = (M(i, j) - mu) / sd;
      M(i, j) = v;
      M(j, i) = v;
    }
  M.diagonal().setZero();
}

}  // namespace

PairMatrices build_pair_matrices(const FeatureMatrix& X_train, const OutputVector& y_train) {
  const Index n = X_train.rows();
  if (n < 3) throw Error("build_pair_matrices: need at least 3 training objects");
  if (Index(y_train.y.size()) != n)
    throw Error("build_pair_matrices: output length does not match the feature matrix");

  PairMatrices pm;
  pm.D = pairwise_distances(X_train.X, DistanceSpec::euclidean());
  pm.E.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) pm.E(i, j) = std::abs(y_train.y(i) - y_train.y(j));
  standardize_upper(pm.D, "feature distances");
  standardize_upper(pm.E, "output differences");
  pm.F = pm.E - pm.D;
  return pm;
}

PairSelection identify_pairs(const PairMatrices& pm, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction < 0.5))
    throw Error("identify_pairs: tail fraction must be in (0, 0.5)");
  const Index n = pm.F.rows();
  std::vector<double> entries;
  entries.reserve(size_t(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) entries.push_back(pm.F(i, j));

  PairSelection sel;
  sel.f10 = quantile(entries, tail_fraction);
  sel.f90 = quantile(entries, 1.0 - tail_fraction);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double f = pm.F(i, j);
      if (f <= sel.f10 && f < 0.0) sel.similar.push_back({i, j});
      if (f >= sel.f90 && f > 0.0) sel.dissimilar.push_back({i, j});
    }
  return sel;
}

std::vector<Index> order_by_output(const OutputVector& y) {
  std::vector<Index> order(size_t(y.y.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return y.y(a) < y.y(b); });
  return order;
}

std::vector<Index> reduce_population(const std::vector<Index>& A, Index rho) {
  if (rho < 1) throw Error("reduce_population: rho must be >= 1");
  std::vector<Index> out;
  for (std::size_t pos = size_t(rho); pos <= A.size(); pos += size_t(rho))
    out.push_back(A[pos - 1]);
  return out;
}

TripletSelection build_triplets(const std::vector<Index>& A, Index rho_mi, Index rho_ma) {
  TripletSelection sel;
  std::set<std::array<Index, 3>> seen;
  auto add = [&](Index i, Index j, Index k) {
    if (seen.insert({i, j, k}).second) sel.triplets.push_back({i, j, k});
  };
  for (Index rho : {rho_mi, rho_ma}) {
    const std::vector<Index> omega = reduce_population(A, rho);
    if (omega.size() < 3) {
      sel.warnings.push_back("rho=" + std::to_string(rho) + ": reduced sequence has " +
                             std::to_string(omega.size()) +
                             " members, too short for triplets");
      continue;
    }
    for (std::size_t t = 0; t + 2 < omega.size(); ++t)
      add(omega[t], omega[t + 1], omega[t + 2]);
    for (std::size_t t = 0; t + 2 < omega.size(); ++t)
      add(omega[t + 2], omega[t + 1], omega[t]);
  }
  return sel;
}

ConstraintSets identify_constraints(const FeatureMatrix& X_train,
                                    const OutputVector& y_train, double tail_fraction,
                                    Index rho_mi, Index rho_ma) {
  const PairMatrices pm = build_pair_matrices(X_train, y_train);
  const PairSelection pairs = identify_pairs(pm, tail_fraction);
  const std::vector<Index> order = order_by_output(y_train);
  TripletSelection trips = build_triplets(order, rho_mi, rho_ma);

  ConstraintSets cs;
  cs.similar = pairs.similar;
  cs.dissimilar = pairs.dissimilar;
  cs.triplets = std::move(trips.triplets);
  cs.f10 = pairs.f10;
  cs.f90 = pairs.f90;
  cs.rho_mi = rho_mi;
  cs.rho_ma = rho_ma;
  cs.warnings = std::move(trips.warnings);
  return cs;
}

void save_constraints(const ConstraintSets& cs, const std::vector<std::string>& ids,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_constraints: cannot open " + path);
  auto id = [&](Index i) -> const std::string& {
    if (i < 0 || i >= Index(ids.size()))
      throw Error("save_constraints: index out of range");
    return ids[size_t(i)];
  };
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cs.f10);
  out << "# f10 " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", cs.f90);
  out << "# f90 " << buf << "\n";
  out << "# rho_mi " << cs.rho_mi << "\n";
  out << "# rho_ma " << cs.rho_ma << "\n";
  out << "pairs-similar\n";
  out << "id_i,id_j\n";
  for (const IndexPair& p : cs.similar) out << id(p.i) << "," << id(p.j) << "\n";
  out << "pairs-dissimilar\n";
  out << "id_i,id_j\n";
  for (const IndexPair& p : cs.dissimilar) out << id(p.i) << "," << id(p.j) << "\n";
  out << "triplets\n";
  out << "id_i,id_j,id_k\n";
  for (const Triplet& t : cs.triplets)
    out << id(t.i) << "," << id(t.j) << "," << id(t.k) << "\n";
  if (!out) throw Error("save_constraints: write failed for " + path);
}

}  // namespace airseg
