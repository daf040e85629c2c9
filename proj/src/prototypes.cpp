#include "airseg/prototypes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

namespace airseg {

double dmax(Index i, const std::vector<Index>& C, const Matrix& D) {
  if (std::find(C.begin(), C.end(), i) == C.end())
    throw Error("dmax: object " + std::to_string(i) + " is not in the cluster");
  double best = 0.0;
  for (Index j : C) best = std::max(best, D(i, j));
  return best;
}

std::pair<double, Index> minimax_radius(const std::vector<Index>& C, const Matrix& D) {
  if (C.empty()) throw Error("minimax_radius: empty cluster");
  double best = std::numeric_limits<double>::infinity();
  Index arg = -1;
  std::vector<Index> sorted = C;
  std::sort(sorted.begin(), sorted.end());
  for (Index i : sorted) {
    const double v = dmax(i, C, D);
    if (v < best) {
      best = v;
      arg = i;
    }
  }
  return {best, arg};
}

namespace {

struct ActiveCluster {
  Index id;
  std::vector<Index> members;  // ascending
  Vector dmax_to;              // per object: distance to the farthest member
};

struct Linkage {
  double radius;
  Index prototype;
};

/// Minimax radius of the union, scanning members in ascending order so ties
/// land on the lowest index.
Linkage link(const ActiveCluster& A, const ActiveCluster& B) {
  Linkage out{std::numeric_limits<double>::infinity(), -1};
  auto ia = A.members.begin(), ib = B.members.begin();
  while (ia != A.members.end() || ib != B.members.end()) {
    Index i;
    if (ib == B.members.end() || (ia != A.members.end() && *ia < *ib))
      i = *ia++;
    else
      i = *ib++;
    const double v = std::max(A.dmax_to(i), B.dmax_to(i));
    if (v < out.radius) {
      out.radius = v;
      out.prototype = i;
    }
  }
  return out;
}

}  // namespace

Dendrogram minimax_linkage_cluster(const Matrix& D) {
  validate_distance_matrix(D);
  const Index n = D.rows();
  Dendrogram dend;
  dend.n_leaves = n;
  if (n == 1) return dend;

  std::vector<ActiveCluster> active;
  active.reserve(size_t(n));
  for (Index i = 0; i < n; ++i) active.push_back({i, {i}, D.col(i)});

  // The linkage between two fixed clusters never changes as others merge, so
  // values are cached by cluster-id pair and only the freshly merged
  // cluster's row is computed each round.
  const Index total = 2 * n - 1;
  std::vector<Linkage> cache(size_t(total) * size_t(total), Linkage{0.0, -1});
  auto cached = [&](Index a, Index b) -> Linkage& {
    return cache[size_t(a) * size_t(total) + size_t(b)];
  };
  for (std::size_t p = 0; p < active.size(); ++p)
    for (std::size_t q = p + 1; q < active.size(); ++q)
      cached(active[p].id, active[q].id) = link(active[p], active[q]);

  for (Index t = 0; t < n - 1; ++t) {
    std::size_t best_p = 0, best_q = 1;
    double best_r = std::numeric_limits<double>::infinity();
    // Active ids only grow, so position order is creation order and the
    // first strict improvement realizes the lexicographic tie rule.
    for (std::size_t p = 0; p + 1 < active.size(); ++p)
      for (std::size_t q = p + 1; q < active.size(); ++q) {
        const double r = cached(active[p].id, active[q].id).radius;
        if (r < best_r) {
          best_r = r;
          best_p = p;
          best_q = q;
        }
      }

    ActiveCluster merged;
    merged.id = n + t;
    const ActiveCluster& A = active[best_p];
    const ActiveCluster& B = active[best_q];
    const Linkage chosen = cached(A.id, B.id);
    dend.merges.push_back({A.id, B.id, chosen.radius, chosen.prototype});
    merged.members.reserve(A.members.size() + B.members.size());
    std::merge(A.members.begin(), A.members.end(), B.members.begin(), B.members.end(),
               std::back_inserter(merged.members));
    merged.dmax_to = A.dmax_to.cwiseMax(B.dmax_to);
    active.erase(active.begin() + long(best_q));
    active.erase(active.begin() + long(best_p));
    for (const ActiveCluster& other : active)
      cached(other.id, merged.id) = link(other, merged);
    active.push_back(std::move(merged));
  }
  return dend;
}

namespace {

PrototypeSet assign_to_prototypes(std::vector<Index> prototypes, const Matrix& D) {
  std::sort(prototypes.begin(), prototypes.end());
  PrototypeSet ps;
  ps.prototypes = std::move(prototypes);
  ps.assignment.resize(size_t(D.rows()));
  ps.coverage_radius = 0.0;
  for (Index i = 0; i < D.rows(); ++i) {
    Index best = ps.prototypes.front();
    for (Index p : ps.prototypes)
      if (D(i, p) < D(i, best)) best = p;  // ascending scan: ties keep lower index
    ps.assignment[size_t(i)] = best;
    ps.coverage_radius = std::max(ps.coverage_radius, D(i, best));
  }
  return ps;
}

}  // namespace

PrototypeSet select_prototypes(const Dendrogram& dend, Index k, const Matrix& D) {
  validate_distance_matrix(D);
  if (D.rows() != dend.n_leaves)
    throw Error("select_prototypes: distance matrix does not match the dendrogram");
  const std::vector<CutCluster> clusters = cut_clusters(dend, k);
  std::vector<Index> prototypes;
  prototypes.reserve(clusters.size());
  for (const CutCluster& c : clusters) prototypes.push_back(c.prototype);
  return assign_to_prototypes(std::move(prototypes), D);
}

PrototypeSet brute_force_minimax(const Matrix& D, Index k) {
  validate_distance_matrix(D);
  const Index n = D.rows();
  if (n > 15) throw Error("brute_force_minimax: n=" + std::to_string(n) + " exceeds the enumeration guard (15)");
  if (k < 1 || k > n) throw Error("brute_force_minimax: k out of range");

  std::vector<Index> subset(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) subset[size_t(i)] = i;
  std::vector<Index> best_subset;
  double best_radius = std::numeric_limits<double>::infinity();
  while (true) {
    double radius = 0.0;
    for (Index i = 0; i < n; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Index p : subset) nearest = std::min(nearest, D(i, p));
      radius = std::max(radius, nearest);
    }
    // Strict improvement keeps the lexicographically smallest optimum,
    // since subsets are enumerated in lexicographic order.
    if (radius < best_radius) {
      best_radius = radius;
      best_subset = subset;
    }
    // Advance to the next k-combination.
    Index pos = k - 1;
    while (pos >= 0 && subset[size_t(pos)] == n - k + pos) --pos;
    if (pos < 0) break;
    ++subset[size_t(pos)];
    for (Index j = pos + 1; j < k; ++j) subset[size_t(j)] = subset[size_t(j - 1)] + 1;
  }
  return assign_to_prototypes(std::move(best_subset), D);
}

Index default_training_size(Index n) {
  if (n < 1) throw Error("default_training_size: empty population");
  return (2 * n + 4) / 5;
}

void save_prototypes(const PrototypeSet& ps, const std::vector<std::string>& ids,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_prototypes: cannot open " + path);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", ps.coverage_radius);
  out << "# coverage_radius " << buf << "\n";
  out << "prototype_id\n";
  for (Index p : ps.prototypes) {
    if (p < 0 || p >= Index(ids.size()))
      throw Error("save_prototypes: prototype index out of range");
    out << ids[size_t(p)] << "\n";
  }
  if (!out) throw Error("save_prototypes: write failed for " + path);
}

}  // namespace airseg
