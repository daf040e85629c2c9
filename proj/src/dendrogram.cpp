#include "airseg/dendrogram.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace airseg {

void Dendrogram::validate() const {
  if (n_leaves < 1) throw Error("Dendrogram: needs at least one leaf");
  if (Index(merges.size()) != n_leaves - 1)
    throw Error("Dendrogram: expected " + std::to_string(n_leaves - 1) + " merges, have " +
                std::to_string(merges.size()));
  std::vector<bool> used(size_t(2 * n_leaves - 1), false);
  for (std::size_t t = 0; t < merges.size(); ++t) {
    const Merge& m = merges[t];
    const Index created = n_leaves + Index(t);
    if (m.a < 0 || m.b < 0 || m.a >= created || m.b >= created || m.a == m.b)
      throw Error("Dendrogram: merge " + std::to_string(t) + " references bad cluster ids");
    if (used[size_t(m.a)] || used[size_t(m.b)])
      throw Error("Dendrogram: merge " + std::to_string(t) + " reuses a consumed cluster");
    if (!(m.height >= 0.0))
      throw Error("Dendrogram: merge " + std::to_string(t) + " has negative height");
    used[size_t(m.a)] = used[size_t(m.b)] = true;
  }
}

namespace {

std::vector<Index> merge_sorted(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<CutCluster> replay(const Dendrogram& dend, std::size_t n_merges) {
  dend.validate();
  std::map<Index, CutCluster> active;
  for (Index i = 0; i < dend.n_leaves; ++i) active[i] = CutCluster{i, {i}, i};
  for (std::size_t t = 0; t < n_merges; ++t) {
    const Merge& m = dend.merges[t];
    const auto ia = active.find(m.a);
    const auto ib = active.find(m.b);
    if (ia == active.end() || ib == active.end())
      throw Error("Dendrogram: merge references inactive cluster");
    CutCluster merged;
    merged.id = dend.n_leaves + Index(t);
    merged.members = merge_sorted(ia->second.members, ib->second.members);
    merged.prototype = m.prototype;
    if (merged.prototype >= 0 &&
        !std::binary_search(merged.members.begin(), merged.members.end(), merged.prototype))
      throw Error("Dendrogram: prototype is not a member of its cluster");
    active.erase(ia);
    active.erase(ib);
    active[merged.id] = std::move(merged);
  }
  std::vector<CutCluster> out;
  out.reserve(active.size());
  for (auto& [id, c] : active) out.push_back(std::move(c));
  return out;
}

}  // namespace

std::vector<CutCluster> cut_clusters(const Dendrogram& dend, Index k) {
  if (k < 1 || k > dend.n_leaves)
    throw Error("cut_clusters: k=" + std::to_string(k) + " out of range for n=" +
                std::to_string(dend.n_leaves));
  return replay(dend, size_t(dend.n_leaves - k));
}

std::vector<CutCluster> cut_clusters_at_height(const Dendrogram& dend, double h) {
  std::size_t applied = 0;
  while (applied < dend.merges.size() && dend.merges[applied].height <= h) ++applied;
  return replay(dend, applied);
}

void validate_distance_matrix(const Matrix& D) {
  if (D.rows() < 1 || D.rows() != D.cols())
    throw Error("distance matrix: must be square and non-empty");
  if (!D.allFinite()) throw Error("distance matrix: non-finite entries");
  if (D.minCoeff() < 0.0) throw Error("distance matrix: negative entries");
  if (D.diagonal().cwiseAbs().maxCoeff() > 1e-12)
    throw Error("distance matrix: nonzero diagonal");
  if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw Error("distance matrix: asymmetric");
}

void save_dendrogram(const Dendrogram& dend, const std::vector<std::string>& ids,
                     const std::string& path) {
  dend.validate();
  if (Index(ids.size()) != dend.n_leaves)
    throw Error("save_dendrogram: id count does not match leaf count");
  std::ofstream out(path);
  if (!out) throw Error("save_dendrogram: cannot open " + path);
  out << "merges " << dend.merges.size() << "\n";
  char buf[64];
  for (const Merge& m : dend.merges) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.height);
    out << m.a << " " << m.b << " " << buf << " " << m.prototype << "\n";
  }
  out << "leaves " << dend.n_leaves << "\n";
  for (Index i = 0; i < dend.n_leaves; ++i) out << i << " " << ids[size_t(i)] << "\n";
  if (!out) throw Error("save_dendrogram: write failed for " + path);
}

}  // namespace airseg
