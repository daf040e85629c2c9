#include "airseg/clustering.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

namespace airseg {

Dendrogram average_linkage_cluster(const Matrix& D) {
  validate_distance_matrix(D);
  const Index n = D.rows();
  Dendrogram dend;
  dend.n_leaves = n;
  if (n == 1) return dend;

  struct ActiveCluster {
    Index id;
    Index size;
  };
  std::vector<ActiveCluster> active;
  active.reserve(size_t(n));
  for (Index i = 0; i < n; ++i) active.push_back({i, 1});

  // Inter-cluster mean distances keyed by cluster-id pair; the Lance-Williams
  // recurrence keeps them exact for average linkage.
  const Index total = 2 * n - 1;
  std::vector<double> dist(size_t(total) * size_t(total), 0.0);
  auto at = [&](Index a, Index b) -> double& {
    return dist[size_t(a) * size_t(total) + size_t(b)];
  };
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) at(i, j) = D(i, j);

  for (Index t = 0; t < n - 1; ++t) {
    std::size_t best_p = 0, best_q = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p + 1 < active.size(); ++p)
      for (std::size_t q = p + 1; q < active.size(); ++q) {
        const double d = at(active[p].id, active[q].id);
        if (d < best_d) {
          best_d = d;
          best_p = p;
          best_q = q;
        }
      }

    const ActiveCluster G = active[best_p];
    const ActiveCluster H = active[best_q];
    const Index merged_id = n + t;
    dend.merges.push_back({G.id, H.id, best_d, -1});
    active.erase(active.begin() + long(best_q));
    active.erase(active.begin() + long(best_p));
    for (const ActiveCluster& W : active) {
      const double dgw = at(std::min(G.id, W.id), std::max(G.id, W.id));
      const double dhw = at(std::min(H.id, W.id), std::max(H.id, W.id));
      at(W.id, merged_id) = (double(G.size) * dgw + double(H.size) * dhw) /
                            double(G.size + H.size);
    }
    active.push_back({merged_id, G.size + H.size});
  }
  return dend;
}

Clustering cut(const Dendrogram& dend, Index k) {
  std::vector<CutCluster> clusters = cut_clusters(dend, k);
  // Label order: size descending, ties by smallest member index.
  std::sort(clusters.begin(), clusters.end(), [](const CutCluster& a, const CutCluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.members.front() < b.members.front();
  });
  Clustering out;
  out.k = k;
  out.labels.assign(size_t(dend.n_leaves), -1);
  for (std::size_t label = 0; label < clusters.size(); ++label)
    for (Index member : clusters[label].members) out.labels[size_t(member)] = Index(label);
  return out;
}

std::vector<Clustering> segment(const FeatureMatrix& X, const DistanceSpec& spec,
                                const std::vector<Index>& ks, int threads) {
  if (ks.empty()) throw Error("segment: no cluster counts requested");
  for (Index k : ks)
    if (k < 1 || k > X.rows())
      throw Error("segment: k=" + std::to_string(k) + " out of range for n=" +
                  std::to_string(X.rows()));
  const Matrix D = pairwise_distances(X.X, spec, threads);
  const Dendrogram dend = average_linkage_cluster(D);
  std::vector<Clustering> out;
  out.reserve(ks.size());
  for (Index k : ks) {
    Clustering c = cut(dend, k);
    c.spec = spec.describe();
    out.push_back(std::move(c));
  }
  return out;
}

void save_clustering(const Clustering& c, const std::vector<std::string>& ids,
                     const std::string& path) {
  if (ids.size() != c.labels.size())
    throw Error("save_clustering: id count does not match label count");
  std::ofstream out(path);
  if (!out) throw Error("save_clustering: cannot open " + path);
  out << "id,cluster\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out << ids[i] << "," << c.labels[i] << "\n";
  if (!out) throw Error("save_clustering: write failed for " + path);
}

}  // namespace airseg
