#pragma once

#include "airseg/dataset.hpp"
#include "airseg/dendrogram.hpp"
#include "airseg/metrics.hpp"

#include <string>
#include <vector>

namespace airseg {

struct Clustering {
  Index k = 0;
  std::vector<Index> labels;  // object -> 0..k-1, labels by cluster size
                              // descending, ties by smallest member index
  std::string spec;           // description of the distance that produced it
};

/// Agglomerative clustering with average linkage, heights maintained by the
/// exact Lance-Williams recurrence. Prototype fields stay -1. Merge-pair ties
/// break toward the lexicographically smallest (a, b) in creation order.
Dendrogram average_linkage_cluster(const Matrix& D);

Clustering cut(const Dendrogram& dend, Index k);

/// One pairwise-distance computation and one dendrogram, cut at every k.
std::vector<Clustering> segment(const FeatureMatrix& X, const DistanceSpec& spec,
                                const std::vector<Index>& ks, int threads = 1);

/// CSV of (id, cluster label).
void save_clustering(const Clustering& c, const std::vector<std::string>& ids,
                     const std::string& path);

}  // namespace airseg
