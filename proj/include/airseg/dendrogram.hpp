#pragma once

#include "airseg/common.hpp"

#include <string>
#include <vector>

namespace airseg {

/// One agglomerative merge. Cluster ids follow creation order: leaves are
/// 0..n-1 and the t-th merge (0-based) creates cluster id n+t.
struct Merge {
  Index a = -1;
  Index b = -1;
  double height = 0.0;
  Index prototype = -1;  // covering member of the merged cluster; -1 if undefined
};

struct Dendrogram {
  Index n_leaves = 0;
  std::vector<Merge> merges;  // n_leaves - 1 entries for a complete tree

  void validate() const;
};

struct CutCluster {
  Index id = -1;               // id the cluster had when created
  std::vector<Index> members;  // ascending leaf indices
  Index prototype = -1;
};

/// Applies the first n-k merges, leaving exactly k clusters (creation order).
std::vector<CutCluster> cut_clusters(const Dendrogram& dend, Index k);

/// Applies merges, in order, while their height stays <= h.
std::vector<CutCluster> cut_clusters_at_height(const Dendrogram& dend, double h);

/// Throws unless D is a finite, symmetric, zero-diagonal, nonnegative square
/// matrix with at least one row.
void validate_distance_matrix(const Matrix& D);

/// One merge per line "a b height prototype", then a leaf-id table.
void save_dendrogram(const Dendrogram& dend, const std::vector<std::string>& ids,
                     const std::string& path);

}  // namespace airseg
