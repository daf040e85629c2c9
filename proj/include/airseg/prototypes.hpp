#pragma once

#include "airseg/dendrogram.hpp"

#include <string>
#include <utility>
#include <vector>

namespace airseg {

/// Distance from member i to the farthest member of C. i must be in C.
double dmax(Index i, const std::vector<Index>& C, const Matrix& D);

/// Smallest dmax over members of C and the member attaining it (ties broken
/// toward the lowest index).
std::pair<double, Index> minimax_radius(const std::vector<Index>& C, const Matrix& D);

/// Agglomerative clustering where the linkage between two clusters is the
/// minimax radius of their union; every merge records that radius as its
/// height and the attaining member as the merged cluster's prototype.
/// Merge-pair ties break toward the lexicographically smallest (a, b) in
/// cluster-creation order.
Dendrogram minimax_linkage_cluster(const Matrix& D);

struct PrototypeSet {
  std::vector<Index> prototypes;  // ascending object indices
  std::vector<Index> assignment;  // object -> nearest prototype (object index)
  double coverage_radius = 0.0;   // max distance to an assigned prototype
};

/// Cuts the dendrogram into k clusters and returns their recorded prototypes,
/// with every object assigned to its nearest prototype (ties toward the
/// lower prototype index).
PrototypeSet select_prototypes(const Dendrogram& dend, Index k, const Matrix& D);

/// Exhaustive k-subset search minimizing the coverage radius; ties resolve to
/// the lexicographically smallest subset. Guarded to n <= 15.
PrototypeSet brute_force_minimax(const Matrix& D, Index k);

/// ceil(0.4 * n): the default training-subset size.
Index default_training_size(Index n);

void save_prototypes(const PrototypeSet& ps, const std::vector<std::string>& ids,
                     const std::string& path);

}  // namespace airseg
