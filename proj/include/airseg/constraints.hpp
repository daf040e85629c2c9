#pragma once

#include "airseg/dataset.hpp"

#include <string>
#include <vector>

namespace airseg {

/// Unordered pair, stored with i < j.
struct IndexPair {
  Index i = -1;
  Index j = -1;
  bool operator==(const IndexPair&) const = default;
};

/// Ordered relative constraint: i is closer to j than to k.
struct Triplet {
  Index i = -1;
  Index j = -1;
  Index k = -1;
  bool operator==(const Triplet&) const = default;
};

/// D: standardized pairwise Euclidean feature distances; E: standardized
/// pairwise absolute output differences; F = E - D. Standardization is over
/// the upper-triangle entries (sample sd); diagonals are excluded and zero.
struct PairMatrices {
  Matrix D;
  Matrix E;
  Matrix F;
};

struct PairSelection {
  std::vector<IndexPair> similar;
  std::vector<IndexPair> dissimilar;
  double f10 = 0.0;
  double f90 = 0.0;
};

struct TripletSelection {
  std::vector<Triplet> triplets;
  std::vector<std::string> warnings;  // per reduction level with < 3 members
};

struct ConstraintSets {
  std::vector<IndexPair> similar;
  std::vector<IndexPair> dissimilar;
  std::vector<Triplet> triplets;
  double f10 = 0.0;
  double f90 = 0.0;
  Index rho_mi = 2;
  Index rho_ma = 5;
  std::vector<std::string> warnings;
};

PairMatrices build_pair_matrices(const FeatureMatrix& X_train, const OutputVector& y_train);

/// Tail percentiles of the upper-triangle F entries pick the pair sets:
/// similar needs F <= f10 and F < 0, dissimilar needs F >= f90 and F > 0.
PairSelection identify_pairs(const PairMatrices& pm, double tail_fraction = 0.10);

/// Indices of y in ascending output order; stable under ties.
std::vector<Index> order_by_output(const OutputVector& y);

/// Keeps 1-based positions divisible by rho.
std::vector<Index> reduce_population(const std::vector<Index>& A, Index rho);

/// Slides 3-windows over each reduced sequence, emitting forward (a,b,c) and
/// backward (c,b,a) triplets per level, then unions the levels, dropping
/// duplicates while preserving first-insertion order.
TripletSelection build_triplets(const std::vector<Index>& A, Index rho_mi, Index rho_ma);

/// Full identification: pair matrices, tail pairs, and ordered triplets.
ConstraintSets identify_constraints(const FeatureMatrix& X_train,
                                    const OutputVector& y_train,
                                    double tail_fraction = 0.10, Index rho_mi = 2,
                                    Index rho_ma = 5);

/// Three CSV sections (pairs-similar, pairs-dissimilar, triplets) under a
/// header recording the thresholds and reduction levels.
void save_constraints(const ConstraintSets& cs, const std::vector<std::string>& ids,
                      const std::string& path);

}  // namespace airseg
