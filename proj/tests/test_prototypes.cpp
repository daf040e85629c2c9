#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "airseg/metrics.hpp"
#include "airseg/prototypes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

using namespace airseg;

namespace {

Matrix line_distances(const std::vector<double>& points) {
  const Index n = Index(points.size());
  Matrix D = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) D(i, j) = std::abs(points[size_t(i)] - points[size_t(j)]);
  return D;
}

Matrix random_euclidean(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Matrix X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = u(rng);
  return pairwise_distances(X, DistanceSpec::euclidean());
}

/// Straightforward restatement of the linkage definition: each round, score
/// every cluster pair with minimax_radius of the member union and merge the
/// best, ties toward the smallest (a, b) creation order. No memoization, so
/// it checks the fast implementation independently.
Dendrogram naive_minimax(const Matrix& D) {
  const Index n = D.rows();
  Dendrogram dend;
  dend.n_leaves = n;
  struct Cl {
    Index id;
    std::vector<Index> members;
  };
  std::vector<Cl> active;
  for (Index i = 0; i < n; ++i) active.push_back({i, {i}});
  for (Index t = 0; t < n - 1; ++t) {
    std::size_t bp = 0, bq = 1;
    double br = std::numeric_limits<double>::infinity();
    Index bproto = -1;
    for (std::size_t p = 0; p + 1 < active.size(); ++p)
      for (std::size_t q = p + 1; q < active.size(); ++q) {
        std::vector<Index> u = active[p].members;
        u.insert(u.end(), active[q].members.begin(), active[q].members.end());
        const auto [r, proto] = minimax_radius(u, D);
        if (r < br) {
          br = r;
          bp = p;
          bq = q;
          bproto = proto;
        }
      }
    dend.merges.push_back({active[bp].id, active[bq].id, br, bproto});
    Cl merged{n + t, active[bp].members};
    merged.members.insert(merged.members.end(), active[bq].members.begin(),
                          active[bq].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    active.erase(active.begin() + long(bq));
    active.erase(active.begin() + long(bp));
    active.push_back(std::move(merged));
  }
  return dend;
}

}  // namespace

TEST_CASE("dmax is the distance to the farthest cluster member") {
  const Matrix D = line_distances({0, 1, 10});
  const std::vector<Index> all = {0, 1, 2};
  CHECK(dmax(1, all, D) == 9.0);
  CHECK(dmax(0, all, D) == 10.0);
  CHECK(dmax(2, {2}, D) == 0.0);
  CHECK_THROWS_AS(dmax(0, {1, 2}, D), Error);
}

TEST_CASE("minimax radius picks the best-covering member") {
  const Matrix D = line_distances({0, 1, 10});
  // All three dmax values: {10, 9, 10}; the minimum names the prototype.
  CHECK(dmax(0, {0, 1, 2}, D) == 10.0);
  CHECK(dmax(1, {0, 1, 2}, D) == 9.0);
  CHECK(dmax(2, {0, 1, 2}, D) == 10.0);
  const auto [r, proto] = minimax_radius({0, 1, 2}, D);
  CHECK(r == 9.0);
  CHECK(proto == 1);

  CHECK(minimax_radius({2}, D) == std::pair<double, Index>{0.0, 2});

  const Matrix Dtwo = line_distances({0, 3});
  const auto [r2, p2] = minimax_radius({0, 1}, Dtwo);
  CHECK(r2 == 3.0);
  CHECK(p2 == 0);  // symmetric dmax values, tie falls to the lower index

  CHECK_THROWS_AS(minimax_radius({}, D), Error);
}

TEST_CASE("minimax linkage on two separated pairs") {
  const Matrix D = line_distances({0, 1, 10, 11});
  const Dendrogram dend = minimax_linkage_cluster(D);
  REQUIRE(dend.merges.size() == 3);
  CHECK(dend.merges[0].a == 0);
  CHECK(dend.merges[0].b == 1);
  CHECK(dend.merges[0].height == 1.0);
  CHECK(dend.merges[0].prototype == 0);
  CHECK(dend.merges[1].a == 2);
  CHECK(dend.merges[1].b == 3);
  CHECK(dend.merges[1].height == 1.0);
  CHECK(dend.merges[1].prototype == 2);
  // Root height is the minimax radius of all four points: dmax values are
  // {11, 10, 10, 11}, so radius 10 with prototype 1.
  CHECK(dend.merges[2].height == 10.0);
  CHECK(dend.merges[2].prototype == 1);
}

TEST_CASE("minimax linkage degenerate sizes") {
  Matrix D1 = Matrix::Zero(1, 1);
  CHECK(minimax_linkage_cluster(D1).merges.empty());

  const Matrix D2 = line_distances({0, 3});
  const Dendrogram dend = minimax_linkage_cluster(D2);
  REQUIRE(dend.merges.size() == 1);
  CHECK(dend.merges[0].height == 3.0);

  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = 1.0;  // asymmetric
  CHECK_THROWS_AS(minimax_linkage_cluster(bad), Error);
  Matrix negd = Matrix::Zero(2, 2);
  negd(0, 1) = negd(1, 0) = -1.0;
  CHECK_THROWS_AS(minimax_linkage_cluster(negd), Error);
}

TEST_CASE("minimax linkage matches the definition-level oracle") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Matrix D = random_euclidean(8, 3, seed);
    const Dendrogram fast = minimax_linkage_cluster(D);
    const Dendrogram slow = naive_minimax(D);
    REQUIRE(fast.merges.size() == slow.merges.size());
    for (std::size_t t = 0; t < fast.merges.size(); ++t) {
      CHECK(fast.merges[t].a == slow.merges[t].a);
      CHECK(fast.merges[t].b == slow.merges[t].b);
      CHECK(fast.merges[t].height == doctest::Approx(slow.merges[t].height).epsilon(1e-12));
      CHECK(fast.merges[t].prototype == slow.merges[t].prototype);
    }
  }
}

TEST_CASE("identical distance matrices give identical dendrograms") {
  const Matrix D = random_euclidean(12, 4, 99);
  const Dendrogram a = minimax_linkage_cluster(D);
  const Dendrogram b = minimax_linkage_cluster(D);
  REQUIRE(a.merges.size() == b.merges.size());
  for (std::size_t t = 0; t < a.merges.size(); ++t) {
    CHECK(a.merges[t].a == b.merges[t].a);
    CHECK(a.merges[t].b == b.merges[t].b);
    CHECK(a.merges[t].height == b.merges[t].height);
    CHECK(a.merges[t].prototype == b.merges[t].prototype);
  }
}

TEST_CASE("maximum distortion guarantee at every cut height") {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const Matrix D = random_euclidean(5 + Index(seed % 14), 3, seed);
    const Dendrogram dend = minimax_linkage_cluster(D);
    for (const Merge& m : dend.merges) {
      const double h = m.height;
      for (const CutCluster& c : cut_clusters_at_height(dend, h)) {
        REQUIRE(c.prototype >= 0);
        CHECK(dmax(c.prototype, c.members, D) <= h + 1e-9);
      }
    }
  }
}

TEST_CASE("prototype selection at the extreme cuts") {
  const Matrix D = line_distances({0, 1, 10, 11});
  const Dendrogram dend = minimax_linkage_cluster(D);

  const PrototypeSet all = select_prototypes(dend, 4, D);
  CHECK(all.prototypes == std::vector<Index>{0, 1, 2, 3});
  CHECK(all.coverage_radius == 0.0);

  const PrototypeSet one = select_prototypes(dend, 1, D);
  CHECK(one.prototypes == std::vector<Index>{1});  // root prototype
  CHECK(one.coverage_radius == 10.0);

  CHECK_THROWS_AS(select_prototypes(dend, 0, D), Error);
  CHECK_THROWS_AS(select_prototypes(dend, 5, D), Error);
}

TEST_CASE("two separated pairs cover themselves at k=2") {
  const Matrix D = line_distances({0, 1, 10, 11});
  const Dendrogram dend = minimax_linkage_cluster(D);
  const PrototypeSet ps = select_prototypes(dend, 2, D);
  CHECK(ps.prototypes == std::vector<Index>{0, 2});
  CHECK(ps.coverage_radius == 1.0);
  CHECK(ps.assignment == std::vector<Index>{0, 0, 2, 2});

  const PrototypeSet exact = brute_force_minimax(D, 2);
  CHECK(exact.coverage_radius == 1.0);
  CHECK(exact.prototypes == std::vector<Index>{0, 2});
}

TEST_CASE("brute force oracle basics") {
  const Matrix D = line_distances({0, 5, 10});
  const PrototypeSet one = brute_force_minimax(D, 1);
  CHECK(one.prototypes == std::vector<Index>{1});
  CHECK(one.coverage_radius == 5.0);

  const PrototypeSet all = brute_force_minimax(D, 3);
  CHECK(all.coverage_radius == 0.0);

  CHECK_THROWS_AS(brute_force_minimax(random_euclidean(16, 2, 1), 2), Error);
  CHECK_THROWS_AS(brute_force_minimax(D, 0), Error);
}

TEST_CASE("hierarchical coverage radius never beats the exact optimum") {
  for (std::uint64_t seed = 40; seed < 52; ++seed) {
    const Index n = 6 + Index(seed % 7);
    const Matrix D = random_euclidean(n, 3, seed);
    const Dendrogram dend = minimax_linkage_cluster(D);
    for (Index k : {2, 3}) {
      const double hier = select_prototypes(dend, k, D).coverage_radius;
      const double exact = brute_force_minimax(D, k).coverage_radius;
      CHECK(hier >= exact - 1e-12);
    }
  }
}

TEST_CASE("training size default is ceil of 40 percent") {
  CHECK(default_training_size(214) == 86);  // the documented reference scale
  CHECK(default_training_size(10) == 4);
  CHECK(default_training_size(11) == 5);
  CHECK(default_training_size(1) == 1);
  CHECK_THROWS_AS(default_training_size(0), Error);
}

TEST_CASE("dendrogram and prototype exports are plain text") {
  const Matrix D = line_distances({0, 1, 10, 11});
  const Dendrogram dend = minimax_linkage_cluster(D);
  const std::vector<std::string> ids = {"w", "x", "y", "z"};

  save_dendrogram(dend, ids, "proto_dend.txt");
  std::ifstream in("proto_dend.txt");
  std::string line;
  std::getline(in, line);
  CHECK(line == "merges 3");
  std::getline(in, line);
  CHECK(line == "0 1 1 0");
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line == "4 5 10 1");
  std::getline(in, line);
  CHECK(line == "leaves 4");
  std::getline(in, line);
  CHECK(line == "0 w");
  in.close();
  std::remove("proto_dend.txt");

  const PrototypeSet ps = select_prototypes(dend, 2, D);
  save_prototypes(ps, ids, "proto_set.csv");
  std::ifstream pin("proto_set.csv");
  std::getline(pin, line);
  CHECK(line == "# coverage_radius 1");
  std::getline(pin, line);
  CHECK(line == "prototype_id");
  std::getline(pin, line);
  CHECK(line == "w");
  std::getline(pin, line);
  CHECK(line == "y");
  pin.close();
  std::remove("proto_set.csv");
}
