#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "airseg/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

using namespace airseg;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix X(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) X(i, j) = u(rng);
  return X;
}

MetricMatrix random_psd_metric(Index d, std::uint64_t seed) {
  const Matrix A = random_matrix(d, d, seed);
  MetricMatrix m;
  m.M = A * A.transpose();
  return m;
}

}  // namespace

TEST_CASE("minkowski distance matches hand values") {
  const Vector x = vec2(0, 0);
  const Vector y = vec2(3, 4);
  CHECK(minkowski_distance(x, y, 2.0) == doctest::Approx(5.0));
  CHECK(minkowski_distance(x, y, 1.0) == doctest::Approx(7.0));
  CHECK(minkowski_distance(x, y, kMinkowskiInf) == doctest::Approx(4.0));
  CHECK(minkowski_distance(x, y, 3.0) ==
        doctest::Approx(std::pow(27.0 + 64.0, 1.0 / 3.0)));
}

TEST_CASE("minkowski distance rejects bad arguments") {
  Vector x(2), y(3);
  x << 0, 0;
  y << 1, 2, 3;
  CHECK_THROWS_AS(minkowski_distance(x, y, 2.0), Error);
  CHECK_THROWS_AS(minkowski_distance(x, x, 0.0), Error);
  CHECK_THROWS_AS(minkowski_distance(x, x, -1.0), Error);
}

TEST_CASE("mahalanobis distance matches hand values") {
  const Vector x = vec2(3, 4);
  const Vector origin = vec2(0, 0);
  CHECK(mahalanobis_distance(x, origin, MetricMatrix::identity(2)) ==
        doctest::Approx(5.0));

  MetricMatrix diag;
  diag.M = Matrix::Zero(2, 2);
  diag.M(0, 0) = 4.0;
  diag.M(1, 1) = 1.0;
  diag.form = MetricForm::Diagonal;
  CHECK(mahalanobis_distance(vec2(1, 0), origin, diag) == doctest::Approx(2.0));
  CHECK(mahalanobis_distance(x, x, diag) == 0.0);
}

TEST_CASE("mahalanobis distance rejects mismatches and non-PSD forms") {
  Vector x(3);
  x << 1, 2, 3;
  CHECK_THROWS_AS(mahalanobis_distance(x, vec2(0, 0), MetricMatrix::identity(3)),
                  Error);
  CHECK_THROWS_AS(mahalanobis_distance(vec2(0, 0), vec2(1, 1), MetricMatrix::identity(3)),
                  Error);
  MetricMatrix bad;
  bad.M = Matrix::Zero(2, 2);
  bad.M(0, 0) = 1.0;
  bad.M(1, 1) = -1.0;
  CHECK_THROWS_AS(mahalanobis_distance(vec2(0, 0), vec2(0, 1), bad), Error);
}

TEST_CASE("covariance metric inverts an identity sample covariance") {
  // Four symmetric points scaled so each coordinate's sample variance is 1.
  const double a = std::sqrt(1.5);
  Matrix X(4, 2);
  X << a, 0, -a, 0, 0, a, 0, -a;
  const MetricMatrix m = covariance_metric(X);
  CHECK(m.provenance == MetricProvenance::CovarianceInverse);
  CHECK((m.M - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("covariance metric inverts a diagonal sample covariance") {
  const double c = std::sqrt(6.0) / 2.0;   // sample variance 2
  const double d = std::sqrt(0.375);       // sample variance 0.5
  Matrix X(4, 2);
  X << c, d, -c, d, c, -d, -c, -d;
  const MetricMatrix m = covariance_metric(X);
  CHECK(m.M(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(m.M(1, 1) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(m.M(0, 1)) < 1e-9);
}

TEST_CASE("covariance metric handles rank deficiency via pseudo-inverse") {
  Matrix base = random_matrix(8, 2, 7);
  Matrix X(8, 3);
  X << base, base.col(0);  // duplicated column makes the covariance singular
  const MetricMatrix m = covariance_metric(X);
  m.validate();

  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix cov = (centered.transpose() * centered) / 7.0;
  // Moore-Penrose identities pin down the pseudo-inverse.
  CHECK((m.M * cov * m.M - m.M).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((cov * m.M * cov - cov).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(covariance_metric(random_matrix(1, 3, 1)), Error);
}

TEST_CASE("psd projection is a fixed point on PSD input") {
  Matrix A(2, 2);
  A << 2, 1, 1, 2;
  CHECK((project_psd(A).M - A).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("psd projection clamps negative eigenvalues") {
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = 1.0;
  A(1, 1) = -1.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  CHECK((project_psd(A).M - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("psd projection of the 2x2 exchange matrix") {
  // Eigenpairs by hand: value 1 with (1,1)/sqrt(2), value -1 with (1,-1)/sqrt(2).
  // Clamping -1 to 0 leaves 1 * vv^T.
  Matrix A(2, 2);
  A << 0, 1, 1, 0;
  Vector v = vec2(1, 1) / std::sqrt(2.0);
  const Matrix expected = v * v.transpose();
  CHECK(expected(0, 0) == doctest::Approx(0.5));
  CHECK((project_psd(A).M - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("psd projection is idempotent") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Matrix A = random_matrix(4, 4, seed);
    A = ((A + A.transpose()) / 2.0).eval();
    const Matrix once = project_psd(A).M;
    const Matrix twice = project_psd(once).M;
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pairwise distances cover the degenerate and special cases") {
  const Matrix X1 = random_matrix(1, 3, 2);
  const Matrix D1 = pairwise_distances(X1, DistanceSpec::euclidean());
  CHECK(D1.rows() == 1);
  CHECK(D1(0, 0) == 0.0);

  const Matrix X = random_matrix(6, 3, 3);
  const Matrix De = pairwise_distances(X, DistanceSpec::euclidean());
  const Matrix Dm = pairwise_distances(
      X, DistanceSpec::mahalanobis(MetricMatrix::identity(3)));
  CHECK((De - Dm).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pairwise distances match independent per-pair recomputation") {
  const Matrix X = random_matrix(5, 3, 4);
  const DistanceSpec spec = DistanceSpec::minkowski(3.0);
  const Matrix D = pairwise_distances(X, spec);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int t = 0; t < 10; ++t) {
    const Index i = pick(rng);
    const Index j = pick(rng);
    const double expect =
        minkowski_distance(X.row(i).transpose(), X.row(j).transpose(), 3.0);
    CHECK(D(i, j) == expect);
    CHECK(D(j, i) == expect);
  }
  CHECK(D.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parallel pairwise distances are byte-identical to serial") {
  const Matrix X = random_matrix(37, 5, 5);
  const DistanceSpec spec = DistanceSpec::mahalanobis(random_psd_metric(5, 6));
  const Matrix serial = pairwise_distances(X, spec, 1);
  const Matrix par = pairwise_distances(X, spec, 4);
  CHECK(serial == par);
}

TEST_CASE("metric axioms hold for sampled triples") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto sample = [&] {
    Vector v(4);
    for (Index i = 0; i < 4; ++i) v(i) = u(rng);
    return v;
  };
  std::vector<DistanceSpec> specs = {
      DistanceSpec::minkowski(1.0), DistanceSpec::minkowski(2.0),
      DistanceSpec::minkowski(3.5), DistanceSpec::minkowski(kMinkowskiInf),
      DistanceSpec::mahalanobis(random_psd_metric(4, 22))};
  for (const auto& spec : specs) {
    for (int t = 0; t < 50; ++t) {
      const Vector x = sample(), y = sample(), z = sample();
      const double dxy = distance(x, y, spec);
      CHECK(dxy >= 0.0);
      CHECK(dxy == distance(y, x, spec));
      CHECK(distance(x, x, spec) == 0.0);
      CHECK(distance(x, z, spec) <= dxy + distance(y, z, spec) + 1e-9);
    }
  }
}

TEST_CASE("mahalanobis distance equals euclidean after a square-root factor") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const MetricMatrix m = random_psd_metric(5, 32);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.M);
  const Matrix L = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
  for (int t = 0; t < 20; ++t) {
    Vector x(5), y(5);
    for (Index i = 0; i < 5; ++i) {
      x(i) = u(rng);
      y(i) = u(rng);
    }
    const double lhs = mahalanobis_distance(x, y, m);
    const double rhs = minkowski_distance((L * x).eval(), (L * y).eval(), 2.0);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("scaling the metric by c^2 scales distances by c") {
  const MetricMatrix m = random_psd_metric(3, 41);
  MetricMatrix scaled = m;
  const double c = 2.75;
  scaled.M *= c * c;
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Vector x(3), y(3);
    for (Index i = 0; i < 3; ++i) {
      x(i) = u(rng);
      y(i) = u(rng);
    }
    CHECK(mahalanobis_distance(x, y, scaled) ==
          doctest::Approx(c * mahalanobis_distance(x, y, m)).epsilon(1e-9));
  }
}

TEST_CASE("metric matrix validation enforces the invariants") {
  MetricMatrix ok = MetricMatrix::identity(3);
  CHECK_NOTHROW(ok.validate());

  MetricMatrix asym = ok;
  asym.M(0, 1) = 1e-6;
  CHECK_THROWS_AS(asym.validate(), Error);

  MetricMatrix offdiag = random_psd_metric(3, 51);
  offdiag.form = MetricForm::Diagonal;
  CHECK_THROWS_AS(offdiag.validate(), Error);

  MetricMatrix indef;
  indef.M = Matrix::Zero(2, 2);
  indef.M(0, 0) = 1.0;
  indef.M(1, 1) = -0.5;
  CHECK_THROWS_AS(indef.validate(), Error);

  MetricMatrix rect;
  rect.M = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(rect.validate(), Error);
}

TEST_CASE("metric serialization round-trips exactly") {
  MetricMatrix m = random_psd_metric(4, 61);
  m.provenance = MetricProvenance::Itml;
  const std::string path = "metric_roundtrip.txt";
  save_metric(m, path);
  const MetricMatrix back = load_metric(path);
  CHECK(back.form == m.form);
  CHECK(back.provenance == m.provenance);
  CHECK(back.M == m.M);  // 17 significant digits reproduce doubles exactly
  std::remove(path.c_str());

  MetricMatrix diag;
  diag.M = Vector::LinSpaced(3, 0.25, 1.0 / 3.0).asDiagonal();
  diag.form = MetricForm::Diagonal;
  diag.provenance = MetricProvenance::Mmc;
  save_metric(diag, path);
  const MetricMatrix diag_back = load_metric(path);
  CHECK(diag_back.M == diag.M);
  CHECK(diag_back.form == MetricForm::Diagonal);
  std::remove(path.c_str());
}

TEST_CASE("metric loading rejects malformed files") {
  const std::string path = "metric_malformed.txt";
  {
    std::ofstream out(path);
    out << "2 full identity\n1 0\n";  // truncated body
  }
  CHECK_THROWS_AS(load_metric(path), Error);
  {
    std::ofstream out(path);
    out << "2 sort-of identity\n1 0\n0 1\n";
  }
  CHECK_THROWS_AS(load_metric(path), Error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_metric("does_not_exist.txt"), Error);
}
