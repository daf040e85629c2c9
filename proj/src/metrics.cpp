#include "airseg/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

namespace airseg {

std::string to_string(MetricForm form) {
  return form == MetricForm::Full ? "full" : "diagonal";
}

std::string to_string(MetricProvenance p) {
  switch (p) {
    case MetricProvenance::Identity: return "identity";
    case MetricProvenance::CovarianceInverse: return "covariance-inverse";
    case MetricProvenance::Mmc: return "mmc";
    case MetricProvenance::Itml: return "itml";
    case MetricProvenance::Lmnn: return "lmnn";
  }
  throw Error("to_string: unknown metric provenance");
}

MetricForm metric_form_from_string(const std::string& s) {
  if (s == "full") return MetricForm::Full;
  if (s == "diagonal") return MetricForm::Diagonal;
  throw Error("unknown metric form: " + s);
}

MetricProvenance metric_provenance_from_string(const std::string& s) {
  if (s == "identity") return MetricProvenance::Identity;
  if (s == "covariance-inverse") return MetricProvenance::CovarianceInverse;
  if (s == "mmc") return MetricProvenance::Mmc;
  if (s == "itml") return MetricProvenance::Itml;
  if (s == "lmnn") return MetricProvenance::Lmnn;
  throw Error("unknown metric provenance: " + s);
}

MetricMatrix MetricMatrix::identity(Index d) {
  MetricMatrix m;
  m.M = Matrix::Identity(d, d);
  m.form = MetricForm::Full;
  m.provenance = MetricProvenance::Identity;
  return m;
}

void MetricMatrix::validate() const {
  if (M.rows() != M.cols()) throw Error("MetricMatrix: matrix is not square");
  if (!M.allFinite()) throw Error("MetricMatrix: non-finite entries");
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym >= 1e-10)
    throw Error("MetricMatrix: asymmetry " + std::to_string(asym) + " exceeds 1e-10");
  if (form == MetricForm::Diagonal) {
    for (Index i = 0; i < M.rows(); ++i)
      for (Index j = 0; j < M.cols(); ++j)
        if (i != j && M(i, j) != 0.0)
          throw Error("MetricMatrix: diagonal form has nonzero off-diagonal entry");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw Error("MetricMatrix: eigendecomposition failed");
  if (M.rows() > 0 && es.eigenvalues().minCoeff() < -1e-8)
    throw Error("MetricMatrix: smallest eigenvalue " +
                std::to_string(es.eigenvalues().minCoeff()) + " below -1e-8");
}

DistanceSpec DistanceSpec::minkowski(double p) {
  if (!(p > 0.0)) throw Error("DistanceSpec: minkowski order p must be positive");
  DistanceSpec s;
  s.kind = Kind::Minkowski;
  s.p = p;
  return s;
}

DistanceSpec DistanceSpec::mahalanobis(MetricMatrix m) {
  m.validate();
  DistanceSpec s;
  s.kind = Kind::Mahalanobis;
  s.metric = std::move(m);
  return s;
}

std::string DistanceSpec::describe() const {
  if (kind == Kind::Minkowski) {
    if (std::isinf(p)) return "minkowski(inf)";
    std::ostringstream os;
    os << "minkowski(" << p << ")";
    return os.str();
  }
  return "mahalanobis(" + to_string(metric.provenance) + ")";
}

double distance(const Vector& x, const Vector& y, const DistanceSpec& spec) {
  if (spec.kind == DistanceSpec::Kind::Minkowski)
    return minkowski_distance(x, y, spec.p);
  return mahalanobis_distance(x, y, spec.metric);
}

MetricMatrix covariance_metric(const Matrix& X) {
  const Index n = X.rows();
  if (n < 2) throw Error("covariance_metric: need at least 2 rows");
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix cov = (centered.transpose() * centered) / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw Error("covariance_metric: eigendecomposition failed");
  const Vector evals = es.eigenvalues();
  const double lmax = evals.size() > 0 ? evals.maxCoeff() : 0.0;
  const double cutoff = 1e-10 * std::max(lmax, 0.0);
  Vector inv = Vector::Zero(evals.size());
  for (Index i = 0; i < evals.size(); ++i)
    if (evals(i) > cutoff) inv(i) = 1.0 / evals(i);
  MetricMatrix m;
  m.M = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  m.M = ((m.M + m.M.transpose()) / 2.0).eval();
  m.form = MetricForm::Full;
  m.provenance = MetricProvenance::CovarianceInverse;
  return m;
}

MetricMatrix project_psd(const Matrix& A) {
  if (A.rows() != A.cols()) throw Error("project_psd: matrix is not square");
  if (!A.allFinite()) throw Error("project_psd: non-finite entries");
  const Matrix sym = (A + A.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw Error("project_psd: eigendecomposition failed");
  const Vector clamped = es.eigenvalues().cwiseMax(0.0);
  MetricMatrix m;
  m.M = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  m.M = ((m.M + m.M.transpose()) / 2.0).eval();
  m.form = MetricForm::Full;
  m.provenance = MetricProvenance::Identity;
  return m;
}

Matrix pairwise_distances(const Matrix& X, const DistanceSpec& spec, int threads) {
  const Index n = X.rows();
  Matrix D = Matrix::Zero(n, n);
  auto fill_rows = [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double d = distance(X.row(i).transpose(), X.row(j).transpose(), spec);
        D(i, j) = d;
        D(j, i) = d;
      }
    }
  };
  if (threads <= 1 || n < 4) {
    fill_rows(0, n);
    return D;
  }
  // Fixed row partition; each (i,j) entry has exactly one writer, so the
  // result is byte-identical to the serial fill.
  const int t = std::min<int>(threads, int(n));
  std::vector<std::thread> pool;
  pool.reserve(size_t(t));
  for (int w = 0; w < t; ++w) {
    const Index lo = n * w / t;
    const Index hi = n * (w + 1) / t;
    pool.emplace_back(fill_rows, lo, hi);
  }
  for (auto& th : pool) th.join();
  return D;
}

void save_metric(const MetricMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_metric: cannot open " + path);
  const Index d = m.dim();
  out << d << " " << to_string(m.form) << " " << to_string(m.provenance) << "\n";
  char buf[64];
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.M(i, j));
      out << buf << (j + 1 < d ? " " : "\n");
    }
  }
  if (!out) throw Error("save_metric: write failed for " + path);
}

MetricMatrix load_metric(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_metric: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw Error("load_metric: empty file " + path);
  std::istringstream hs(header);
  Index d = -1;
  std::string form_s, prov_s;
  if (!(hs >> d >> form_s >> prov_s) || d < 0)
    throw Error("load_metric: malformed header in " + path);
  MetricMatrix m;
  m.form = metric_form_from_string(form_s);
  m.provenance = metric_provenance_from_string(prov_s);
  m.M.resize(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (!(in >> m.M(i, j)))
        throw Error("load_metric: truncated matrix body in " + path);
  m.validate();
  return m;
}

}  // namespace airseg
