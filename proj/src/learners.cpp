#include "airseg/learners.hpp"

#include "airseg/stats.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace airseg {

void LearnerConfig::validate() const {
  if (algorithm != "mmc" && algorithm != "itml" && algorithm != "lmnn")
    throw Error("LearnerConfig: unknown algorithm \"" + algorithm + "\"");
  if (max_iterations < 1) throw Error("LearnerConfig: max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw Error("LearnerConfig: tolerance must be positive");
  if (!(gamma > 0.0)) throw Error("LearnerConfig: gamma must be positive");
  if (!(mu >= 0.0 && mu <= 1.0)) throw Error("LearnerConfig: mu must be in [0, 1]");
  if (!(initial_step > 0.0)) throw Error("LearnerConfig: initial_step must be positive");
  if (u && !(*u > 0.0)) throw Error("LearnerConfig: bound u must be positive");
  if (l && !(*l > 0.0)) throw Error("LearnerConfig: bound l must be positive");
  if (u && l && !(*u < *l))
    throw Error("LearnerConfig: the similar-pair bound u must lie below the dissimilar-pair bound l");
}

namespace {

Vector row_diff(const Matrix& X, Index i, Index j) {
  return (X.row(i) - X.row(j)).transpose();
}

double quad(const Matrix& M, const Vector& v) { return v.dot(M * v); }

void check_pairs(const std::vector<IndexPair>& pairs, Index n, const char* who) {
  for (const IndexPair& p : pairs)
    if (p.i < 0 || p.j < 0 || p.i >= n || p.j >= n || p.i == p.j)
      throw Error(std::string(who) + ": pair indices out of range");
}

void check_triplets(const std::vector<Triplet>& R, Index n, const char* who) {
  for (const Triplet& t : R)
    if (t.i < 0 || t.j < 0 || t.k < 0 || t.i >= n || t.j >= n || t.k >= n ||
        t.i == t.j || t.j == t.k || t.i == t.k)
      throw Error(std::string(who) + ": triplet indices out of range");
}

/// S plus the (i, j) leg of every triplet, deduplicated as unordered pairs
/// in first-insertion order.
std::vector<IndexPair> pull_set(const std::vector<IndexPair>& S,
                                const std::vector<Triplet>& R) {
  std::vector<IndexPair> pull;
  std::set<std::pair<Index, Index>> seen;
  auto add = [&](Index i, Index j) {
    const auto key = std::minmax(i, j);
    if (seen.insert(key).second) pull.push_back({key.first, key.second});
  };
  for (const IndexPair& p : S) add(p.i, p.j);
  for (const Triplet& t : R) add(t.i, t.j);
  return pull;
}

std::pair<double, double> resolve_bounds(const FeatureMatrix& X, const LearnerConfig& cfg) {
  if (cfg.u && cfg.l) return {*cfg.u, *cfg.l};
  const MetricMatrix prior =
      cfg.prior ? *cfg.prior : MetricMatrix::identity(X.cols());
  const auto [du, dl] = default_bounds(X, prior);
  return {cfg.u.value_or(du), cfg.l.value_or(dl)};
}

}  // namespace

std::pair<double, double> default_bounds(const FeatureMatrix& X, const MetricMatrix& prior) {
  const Index n = X.rows();
  if (n < 2) throw Error("default_bounds: need at least 2 objects");
  if (prior.dim() != X.cols()) throw Error("default_bounds: prior dimension mismatch");
  std::vector<double> sq;
  sq.reserve(size_t(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) sq.push_back(quad(prior.M, row_diff(X.X, i, j)));
  return {quantile(sq, 0.05), quantile(sq, 0.95)};
}

double logdet_divergence(const Matrix& A, const Matrix& B) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw Error("logdet_divergence: dimension mismatch");
  Eigen::LLT<Matrix> lltA(A);
  Eigen::LLT<Matrix> lltB(B);
  if (lltA.info() != Eigen::Success || lltB.info() != Eigen::Success)
    throw Error("logdet_divergence: both matrices must be positive definite");
  auto logdet = [](const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  return lltB.solve(A).trace() - (logdet(lltA) - logdet(lltB)) - double(A.rows());
}

std::pair<MetricMatrix, FitReport> fit_mmc(const FeatureMatrix& X,
                                           const std::vector<IndexPair>& S,
                                           const std::vector<IndexPair>& Dset,
                                           const LearnerConfig& cfg) {
  cfg.validate();
  if (S.empty() || Dset.empty())
    throw Error("fit_mmc: similar and dissimilar sets must both be non-empty");
  const Index n = X.rows();
  const Index d = X.cols();
  check_pairs(S, n, "fit_mmc");
  check_pairs(Dset, n, "fit_mmc");

  // Pull gradient is constant: per-feature squared gaps summed over S.
  Vector s = Vector::Zero(d);
  for (const IndexPair& p : S)
    s += row_diff(X.X, p.i, p.j).array().square().matrix();

  std::vector<Vector> V;  // squared per-feature gaps of non-degenerate dissimilar pairs
  V.reserve(Dset.size());
  for (const IndexPair& p : Dset) {
    Vector v = row_diff(X.X, p.i, p.j).array().square().matrix();
    if (v.maxCoeff() > 0.0) V.push_back(std::move(v));
  }
  if (V.empty())
    throw Error("fit_mmc: every dissimilar pair joins identical points; the log term is undefined");

  auto push_sum = [&](const Vector& m) {
    double T = 0.0;
    for (const Vector& v : V) T += std::sqrt(std::max(v.dot(m), 0.0));
    return T;
  };
  auto objective = [&](const Vector& m) { return s.dot(m) - std::log(push_sum(m)); };
  auto gradient = [&](const Vector& m) {
    double T = 0.0;
    Vector push = Vector::Zero(d);
    for (const Vector& v : V) {
      const double dist = std::sqrt(std::max(v.dot(m), 0.0));
      T += dist;
      if (dist > 0.0) push += v / (2.0 * dist);
    }
    return (s - push / T).eval();
  };

  Vector m = Vector::Ones(d);
  double cur = objective(m);
  FitReport report;
  report.algorithm = "mmc";
  double step = cfg.initial_step;
  Index small_changes = 0;
  while (Index(report.trace.size()) < cfg.max_iterations) {
    const Vector grad = gradient(m);
    double projected = 0.0;  // at a zero entry only a negative component can act
    for (Index k = 0; k < d; ++k)
      projected = std::max(projected,
                           m(k) > 0.0 ? std::abs(grad(k)) : std::max(-grad(k), 0.0));
    if (projected < 1e-12) {
      report.converged = true;
      report.stop_reason = "gradient vanished";
      break;
    }
    bool accepted = false;
    while (step > 1e-18) {
      Vector trial = (m - step * grad).cwiseMax(0.0);
      if (trial.maxCoeff() <= 0.0) {
        step /= 2.0;
        continue;
      }
      const double next = objective(trial);
      if (std::isfinite(next) && next < cur) {
        const double rel = std::abs(cur - next) / std::max(1.0, std::abs(cur));
        m = std::move(trial);
        cur = next;
        report.trace.push_back(cur);
        small_changes = rel < cfg.tolerance ? small_changes + 1 : 0;
        accepted = true;
        step *= 2.0;
        break;
      }
      step /= 2.0;
    }
    if (!accepted) {
      report.stop_reason = "no descent step found";
      break;
    }
    if (small_changes >= 3) {
      report.converged = true;
      report.stop_reason = "objective change below tolerance";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max iterations reached";
  report.iterations = Index(report.trace.size());
  report.final_objective = report.trace.empty() ? cur : report.trace.back();

  // Rescale so the dissimilar-pair distance sum is exactly 1; distances all
  // scale together, so rankings and normalized importances are untouched.
  const double T = push_sum(m);
  m *= 1.0 / (T * T);

  MetricMatrix metric;
  metric.M = m.asDiagonal();
  metric.form = MetricForm::Diagonal;
  metric.provenance = MetricProvenance::Mmc;
  metric.validate();

  const ViolationReport vr = evaluate_constraints(metric, X, S, Dset, {}, cfg);
  report.violated_similar = vr.violated_similar;
  report.violated_dissimilar = vr.violated_dissimilar;
  report.violated_triplets = vr.violated_triplets;
  return {metric, report};
}

std::pair<MetricMatrix, FitReport> fit_itml(const FeatureMatrix& X,
                                            const std::vector<IndexPair>& S,
                                            const std::vector<IndexPair>& Dset,
                                            const LearnerConfig& cfg,
                                            const FitObserver& observer) {
  cfg.validate();
  const Index n = X.rows();
  const Index d = X.cols();
  check_pairs(S, n, "fit_itml");
  check_pairs(Dset, n, "fit_itml");

  MetricMatrix prior = cfg.prior ? *cfg.prior : MetricMatrix::identity(d);
  if (prior.dim() != d) throw Error("fit_itml: prior dimension mismatch");
  prior.validate();
  {
    Eigen::LLT<Matrix> llt(prior.M);
    if (llt.info() != Eigen::Success)
      throw Error("fit_itml: prior must be positive definite");
  }

  FitReport report;
  report.algorithm = "itml";
  if (S.empty() && Dset.empty()) {
    MetricMatrix out = prior;
    out.form = MetricForm::Full;
    out.provenance = MetricProvenance::Itml;
    report.converged = true;
    report.stop_reason = "no constraints";
    report.final_objective = 0.0;
    return {out, report};
  }

  const auto [u, l] = resolve_bounds(X, cfg);
  if (!(u > 0.0))
    throw Error("fit_itml: derived similar bound u is not positive (degenerate data)");
  if (!(u < l)) throw Error("fit_itml: bounds require u < l");

  struct BoundConstraint {
    Index i, j;
    double sign;  // +1 presses below u, -1 presses above l
    double bhat;
    double lambda = 0.0;
  };
  std::vector<BoundConstraint> cons;
  cons.reserve(S.size() + Dset.size());
  for (const IndexPair& p : S) cons.push_back({p.i, p.j, 1.0, u});
  for (const IndexPair& p : Dset) cons.push_back({p.i, p.j, -1.0, l});

  Matrix M = prior.M;
  const double gamma_proj = cfg.gamma / (cfg.gamma + 1.0);
  std::vector<double> lambda_old(cons.size(), 0.0);

  for (Index sweep = 0; sweep < cfg.max_iterations; ++sweep) {
    for (BoundConstraint& c : cons) {
      const Vector v = row_diff(X.X, c.i, c.j);
      const double p = quad(M, v);
      if (p <= 0.0) continue;  // identical points cannot be moved
      const double alpha =
          std::min(c.lambda, c.sign * gamma_proj * (1.0 / p - 1.0 / c.bhat));
      c.lambda -= alpha;
      const double beta = c.sign * alpha / (1.0 - c.sign * alpha * p);
      c.bhat = 1.0 / (1.0 / c.bhat + c.sign * alpha / cfg.gamma);
      const Vector Mv = M * v;
      M += beta * (Mv * Mv.transpose());
    }

    // True objective in (M, slack): divergence to the prior plus the
    // gamma-weighted scalar divergences of the slack bounds.
    double obj = logdet_divergence(M, prior.M);
    for (const BoundConstraint& c : cons) {
      const double r = c.bhat / (c.sign > 0.0 ? u : l);
      obj += cfg.gamma * (r - std::log(r) - 1.0);
    }
    report.trace.push_back(obj);
    if (observer) observer(M, obj);

    double change = 0.0, scale = 0.0;
    for (std::size_t idx = 0; idx < cons.size(); ++idx) {
      change += std::abs(cons[idx].lambda - lambda_old[idx]);
      scale += std::abs(cons[idx].lambda) + std::abs(lambda_old[idx]);
      lambda_old[idx] = cons[idx].lambda;
    }
    if (scale == 0.0 || change / scale < cfg.tolerance) {
      report.converged = true;
      report.stop_reason =
          scale == 0.0 ? "no multiplier updates needed" : "multiplier change below tolerance";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max iterations reached";
  report.iterations = Index(report.trace.size());
  report.final_objective = report.trace.empty() ? 0.0 : report.trace.back();

  MetricMatrix out;
  out.M = ((M + M.transpose()) / 2.0).eval();
  out.form = MetricForm::Full;
  out.provenance = MetricProvenance::Itml;
  out.validate();

  LearnerConfig used = cfg;
  used.u = u;
  used.l = l;
  const ViolationReport vr = evaluate_constraints(out, X, S, Dset, {}, used);
  report.violated_similar = vr.violated_similar;
  report.violated_dissimilar = vr.violated_dissimilar;
  report.violated_triplets = vr.violated_triplets;
  return {out, report};
}

std::pair<MetricMatrix, FitReport> fit_lmnn(const FeatureMatrix& X,
                                            const std::vector<IndexPair>& S,
                                            const std::vector<Triplet>& R,
                                            const LearnerConfig& cfg,
                                            const FitObserver& observer) {
  cfg.validate();
  if (R.empty()) throw Error("fit_lmnn: triplet set must be non-empty");
  const Index n = X.rows();
  const Index d = X.cols();
  check_pairs(S, n, "fit_lmnn");
  check_triplets(R, n, "fit_lmnn");

  const std::vector<IndexPair> pull = pull_set(S, R);
  std::vector<Vector> pull_diff;
  pull_diff.reserve(pull.size());
  for (const IndexPair& p : pull) pull_diff.push_back(row_diff(X.X, p.i, p.j));
  std::vector<Vector> leg_ij, leg_ik;
  leg_ij.reserve(R.size());
  leg_ik.reserve(R.size());
  for (const Triplet& t : R) {
    leg_ij.push_back(row_diff(X.X, t.i, t.j));
    leg_ik.push_back(row_diff(X.X, t.i, t.k));
  }

  const double mu = cfg.mu;
  Matrix pull_grad = Matrix::Zero(d, d);
  for (const Vector& v : pull_diff) pull_grad += v * v.transpose();
  pull_grad *= (1.0 - mu);

  auto loss_of = [&](const Matrix& M) {
    double pull_term = 0.0;
    for (const Vector& v : pull_diff) pull_term += quad(M, v);
    double push_term = 0.0;
    for (std::size_t t = 0; t < leg_ij.size(); ++t) {
      const double hinge = 1.0 + quad(M, leg_ij[t]) - quad(M, leg_ik[t]);
      if (hinge > 0.0) push_term += hinge;
    }
    return (1.0 - mu) * pull_term + mu * push_term;
  };
  auto subgradient = [&](const Matrix& M) {
    Matrix G = pull_grad;
    for (std::size_t t = 0; t < leg_ij.size(); ++t) {
      const double hinge = 1.0 + quad(M, leg_ij[t]) - quad(M, leg_ik[t]);
      if (hinge > 0.0)
        G += mu * (leg_ij[t] * leg_ij[t].transpose() - leg_ik[t] * leg_ik[t].transpose());
    }
    return G;
  };

  Matrix M = Matrix::Identity(d, d);
  double cur = loss_of(M);
  FitReport report;
  report.algorithm = "lmnn";
  // Each line search restarts from twice the last accepted step, so one deep
  // backtrack near a hinge kink cannot strand every later search at a tiny step.
  double base = cfg.initial_step;
  Index small_changes = 0;
  bool any_accepted = false;
  while (Index(report.trace.size()) < cfg.max_iterations) {
    const Matrix G = subgradient(M);
    if (G.cwiseAbs().maxCoeff() < 1e-15) {
      report.converged = true;
      report.stop_reason = "zero subgradient";
      break;
    }
    bool accepted = false;
    for (double step = base; step > base * 1e-12 && step > 1e-16; step /= 2.0) {
      const Matrix trial = project_psd((M - step * G).eval()).M;
      const double next = loss_of(trial);
      if (next < cur) {
        const double rel = std::abs(cur - next) / std::max(1.0, std::abs(cur));
        M = trial;
        cur = next;
        report.trace.push_back(cur);
        if (observer) observer(M, cur);
        small_changes = rel < cfg.tolerance ? small_changes + 1 : 0;
        accepted = true;
        any_accepted = true;
        base = step * 2.0;
        break;
      }
    }
    if (!accepted) {
      if (!any_accepted)
        throw Error("fit_lmnn: step size collapsed before any accepted step");
      report.stop_reason = "no descent step found";
      break;
    }
    if (small_changes >= 3) {
      report.converged = true;
      report.stop_reason = "objective change below tolerance";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max iterations reached";
  report.iterations = Index(report.trace.size());
  report.final_objective = cur;

  MetricMatrix out;
  out.M = M;
  out.form = MetricForm::Full;
  out.provenance = MetricProvenance::Lmnn;
  out.validate();

  const ViolationReport vr = evaluate_constraints(out, X, S, {}, R, cfg);
  report.violated_similar = vr.violated_similar;
  report.violated_dissimilar = vr.violated_dissimilar;
  report.violated_triplets = vr.violated_triplets;
  return {out, report};
}

std::pair<MetricMatrix, FitReport> fit(const FeatureMatrix& X, const ConstraintSets& cs,
                                       const LearnerConfig& cfg) {
  if (cfg.algorithm == "mmc") return fit_mmc(X, cs.similar, cs.dissimilar, cfg);
  if (cfg.algorithm == "itml") return fit_itml(X, cs.similar, cs.dissimilar, cfg);
  if (cfg.algorithm == "lmnn") return fit_lmnn(X, cs.similar, cs.triplets, cfg);
  throw Error("fit: unknown algorithm \"" + cfg.algorithm + "\"");
}

ViolationReport evaluate_constraints(const MetricMatrix& M, const FeatureMatrix& X,
                                     const std::vector<IndexPair>& S,
                                     const std::vector<IndexPair>& Dset,
                                     const std::vector<Triplet>& R,
                                     const LearnerConfig& cfg) {
  cfg.validate();
  M.validate();
  const Index n = X.rows();
  if (M.dim() != X.cols()) throw Error("evaluate_constraints: metric dimension mismatch");
  check_pairs(S, n, "evaluate_constraints");
  check_pairs(Dset, n, "evaluate_constraints");
  check_triplets(R, n, "evaluate_constraints");

  ViolationReport report;
  std::tie(report.u, report.l) = resolve_bounds(X, cfg);
  for (const IndexPair& p : S)
    if (quad(M.M, row_diff(X.X, p.i, p.j)) > report.u) ++report.violated_similar;
  for (const IndexPair& p : Dset)
    if (quad(M.M, row_diff(X.X, p.i, p.j)) < report.l) ++report.violated_dissimilar;

  double pull_term = 0.0;
  for (const IndexPair& p : pull_set(S, R))
    pull_term += quad(M.M, row_diff(X.X, p.i, p.j));
  double push_term = 0.0;
  for (const Triplet& t : R) {
    const double hinge = 1.0 + quad(M.M, row_diff(X.X, t.i, t.j)) -
                         quad(M.M, row_diff(X.X, t.i, t.k));
    if (hinge > 0.0) {
      push_term += hinge;
      ++report.violated_triplets;
    }
  }
  report.lmnn_loss = (1.0 - cfg.mu) * pull_term + cfg.mu * push_term;
  return report;
}

void save_fit_report(const FitReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_fit_report: cannot open " + path);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", report.final_objective);
  out << "algorithm " << report.algorithm << "\n";
  out << "final_objective " << buf << "\n";
  out << "iterations " << report.iterations << "\n";
  out << "converged " << (report.converged ? "true" : "false") << "\n";
  out << "stop_reason " << report.stop_reason << "\n";
  out << "violated_similar " << report.violated_similar << "\n";
  out << "violated_dissimilar " << report.violated_dissimilar << "\n";
  out << "violated_triplets " << report.violated_triplets << "\n";
  out << "trace " << report.trace.size() << "\n";
  for (double v : report.trace) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf << "\n";
  }
  if (!out) throw Error("save_fit_report: write failed for " + path);
}

}  // namespace airseg
