#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/core.hpp"
#include "weaklearn/kernels.hpp"
#include "weaklearn/mfas.hpp"

namespace weaklearn {

enum class Principle { infimum, average, supremum };

inline const char* principle_name(Principle p) {
  switch (p) {
    case Principle::infimum: return "infimum";
    case Principle::average: return "average";
    case Principle::supremum: return "supremum";
  }
  return "?";
}

// ------------------------------------------------------- set losses, finite

inline std::vector<int> enumerate_set(const ConstraintSet& s, const LossSpec& loss) {
  const int K = loss.size();
  std::vector<int> out;
  if (s.kind() == ConstraintSet::Kind::finite) {
    for (int y : s.labels()) {
      if (y >= K) throw std::out_of_range("label outside output space");
      out.push_back(y);
    }
    return out;
  }
  if (s.kind() == ConstraintSet::Kind::kendallPartial) {
    const auto& P = loss.perms();
    for (int y = 0; y < K; ++y)
      if (s.contains(P[y])) out.push_back(y);
    return out;
  }
  for (int y = 0; y < K; ++y)
    if (s.contains(y)) out.push_back(y);
  return out;
}

// L(z, S) for every z, from the loss table
inline Vec set_loss_vector(const Mat& table, Principle p, const std::vector<int>& members) {
  if (members.empty()) throw std::invalid_argument("empty constraint set");
  const auto K = table.rows();
  Vec out(K);
  for (Eigen::Index z = 0; z < K; ++z) {
    double inf = std::numeric_limits<double>::infinity(), sup = -inf, sum = 0.0;
    for (int y : members) {
      const double v = table(z, y);
      inf = std::min(inf, v);
      sup = std::max(sup, v);
      sum += v;
    }
    out[z] = p == Principle::infimum ? inf : p == Principle::supremum ? sup : sum / static_cast<double>(members.size());
  }
  return out;
}

inline double pointwise_set_loss(const LossSpec& loss, Principle p, int z, const ConstraintSet& s) {
  if (!loss.finite()) throw std::invalid_argument("finite loss expected");
  Mat T = loss.table();
  return set_loss_vector(T, p, enumerate_set(s, loss))[z];
}

// ---------------------------------------------------- set losses, regression

namespace detail {

inline double box_sq_distance(const Box& b, const Vec& z) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double e = z[i] < b.lower[i] ? b.lower[i] - z[i] : (z[i] > b.upper[i] ? z[i] - b.upper[i] : 0.0);
    d += e * e;
  }
  return d;
}

inline double box_sq_farthest(const Box& b, const Vec& z) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double e = std::max(std::abs(z[i] - b.lower[i]), std::abs(z[i] - b.upper[i]));
    d += e * e;
  }
  return d;
}

// E|z - Y| for Y uniform on [a, b]
inline double mean_abs_uniform(double z, double a, double b) {
  if (b <= a) return std::abs(z - a);
  if (z <= a) return 0.5 * (a + b) - z;
  if (z >= b) return z - 0.5 * (a + b);
  return ((z - a) * (z - a) + (b - z) * (b - z)) / (2.0 * (b - a));
}

}  // namespace detail

inline double pointwise_set_loss(const LossSpec& loss, Principle p, const Vec& z, const ConstraintSet& s) {
  if (loss.kind() != LossSpec::Kind::squared && loss.kind() != LossSpec::Kind::absoluteDeviation)
    throw std::invalid_argument("regression loss expected");
  if (s.kind() != ConstraintSet::Kind::box) throw std::invalid_argument("regression set losses need box constraints");
  const bool sq = loss.kind() == LossSpec::Kind::squared;
  const auto& boxes = s.box_list();
  if (z.size() != boxes.front().lower.size()) throw std::invalid_argument("dimension mismatch");
  switch (p) {
    case Principle::infimum: {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& b : boxes) d = std::min(d, detail::box_sq_distance(b, z));
      return sq ? d : std::sqrt(d);
    }
    case Principle::supremum: {
      if (!s.bounded()) throw std::invalid_argument("supremum loss undefined on unbounded sets");
      double d = 0.0;
      for (const auto& b : boxes) d = std::max(d, detail::box_sq_farthest(b, z));
      return sq ? d : std::sqrt(d);
    }
    case Principle::average: {
      if (!s.bounded()) throw std::invalid_argument("average loss undefined on unbounded sets");
      if (sq) return (z - s.center()).squaredNorm() + s.spread();
      if (z.size() != 1) throw std::invalid_argument("average absolute deviation implemented in one dimension");
      auto w = s.box_weights();
      double v = 0.0;
      for (std::size_t b = 0; b < boxes.size(); ++b)
        v += w[b] * detail::mean_abs_uniform(z[0], boxes[b].lower[0], boxes[b].upper[0]);
      return v;
    }
  }
  return 0.0;
}
inline double pointwise_set_loss(const LossSpec& loss, Principle p, double z, const ConstraintSet& s) {
  return pointwise_set_loss(loss, p, Vec::Constant(1, z), s);
}

// ---------------------------------------------------------------- decoding

// argmin_z <psi(z), g>, smallest id on ties
inline int decode(const LossSpec& loss, const Vec& g) {
  auto E = loss.embedding();
  if (g.size() != E.phi.cols()) throw std::invalid_argument("surrogate dimension mismatch");
  Vec s = E.psi * g;
  int best = 0;
  for (int z = 1; z < s.size(); ++z)
    if (s[z] < s[best]) best = z;
  return best;
}

// decode the surrogate of a distribution q over labels
inline int decode_distribution(const LossSpec& loss, const Vec& q) { return decode(loss, loss.embedding().phi.transpose() * q); }

// ---------------------------------------------------------------- estimator

struct PartialConfig {
  int grid_points = 1000;
  double grid_margin = 0.1;
  bool explicit_grid = false;
  double grid_lo = 0.0, grid_hi = 1.0;
  int ranking_max_iters = 50;
  enum class MfasSolver { lp, heuristic, brute } ranking_solver = MfasSolver::lp;
};

struct PartialEstimator {
  std::shared_ptr<const WeightingScheme> weights;
  LossSpec loss;
  Principle principle = Principle::infimum;
  PartialConfig config;

  PartialEstimator(std::shared_ptr<const WeightingScheme> w, LossSpec l, Principle p, PartialConfig c = {})
      : weights(std::move(w)), loss(std::move(l)), principle(p), config(c) {}

  Vec alpha(const Vec& x) const {
    if (!weights) throw std::invalid_argument("estimator has no weighting scheme");
    return weights->at(x);
  }
};

struct ClassDecision {
  int label = 0;
  bool degenerate = false;
  Vec risk;  // sum_i alpha_i L(z, S_i) per z
};

// precomputed L(z, S_i), one row per sample
inline Mat set_loss_matrix(const LossSpec& loss, Principle p, const std::vector<ConstraintSet>& sets) {
  Mat T = loss.table();
  Mat out(static_cast<Eigen::Index>(sets.size()), T.rows());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (p == Principle::supremum && !sets[i].bounded() && sets[i].kind() != ConstraintSet::Kind::full)
      throw std::invalid_argument("supremum loss undefined on unbounded sets");
    out.row(static_cast<Eigen::Index>(i)) = set_loss_vector(T, p, enumerate_set(sets[i], loss)).transpose();
  }
  return out;
}

inline ClassDecision decide_from_risk(Vec risk) {
  ClassDecision d;
  int best = 0;
  for (int z = 1; z < risk.size(); ++z)
    if (risk[z] < risk[best]) best = z;
  d.label = best;
  const double spread = risk.maxCoeff() - risk.minCoeff();
  d.degenerate = spread <= 1e-12 * (1.0 + std::abs(risk.maxCoeff()));
  d.risk = std::move(risk);
  return d;
}

inline ClassDecision infer_classification_weights(const LossSpec& loss, Principle p, const std::vector<ConstraintSet>& sets,
                                                  const Vec& alpha) {
  if (static_cast<Eigen::Index>(sets.size()) != alpha.size()) throw std::invalid_argument("weights and sets differ in length");
  return decide_from_risk(set_loss_matrix(loss, p, sets).transpose() * alpha);
}

template <class Y>
ClassDecision infer_classification(const PartialEstimator& est, const WeakDataset<Y>& train, const Vec& x) {
  return infer_classification_weights(est.loss, est.principle, train.constraints, est.alpha(x));
}

// batch version: row q of Q gives one prediction
template <class Y>
std::vector<int> infer_classification_batch(const PartialEstimator& est, const WeakDataset<Y>& train, const Mat& Q) {
  Mat L = set_loss_matrix(est.loss, est.principle, train.constraints);
  Mat W = est.weights->at_rows(Q);
  Mat R = W * L;
  std::vector<int> out(Q.rows());
  for (Eigen::Index q = 0; q < Q.rows(); ++q) out[q] = decide_from_risk(R.row(q).transpose()).label;
  return out;
}

// ---------------------------------------------------------------- multilabel

struct MultilabelMode {
  enum class Kind { threshold, topk } kind = Kind::threshold;
  double epsilon = 0.0;
  int k = 1;
  static MultilabelMode threshold(double eps) { return {Kind::threshold, eps, 0}; }
  static MultilabelMode topk(int k) { return {Kind::topk, 0.0, k}; }
};

inline Vec multilabel_scores(int m, const std::vector<ConstraintSet>& sets, const Vec& alpha) {
  Vec h = Vec::Zero(m);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    if (s.kind() == ConstraintSet::Kind::full) continue;
    if (s.kind() != ConstraintSet::Kind::tags) throw std::invalid_argument("multilabel inference needs tag constraints");
    for (int j : s.positive_tags()) h[j] += alpha[static_cast<Eigen::Index>(i)];
    for (int j : s.negative_tags()) h[j] -= alpha[static_cast<Eigen::Index>(i)];
  }
  return h;
}

inline std::vector<int> multilabel_decide(const Vec& h, MultilabelMode mode) {
  const int m = static_cast<int>(h.size());
  std::vector<int> out(m, 0);
  if (mode.kind == MultilabelMode::Kind::threshold) {
    for (int j = 0; j < m; ++j) out[j] = h[j] > mode.epsilon ? 1 : 0;
    return out;
  }
  if (mode.k < 0 || mode.k > m) throw std::invalid_argument("top-k needs 0 <= k <= m");
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return h[a] > h[b]; });
  for (int r = 0; r < mode.k; ++r) out[idx[r]] = 1;
  return out;
}

template <class Y>
std::vector<int> infer_multilabel(const PartialEstimator& est, const WeakDataset<Y>& train, const Vec& x, MultilabelMode mode) {
  return multilabel_decide(multilabel_scores(est.loss.m(), train.constraints, est.alpha(x)), mode);
}

// -------------------------------------------------------- interval regression

struct RegressionGrid {
  double lo, hi;
  int points;
  double at(int g) const { return points == 1 ? lo : lo + (hi - lo) * g / (points - 1); }
};

inline RegressionGrid regression_grid(const std::vector<ConstraintSet>& sets, const PartialConfig& cfg) {
  if (cfg.explicit_grid) return {cfg.grid_lo, cfg.grid_hi, cfg.grid_points};
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : sets) {
    if (s.kind() != ConstraintSet::Kind::box) continue;
    for (const auto& b : s.box_list()) {
      if (b.lower.size() != 1) throw std::invalid_argument("interval regression is one dimensional");
      for (double v : {b.lower[0], b.upper[0]})
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) throw std::invalid_argument("empty constraint union");
  const double margin = cfg.grid_margin * std::max(hi - lo, 1e-12);
  return {lo - margin, hi + margin, cfg.grid_points};
}

// centre of the tied plateau of minimizers, leftmost among equidistant
inline int grid_argmin(const Vec& r) {
  const double mn = r.minCoeff();
  const double tol = 1e-12 * (1.0 + std::abs(mn));
  int first = -1, last = -1;
  for (int g = 0; g < r.size(); ++g)
    if (r[g] <= mn + tol) {
      if (first < 0) first = g;
      last = g;
    }
  // among tied points, the one nearest the middle of [first, last]
  const double mid = 0.5 * (first + last);
  int best = first;
  for (int g = first; g <= last; ++g)
    if (r[g] <= mn + tol && std::abs(g - mid) < std::abs(best - mid)) best = g;
  return best;
}

// loss of every grid point against every set: n x G
inline Mat grid_loss_matrix(const LossSpec& loss, Principle p, const std::vector<ConstraintSet>& sets, const RegressionGrid& grid) {
  Mat out(static_cast<Eigen::Index>(sets.size()), grid.points);
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (int g = 0; g < grid.points; ++g)
      out(static_cast<Eigen::Index>(i), g) = pointwise_set_loss(loss, p, grid.at(g), sets[i]);
  return out;
}

inline double infer_interval_weights(const LossSpec& loss, Principle p, const std::vector<ConstraintSet>& sets,
                                     const Vec& alpha, const PartialConfig& cfg = {}) {
  auto grid = regression_grid(sets, cfg);
  Vec r = grid_loss_matrix(loss, p, sets, grid).transpose() * alpha;
  return grid.at(grid_argmin(r));
}

template <class Y>
double infer_interval_regression(const PartialEstimator& est, const WeakDataset<Y>& train, const Vec& x) {
  return infer_interval_weights(est.loss, est.principle, train.constraints, est.alpha(x), est.config);
}

template <class Y>
Vec infer_interval_batch(const PartialEstimator& est, const WeakDataset<Y>& train, const Mat& Q) {
  auto grid = regression_grid(train.constraints, est.config);
  Mat L = grid_loss_matrix(est.loss, est.principle, train.constraints, grid);
  Mat R = est.weights->at_rows(Q) * L;
  Vec out(Q.rows());
  for (Eigen::Index q = 0; q < Q.rows(); ++q) out[q] = grid.at(grid_argmin(R.row(q).transpose()));
  return out;
}

// ------------------------------------------------------------------ ranking

inline MfasSolution solve_mfas(const MfasInstance& inst, PartialConfig::MfasSolver solver) {
  switch (solver) {
    case PartialConfig::MfasSolver::brute: return solve_brute(inst);
    case PartialConfig::MfasSolver::heuristic: return solve_heuristic(inst);
    case PartialConfig::MfasSolver::lp: {
      auto lp = solve_lp(inst);
      if (lp.exact) return {lp.sigma, lp.objective};
      auto h = solve_heuristic(inst);
      return h.objective < lp.objective ? h : MfasSolution{lp.sigma, lp.objective};
    }
  }
  throw std::logic_error("unknown solver");
}

// observed coordinates at +-1, unseen ones at 0
inline Vec kendall_observed(const ConstraintSet& s, int m) {
  Vec xi = Vec::Zero(num_pairs(m));
  if (s.kind() == ConstraintSet::Kind::full) return xi;
  if (s.kind() != ConstraintSet::Kind::kendallPartial) throw std::invalid_argument("ranking needs kendall constraints");
  for (auto [k, v] : s.fixed_pairs()) xi[pair_index(m, k.first, k.second)] = v;
  return xi;
}

struct RankingResult {
  Perm sigma;
  std::vector<double> objective;  // sum_i alpha_i <phi(z), xi_i> after each sweep
  int iterations = 0;
};

// Alternate maximization of sum_i alpha_i <phi(z), xi_i>: z by MFAS, then each xi_i inside S_i.
// Samples with negative weight pull xi_i away from z, so every step ascends the same objective.
inline RankingResult infer_ranking_weights(int m, const std::vector<ConstraintSet>& sets, const Vec& alpha,
                                           int max_iters = 50,
                                           PartialConfig::MfasSolver solver = PartialConfig::MfasSolver::lp) {
  const auto n = static_cast<Eigen::Index>(sets.size());
  if (alpha.size() != n) throw std::invalid_argument("weights and sets differ in length");
  std::vector<Vec> xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi[i] = kendall_observed(sets[i], m);
  auto total = [&](const Vec& phi) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (alpha[i] != 0.0) v += alpha[i] * phi.dot(xi[i]);
    return v;
  };
  RankingResult res;
  Perm z;
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    Vec g = Vec::Zero(num_pairs(m));
    for (Eigen::Index i = 0; i < n; ++i)
      if (alpha[i] != 0.0) g += alpha[i] * xi[i];
    Perm znew = solve_mfas(MfasInstance(m, -g), solver).sigma;
    // keep the incumbent when the new order does not strictly improve
    if (!z.empty() && total(embed_kendall(znew)) <= total(embed_kendall(z)) + 1e-12) znew = z;
    Vec phi = embed_kendall(znew);
    bool changed = znew != z;
    z = znew;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (alpha[i] == 0.0) continue;
      const double sgn = alpha[i] > 0 ? 1.0 : -1.0;
      Vec target = kendall_observed(sets[i], m);
      if (sets[i].kind() == ConstraintSet::Kind::kendallPartial &&
          static_cast<int>(sets[i].fixed_pairs().size()) == num_pairs(m)) {
        xi[i] = target;
        continue;
      }
      Perm y = solve_mfas(MfasInstance(m, -sgn * phi, sets[i]), solver).sigma;
      Vec cand = embed_kendall(y);
      if (sgn * phi.dot(cand) > sgn * phi.dot(xi[i]) + 1e-12) {
        xi[i] = cand;
        changed = true;
      }
    }
    res.objective.push_back(total(phi));
    res.iterations = it + 1;
    if (!changed) break;
  }
  res.sigma = z;
  return res;
}

template <class Y>
RankingResult infer_ranking(const PartialEstimator& est, const WeakDataset<Y>& train, const Vec& x, int max_iters = -1) {
  return infer_ranking_weights(est.loss.m(), train.constraints, est.alpha(x),
                               max_iters < 0 ? est.config.ranking_max_iters : max_iters, est.config.ranking_solver);
}

}  // namespace weaklearn
