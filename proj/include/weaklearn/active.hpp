#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/core.hpp"
#include "weaklearn/kernels.hpp"
#include "weaklearn/rng.hpp"

namespace weaklearn {

inline Vec uniform_sphere(int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("sphere dimension must be >= 1");
  Vec u(m);
  double n2 = 0;
  do {
    for (int i = 0; i < m; ++i) u[i] = rng.normal();
    n2 = u.squaredNorm();
  } while (n2 == 0);
  return u / std::sqrt(n2);
}

inline int sign_of(double v) { return v >= 0 ? 1 : -1; }

// ---- step schedule and model ----

struct StepSchedule {
  enum class Kind { constant, decaying };
  Kind kind = Kind::decaying;
  double gamma0 = 1.0;

  static StepSchedule constant(double g) { return {Kind::constant, g}; }
  static StepSchedule decaying(double g) { return {Kind::decaying, g}; }
  // t counts from 1
  double at(long t) const { return kind == Kind::constant ? gamma0 : gamma0 / std::sqrt(static_cast<double>(t)); }
};

enum class Averaging { last, running_mean };

class ActiveModel {
 public:
  ActiveModel(GaussianKernel kernel, Mat anchors, int outputs, StepSchedule gamma, double ridge = 0.0,
              Averaging avg = Averaging::last)
      : kernel_(kernel), anchors_(std::move(anchors)), gamma_(gamma), ridge_(ridge), avg_(avg) {
    if (outputs < 1) throw std::invalid_argument("need at least one output");
    if (anchors_.rows() < 1) throw std::invalid_argument("need at least one anchor");
    if (!(ridge >= 0)) throw std::invalid_argument("ridge must be >= 0");
    K_pp_ = kernel_.gram(anchors_);
    a_ = Mat::Zero(anchors_.rows(), outputs);
    mean_ = a_;
  }

  int p() const { return static_cast<int>(anchors_.rows()); }
  int outputs() const { return static_cast<int>(a_.cols()); }
  long t() const { return t_; }
  const Mat& anchors() const { return anchors_; }
  const GaussianKernel& kernel() const { return kernel_; }
  const StepSchedule& schedule() const { return gamma_; }
  double ridge() const { return ridge_; }
  Averaging averaging() const { return avg_; }

  // last iterate
  const Mat& iterate() const { return a_; }
  const Mat& running_mean() const { return mean_; }
  // coefficients used for prediction
  const Mat& coefficients() const { return avg_ == Averaging::running_mean ? mean_ : a_; }

  Vec features(const Vec& x) const { return kernel_.gram(x.transpose(), anchors_).row(0).transpose(); }
  Vec current(const Vec& x) const { return a_.transpose() * features(x); }
  Vec predict(const Vec& x) const { return coefficients().transpose() * features(x); }
  Mat predict_rows(const Mat& X) const { return kernel_.gram(X, anchors_) * coefficients(); }

  // a <- a + scale * k u^T - gamma * ridge * 2 K_pp a; returns gamma(t) of this step
  double advance(const Vec& k, const Vec& u, double signed_unit) {
    if (k.size() != p() || u.size() != outputs()) throw std::invalid_argument("update shape mismatch");
    ++t_;
    const double g = gamma_.at(t_);
    Mat next = a_;
    if (signed_unit != 0) next.noalias() += (g * signed_unit) * k * u.transpose();
    if (ridge_ > 0) next.noalias() -= (2.0 * g * ridge_) * (K_pp_ * a_);
    a_ = std::move(next);
    mean_ += (a_ - mean_) / static_cast<double>(t_);
    return g;
  }

  void set_iterate(const Mat& a) {
    if (a.rows() != a_.rows() || a.cols() != a_.cols()) throw std::invalid_argument("shape mismatch");
    a_ = a;
  }

 private:
  GaussianKernel kernel_;
  Mat anchors_;
  Mat K_pp_;
  Mat a_, mean_;
  StepSchedule gamma_;
  double ridge_;
  Averaging avg_;
  long t_ = 0;
};

// ---- queries ----

struct WeakQuery {
  enum class Kind { halfspace, membership, shifted_halfspace };
  Kind kind = Kind::halfspace;
  Vec z;                  // halfspace: threshold point; shifted: current prediction f(x)
  Vec u;                  // unit direction
  double v = 0;           // shift of the shifted halfspace
  std::vector<int> set;   // membership: sorted label ids

  static WeakQuery halfspace(Vec z, Vec u) {
    check_unit(u);
    WeakQuery q;
    q.kind = Kind::halfspace;
    q.z = std::move(z);
    q.u = std::move(u);
    return q;
  }
  static WeakQuery membership(std::vector<int> s) {
    std::sort(s.begin(), s.end());
    WeakQuery q;
    q.kind = Kind::membership;
    q.set = std::move(s);
    return q;
  }
  static WeakQuery shifted(Vec fx, Vec u, double v) {
    check_unit(u);
    WeakQuery q;
    q.kind = Kind::shifted_halfspace;
    q.z = std::move(fx);
    q.u = std::move(u);
    q.v = v;
    return q;
  }

 private:
  static void check_unit(const Vec& u) {
    if (std::abs(u.norm() - 1.0) > 1e-9) throw std::invalid_argument("query direction must have unit norm");
  }
};

inline const char* query_kind_name(WeakQuery::Kind k) {
  switch (k) {
    case WeakQuery::Kind::halfspace: return "halfspace";
    case WeakQuery::Kind::membership: return "membership";
    case WeakQuery::Kind::shifted_halfspace: return "shiftedHalfspace";
  }
  return "?";
}

// Answer of a labeler who knows y. Halfspace: sign(<y - z, u>) with sign(0) = +1; others 0/1.
inline int simulated_answer(const Vec& y, const WeakQuery& q) {
  switch (q.kind) {
    case WeakQuery::Kind::halfspace:
      if (y.size() != q.u.size()) throw std::invalid_argument("label dimension mismatch");
      return sign_of((y - q.z).dot(q.u));
    case WeakQuery::Kind::shifted_halfspace:
      if (y.size() != q.u.size()) throw std::invalid_argument("label dimension mismatch");
      return y.dot(q.u) < q.z.dot(q.u) - q.v ? 1 : 0;
    case WeakQuery::Kind::membership:
      throw std::invalid_argument("membership query needs a class label");
  }
  return 0;
}

inline Vec one_hot(int label, int m) {
  if (label < 0 || label >= m) throw std::out_of_range("label out of range");
  Vec e = Vec::Zero(m);
  e[label] = 1;
  return e;
}

inline int simulated_answer(int label, int m, const WeakQuery& q) {
  if (q.kind == WeakQuery::Kind::membership) return std::binary_search(q.set.begin(), q.set.end(), label) ? 1 : 0;
  return simulated_answer(one_hot(label, m), q);
}

using Oracle = std::function<int(const WeakQuery&)>;

struct QueryRecord {
  long t = 0;
  WeakQuery query;
  int bit = 0;
};

// ---- SGD steps ----
// Each rule is split into proposing a query and applying an answer so that a remote labeler can sit in between.

enum class Strategy { median, least_squares, passive_regression, passive_classification };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::median: return "median";
    case Strategy::least_squares: return "leastSquares";
    case Strategy::passive_regression: return "passiveRegression";
    case Strategy::passive_classification: return "passiveClassification";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  for (Strategy k : {Strategy::median, Strategy::least_squares, Strategy::passive_regression,
                     Strategy::passive_classification})
    if (s == strategy_name(k)) return k;
  throw std::invalid_argument("unknown strategy: " + s);
}

// Subgradient in f of inf_{y in S} |f - y| for S = [thr, inf) when bit = +1 and (-inf, thr) otherwise.
inline double half_line_subgradient(double f, double thr, int bit) {
  if (bit > 0) return f >= thr ? 0.0 : -1.0;
  return f < thr ? 0.0 : 1.0;
}

// Random nontrivial subset of {0..m-1}, each label kept with probability 1/2.
inline std::vector<int> balanced_random_set(int m, Rng& rng) {
  if (m < 2) throw std::invalid_argument("need at least two classes");
  for (;;) {
    std::vector<int> s;
    for (int c = 0; c < m; ++c)
      if (rng.bernoulli(0.5)) s.push_back(c);
    if (!s.empty() && static_cast<int>(s.size()) < m) return s;
  }
}

// Direction of the infimum-loss gradient for the observed set; empty when the residual vanishes.
inline Vec passive_classification_direction(const Vec& g, const std::vector<int>& s, double tol = 1e-12) {
  int best = s.front();
  for (int c : s)
    if (g[c] > g[best]) best = c;
  Vec r = g;
  r[best] -= 1.0;
  const double n = r.norm();
  if (n < tol) return Vec();
  return r / n;
}

inline bool answer_in_domain(const WeakQuery& q, int bit) {
  return q.kind == WeakQuery::Kind::halfspace ? (bit == 1 || bit == -1) : (bit == 0 || bit == 1);
}

// M is only read by the least-squares rule.
inline WeakQuery propose_query(Strategy s, const ActiveModel& model, const Vec& x, Rng& rng, double M = 1.0) {
  switch (s) {
    case Strategy::median: {
      const Vec k = model.features(x);
      Vec u = uniform_sphere(model.outputs(), rng);
      return WeakQuery::halfspace(model.iterate().transpose() * k, std::move(u));
    }
    case Strategy::least_squares: {
      if (!(M > 0)) throw std::invalid_argument("bound M must be > 0");
      const Vec k = model.features(x);
      Vec u = uniform_sphere(model.outputs(), rng);
      const double v = rng.uniform(0.0, 2.0 * M);
      return WeakQuery::shifted(model.iterate().transpose() * k, std::move(u), v);
    }
    case Strategy::passive_regression:
      if (model.outputs() != 1) throw std::invalid_argument("passive regression needs one output");
      return WeakQuery::halfspace(Vec::Constant(1, rng.normal()), Vec::Ones(1));
    case Strategy::passive_classification:
      return WeakQuery::membership(balanced_random_set(model.outputs(), rng));
  }
  throw std::logic_error("unknown strategy");
}

// Consumes one query: t advances even when the data term vanishes.
inline void apply_answer(Strategy s, ActiveModel& model, const Vec& x, const WeakQuery& q, int bit) {
  if (!answer_in_domain(q, bit)) {
    throw std::runtime_error(std::string(query_kind_name(q.kind)) + " answer out of domain: " + std::to_string(bit));
  }
  const Vec k = model.features(x);
  switch (s) {
    case Strategy::median:
      model.advance(k, q.u, bit);
      return;
    case Strategy::least_squares:
      model.advance(k, q.u, -static_cast<double>(bit));
      return;
    case Strategy::passive_regression: {
      const double f = (model.iterate().transpose() * k)[0];
      model.advance(k, Vec::Ones(1), -half_line_subgradient(f, q.z[0], bit));
      return;
    }
    case Strategy::passive_classification: {
      const int m = model.outputs();
      std::vector<int> set;
      if (bit == 1) {
        set = q.set;
      } else {
        for (int c = 0; c < m; ++c)
          if (!std::binary_search(q.set.begin(), q.set.end(), c)) set.push_back(c);
      }
      Vec dir = passive_classification_direction(model.iterate().transpose() * k, set);
      if (dir.size() == 0) model.advance(k, Vec::Zero(m), 0.0);
      else model.advance(k, dir, -1.0);
      return;
    }
  }
}

inline QueryRecord sgd_step(Strategy s, ActiveModel& model, const Vec& x, const Oracle& oracle, Rng& rng,
                            double M = 1.0) {
  QueryRecord rec;
  rec.query = propose_query(s, model, x, rng, M);
  rec.bit = oracle(rec.query);
  apply_answer(s, model, x, rec.query, rec.bit);
  rec.t = model.t();
  return rec;
}

// Median regression: U uniform on the sphere, eps = sign(<y - f(x), U>), a += gamma eps k(x) U^T.
inline QueryRecord median_sgd_step(ActiveModel& model, const Vec& x, const Oracle& oracle, Rng& rng) {
  return sgd_step(Strategy::median, model, x, oracle, rng);
}

// Least squares: V uniform on [0, 2M], bit = 1{<y, U> < <f(x), U> - V}, a -= gamma bit k(x) U^T.
inline QueryRecord leastsquares_sgd_step(ActiveModel& model, const Vec& x, double M, const Oracle& oracle, Rng& rng) {
  return sgd_step(Strategy::least_squares, model, x, oracle, rng, M);
}

// Passive regression: threshold U ~ N(0,1); the answer fixes a half-line S and the step follows the
// subgradient of inf_{y in S} |f(x) - y|.
inline QueryRecord passive_regression_step(ActiveModel& model, const Vec& x, const Oracle& oracle, Rng& rng) {
  return sgd_step(Strategy::passive_regression, model, x, oracle, rng);
}

// Random balanced set S; on a 0 answer S is replaced by its complement, then the step follows
// the normalized residual g(x) - e_{y*} with y* the best scored label of S.
inline QueryRecord passive_classification_step(ActiveModel& model, const Vec& x, const Oracle& oracle, Rng& rng) {
  return sgd_step(Strategy::passive_classification, model, x, oracle, rng);
}

// ---- constants ----

struct DirectionalConstants {
  int m = 1;
  double c2 = 0, c2_se = 0;
  double c1 = 0, c1_se = 0;  // for the bound M given at construction
  double M = 1;
  bool monte_carlo = false;
  long samples = 0;
};

// E|<U, e>| for U uniform on the unit sphere of R^m
inline double c2_closed_form(int m) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  return std::exp(std::lgamma(m / 2.0) - std::lgamma((m + 1) / 2.0)) / std::sqrt(M_PI);
}

// E[1{<e, U> >= V} <U, e>] with V uniform on [0, 2M]
inline double c1_closed_form(int m, double M) {
  if (!(M >= 0.5)) throw std::invalid_argument("c1 needs M >= 1/2 so that |<e,U>| <= 2M");
  return 1.0 / (4.0 * m * M);
}

// The expression printed next to the rate statement; kept for comparison only.
inline double c2_printed_formula(int m) {
  if (m < 2) return std::numeric_limits<double>::infinity();
  return std::sqrt(M_PI) * std::exp(std::lgamma((m - 1) / 2.0) - std::lgamma(m / 2.0)) / m;
}

inline DirectionalConstants directional_constants(int m, double M) {
  DirectionalConstants c;
  c.m = m;
  c.M = M;
  c.c2 = c2_closed_form(m);
  c.c1 = c1_closed_form(m, M);
  return c;
}

inline DirectionalConstants directional_constants(int m, double M, Rng& rng, long samples) {
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  DirectionalConstants c;
  c.m = m;
  c.M = M;
  c.monte_carlo = true;
  c.samples = samples;
  double s2 = 0, q2 = 0, s1 = 0, q1 = 0;
  for (long i = 0; i < samples; ++i) {
    const Vec u = uniform_sphere(m, rng);
    const double a = std::abs(u[0]);
    s2 += a, q2 += a * a;
    const double v = rng.uniform(0.0, 2.0 * M);
    const double b = u[0] >= v ? u[0] : 0.0;
    s1 += b, q1 += b * b;
  }
  const double n = static_cast<double>(samples);
  c.c2 = s2 / n;
  c.c2_se = std::sqrt(std::max(0.0, q2 / n - c.c2 * c.c2) / (n - 1));
  c.c1 = s1 / n;
  c.c1_se = std::sqrt(std::max(0.0, q1 / n - c.c1 * c.c1) / (n - 1));
  return c;
}

// Unbiased gradient from one bit: U uniform on the sphere, V uniform on [0, M_theta],
// bit = 1{<g, U> >= V}, output 2 d M_theta bit U. Requires |g| <= M_theta.
using GradientQuery = std::function<int(const Vec& u, double v)>;

inline double weak_gradient_scale(int dim, double M_theta) { return 2.0 * dim * M_theta; }

inline Vec generic_weak_gradient(int dim, double M_theta, const GradientQuery& query, Rng& rng) {
  if (!(M_theta > 0)) throw std::invalid_argument("gradient bound must be > 0");
  Vec u = uniform_sphere(dim, rng);
  const double v = rng.uniform(0.0, M_theta);
  const int bit = query(u, v);
  if (bit != 0 && bit != 1) throw std::runtime_error("gradient query answer must be 0 or 1");
  return bit ? Vec(weak_gradient_scale(dim, M_theta) * u) : Vec(Vec::Zero(dim));
}

// ---- median surrogate ----

inline int median_surrogate_classify(const Vec& scores) {
  int best = 0;
  for (int i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

inline double weighted_distance_sum(const Mat& P, const Vec& w, const Vec& z) {
  double s = 0;
  for (int i = 0; i < P.rows(); ++i) s += w[i] * (P.row(i).transpose() - z).norm();
  return s;
}

// Weiszfeld iterations with the vertex optimality test; rows of P are the points.
inline Vec geometric_median(const Mat& P, const Vec& w, int max_iters = 10000, double tol = 1e-13) {
  const int k = static_cast<int>(P.rows());
  if (k == 0 || w.size() != k) throw std::invalid_argument("points and weights mismatch");
  // a vertex is optimal when the pull of the others does not exceed its weight
  for (int j = 0; j < k; ++j) {
    Vec pull = Vec::Zero(P.cols());
    for (int i = 0; i < k; ++i) {
      if (i == j) continue;
      Vec d = P.row(i) - P.row(j);
      const double n = d.norm();
      if (n > 0) pull += w[i] * d / n;
    }
    if (pull.norm() <= w[j] * (1 + 1e-12)) return P.row(j).transpose();
  }
  Vec z = (P.transpose() * w) / w.sum();
  for (int it = 0; it < max_iters; ++it) {
    Vec num = Vec::Zero(P.cols());
    double den = 0;
    for (int i = 0; i < k; ++i) {
      const double n = (P.row(i).transpose() - z).norm();
      if (n == 0) return z;
      num += w[i] * P.row(i).transpose() / n;
      den += w[i] / n;
    }
    Vec next = num / den;
    const double step = (next - z).norm();
    z = next;
    if (step < tol) break;
  }
  return z;
}

// ---- streaming tasks ----

// x uniform on [0, 1], y = sin(2 pi x)
struct SinTask {
  static double target(double x) { return std::sin(2 * M_PI * x); }
  static double sample_x(Rng& rng) { return rng.uniform(0.0, 1.0); }
};

// x uniform on [0, 1], Bayes class floor(m x); with probability eps the label is redrawn uniformly.
struct ClassStream {
  int m = 10;
  double eps = 1.0 / 20;
  int bayes(double x) const { return std::min(m - 1, static_cast<int>(std::floor(m * x))); }
  int sample_label(double x, Rng& rng) const {
    if (rng.bernoulli(eps)) return static_cast<int>(rng.below(m));
    return bayes(x);
  }
  // expected 0-1 loss of predicting c at x
  double loss(int c, double x) const { return c == bayes(x) ? eps * (m - 1) / m : 1.0 - eps / m; }
};

inline Mat unit_grid(int n) {
  Mat g(n, 1);
  for (int i = 0; i < n; ++i) g(i, 0) = (i + 0.5) / n;
  return g;
}

inline double sin_risk(const ActiveModel& model, const Mat& grid) {
  Vec f = model.predict_rows(grid).col(0);
  double s = 0;
  for (int i = 0; i < grid.rows(); ++i) s += std::abs(f[i] - SinTask::target(grid(i, 0)));
  return s / grid.rows();
}

inline double class_risk(const ActiveModel& model, const ClassStream& task, const Mat& grid) {
  Mat S = model.predict_rows(grid);
  double s = 0;
  for (int i = 0; i < grid.rows(); ++i) s += task.loss(median_surrogate_classify(S.row(i).transpose()), grid(i, 0));
  return s / grid.rows();
}

struct SinComparator {
  Vec a;          // coefficients of a near-interpolating fit of the target
  double M = 0;   // |a|_2
  double kappa = 0;  // sup_x |k(x, anchors)|_2 over [0, 1]
  double floor = 0;  // mean |f_a - target| on the evaluation grid
};

// Ridge least squares of the target on a fine grid; the coefficient geometry is Euclidean, matching the update.
inline SinComparator sin_comparator(const GaussianKernel& k, const Mat& anchors, double ridge = 1e-8) {
  Mat G = unit_grid(2000);
  Mat K = k.gram(G, anchors);
  Vec y(G.rows());
  for (int i = 0; i < G.rows(); ++i) y[i] = SinTask::target(G(i, 0));
  const double n = static_cast<double>(G.rows());
  SinComparator c;
  c.a = (K.transpose() * K / n + ridge * Mat::Identity(K.cols(), K.cols())).ldlt().solve(K.transpose() * y / n);
  c.M = c.a.norm();
  c.kappa = K.rowwise().norm().maxCoeff();
  c.floor = (K * c.a - y).cwiseAbs().mean();
  return c;
}

// Constant step M / (kappa sqrt(T)) for a horizon T
inline StepSchedule theory_constant_step(double M, double kappa, long T) {
  if (!(M > 0) || !(kappa > 0) || T < 1) throw std::invalid_argument("invalid theory step inputs");
  return StepSchedule::constant(M / (kappa * std::sqrt(static_cast<double>(T))));
}

}  // namespace weaklearn
