#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "weaklearn/core.hpp"
#include "weaklearn/kernels.hpp"
#include "weaklearn/mfas.hpp"
#include "weaklearn/partial.hpp"
#include "weaklearn/simplex.hpp"

namespace weaklearn {

using SparseRowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// A(i, j) = alpha_j(x_i), rows from the weighting scheme evaluated at the training inputs
inline SparseRowMat training_weights(const WeightingScheme& w) {
  const Mat& X = w.inputs();
  const auto n = X.rows();
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < n; ++i)
    for (auto [j, v] : w.sparse_at(X.row(i).transpose()))
      if (v != 0.0) trip.emplace_back(static_cast<int>(i), j, v);
  SparseRowMat A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

struct DisambiguationProblem {
  SparseRowMat A;
  std::vector<ConstraintSet> sets;
  LossSpec loss;

  DisambiguationProblem(SparseRowMat A_, std::vector<ConstraintSet> s, LossSpec l)
      : A(std::move(A_)), sets(std::move(s)), loss(std::move(l)) {
    if (A.rows() != A.cols() || A.rows() != static_cast<Eigen::Index>(sets.size()))
      throw std::invalid_argument("weights matrix must be n x n with one set per row");
    if (sets.empty()) throw std::invalid_argument("empty problem");
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseRowMat::InnerIterator it(A, k); it; ++it)
        if (!std::isfinite(it.value())) throw std::invalid_argument("non-finite weight");
  }
  DisambiguationProblem(const WeightingScheme& w, std::vector<ConstraintSet> s, LossSpec l)
      : DisambiguationProblem(training_weights(w), std::move(s), std::move(l)) {}

  int n() const { return static_cast<int>(sets.size()); }
};

template <class Y>
struct DisambiguatedLabels {
  std::vector<Y> labels;
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

// -------------------------------------------------------------- initialization

namespace detail {

inline std::vector<int> tied_minimizers(const Vec& r, double tol_rel = 1e-12) {
  const double mn = r.minCoeff();
  const double tol = tol_rel * (1.0 + std::abs(mn));
  std::vector<int> out;
  for (int k = 0; k < r.size(); ++k)
    if (r[k] <= mn + tol) out.push_back(k);
  return out;
}

// signed q, sum 1, whose loss profile L q is flat on S and strictly higher off S
inline bool flat_profile_lp(const Mat& L, const std::vector<int>& S, Vec& q) {
  const int K = static_cast<int>(L.rows());
  std::vector<char> in(K, 0);
  for (int y : S) in[y] = 1;
  const int nv = 2 * K + 4;  // q+, q-, t+, t-, d+, d-
  const int T = 2 * K, D = 2 * K + 2;
  std::vector<Vec> rows;
  std::vector<double> rhs;
  auto row = [&] { return Vec::Zero(nv).eval(); };
  {
    Vec r = row();
    r.head(K).setOnes();
    r.segment(K, K).setConstant(-1.0);
    rows.push_back(r), rhs.push_back(1.0);
    rows.push_back(-r), rhs.push_back(-1.0);
  }
  for (int z = 0; z < K; ++z) {
    Vec r = row();
    r.head(K) = L.row(z).transpose();
    r.segment(K, K) = -L.row(z).transpose();
    r[T] = -1.0, r[T + 1] = 1.0;
    if (in[z]) {
      rows.push_back(r), rhs.push_back(0.0);
      rows.push_back(-r), rhs.push_back(0.0);
    } else {
      r = -r;
      r[D] = 1.0, r[D + 1] = -1.0;
      rows.push_back(r), rhs.push_back(0.0);
    }
  }
  for (int k = 0; k < 2 * K; ++k) {
    Vec r = row();
    r[k] = 1.0;
    rows.push_back(r), rhs.push_back(2.0);
  }
  {
    Vec r = row();
    r[D] = 1.0;
    rows.push_back(r), rhs.push_back(1.0);
    r = row();
    r[D + 1] = 1.0;
    rows.push_back(r), rhs.push_back(1.0);
  }
  Mat A(static_cast<Eigen::Index>(rows.size()), nv);
  Vec b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) A.row(static_cast<Eigen::Index>(k)) = rows[k].transpose(), b[k] = rhs[k];
  Vec c = Vec::Zero(nv);
  c[D] = -1.0, c[D + 1] = 1.0;
  auto res = solve_lp_min(A, b, c);
  if (res.status != LpResult::Status::optimal) return false;
  const double delta = res.x[D] - res.x[D + 1];
  if (static_cast<int>(S.size()) < K && delta <= 1e-9) return false;
  q = res.x.head(K) - res.x.segment(K, K);
  return true;
}

}  // namespace detail

// Label distribution behind the initial xi of a finite set: uniform on S when that makes S the set of
// minimizers of z -> (L q)_z, otherwise a signed distribution found by LP with the same property.
inline Vec init_distribution(const ConstraintSet& s, const LossSpec& loss) {
  if (!loss.finite() || loss.kind() == LossSpec::Kind::kendall)
    throw std::invalid_argument("distribution initialization needs a finite, enumerated loss");
  if (s.kind() == ConstraintSet::Kind::box || s.kind() == ConstraintSet::Kind::halfspaceHistory)
    throw std::invalid_argument("unsupported set kind for initialization");
  auto S = enumerate_set(s, loss);
  if (S.empty()) throw std::invalid_argument("empty constraint set");
  const int K = loss.size();
  Vec q = Vec::Zero(K);
  for (int y : S) q[y] = 1.0 / static_cast<double>(S.size());
  Mat L = loss.table();
  if (detail::tied_minimizers(L * q) == S) return q;
  Vec alt;
  if (detail::flat_profile_lp(L, S, alt)) return alt;
  return q;
}

inline Vec init_xi(const ConstraintSet& s, const LossSpec& loss) {
  if (loss.kind() == LossSpec::Kind::kendall) {
    const int m = loss.m();
    Vec xi(num_pairs(m) + 1);
    xi.head(num_pairs(m)) = kendall_observed(s, m);
    xi[num_pairs(m)] = 1.0;
    return xi;
  }
  return loss.embedding().phi.transpose() * init_distribution(s, loss);
}

// ------------------------------------------------------- alternate minimization

// Ties in either step are kept as the average of the tied vertices, which stays optimal for the
// linear sub-problem and lets information spread through regions where nothing is decided yet.
inline DisambiguatedLabels<int> disambiguate_altmin(const DisambiguationProblem& p, int max_iters = 100) {
  const auto& loss = p.loss;
  if (!loss.finite()) throw std::invalid_argument("finite loss expected");
  if (loss.kind() == LossSpec::Kind::kendall && loss.size() > 720)
    throw std::invalid_argument("use disambiguate_rankings for large permutation spaces");
  const int n = p.n(), K = loss.size();
  Mat L = loss.table();
  std::vector<std::vector<int>> members(n);
  Mat Q(K, n);
  for (int j = 0; j < n; ++j) {
    members[j] = enumerate_set(p.sets[j], loss);
    Q.col(j) = init_distribution(p.sets[j], loss);
  }
  SparseRowMat At = p.A.transpose();
  DisambiguatedLabels<int> out;
  Mat Z(K, n);
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    // z-step: risk of each z at every x_i against the current xi
    Mat RT = p.A * (L * Q).transpose();  // n x K
    Z.setZero();
    for (int i = 0; i < n; ++i) {
      auto tie = detail::tied_minimizers(RT.row(i).transpose());
      for (int z : tie) Z(z, i) = 1.0 / static_cast<double>(tie.size());
    }
    // y-step: cost of each candidate y for sample j
    Mat CT = At * (L.transpose() * Z).transpose();  // n x K
    Mat Qn = Mat::Zero(K, n);
    double obj = 0.0;
    for (int j = 0; j < n; ++j) {
      Vec c(members[j].size());
      for (std::size_t k = 0; k < members[j].size(); ++k) c[static_cast<Eigen::Index>(k)] = CT(j, members[j][k]);
      auto tie = detail::tied_minimizers(c);
      for (int k : tie) Qn(members[j][k], j) = 1.0 / static_cast<double>(tie.size());
      obj += c[tie.front()];
    }
    out.objective.push_back(obj);
    out.iterations = it + 1;
    const bool same = (Qn - Q).cwiseAbs().maxCoeff() <= 1e-14;
    Q = std::move(Qn);
    if (same) {
      out.converged = true;
      break;
    }
  }
  out.labels.resize(n);
  for (int j = 0; j < n; ++j) {
    int best = members[j].front();
    for (int y : members[j])
      if (Q(y, j) > Q(best, j)) best = y;
    out.labels[j] = best;
  }
  return out;
}

// objective sum_ij A_ij l(y_i, y_j) of a complete labelling
inline double disambiguation_objective(const DisambiguationProblem& p, const std::vector<int>& y) {
  Mat L = p.loss.table();
  double v = 0.0;
  for (int k = 0; k < p.A.outerSize(); ++k)
    for (SparseRowMat::InnerIterator it(p.A, k); it; ++it) v += it.value() * L(y[it.row()], y[it.col()]);
  return v;
}

// ----------------------------------------------------------------- rankings

inline DisambiguatedLabels<Perm> disambiguate_rankings(const DisambiguationProblem& p, int max_iters = 50,
                                                       PartialConfig::MfasSolver solver = PartialConfig::MfasSolver::lp) {
  if (p.loss.kind() != LossSpec::Kind::kendall) throw std::invalid_argument("kendall loss expected");
  const int n = p.n(), m = p.loss.m(), E = num_pairs(m);
  const double C = E;
  Mat Xi(E, n), Ph(E, n);
  for (int j = 0; j < n; ++j) Xi.col(j) = kendall_observed(p.sets[j], m);
  SparseRowMat At = p.A.transpose();
  std::vector<Perm> z(n), y(n);
  DisambiguatedLabels<Perm> out;
  auto objective = [&] {
    Mat G = p.A * Xi.transpose();  // n x E, row i = sum_j A_ij xi_j
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += C * p.A.row(i).sum() - Ph.col(i).dot(G.row(i).transpose());
    return v;
  };
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    bool changed = false;
    Mat G = p.A * Xi.transpose();
    for (int i = 0; i < n; ++i) {
      MfasInstance inst(m, -G.row(i).transpose());
      Perm cand = solve_mfas(inst, solver).sigma;
      if (z[i].empty() || inst.objective(cand) < inst.objective(z[i]) - 1e-12) {
        changed = changed || z[i] != cand;
        z[i] = cand;
      }
      Ph.col(i) = embed_kendall(z[i]);
    }
    Mat H = At * Ph.transpose();  // n x E, row j = sum_i A_ij phi(z_i)
    for (int j = 0; j < n; ++j) {
      MfasInstance inst(m, -H.row(j).transpose(), p.sets[j]);
      Perm cand = solve_mfas(inst, solver).sigma;
      if (y[j].empty() || inst.objective(cand) < inst.objective(y[j]) - 1e-12) {
        changed = changed || y[j] != cand;
        y[j] = cand;
        Xi.col(j) = embed_kendall(cand);
      }
    }
    out.objective.push_back(objective());
    out.iterations = it + 1;
    if (!changed && it > 0) {
      out.converged = true;
      break;
    }
  }
  out.labels = y;
  return out;
}

// --------------------------------------------------------- interval regression

// squared loss on the reals; z and y restricted to [lo, hi]
inline DisambiguatedLabels<double> disambiguate_intervals(const DisambiguationProblem& p, double lo = -6.0, double hi = 6.0,
                                                          int max_iters = 1000, double eps = 1e-6) {
  const int n = p.n();
  Vec y(n), z(n);
  for (int j = 0; j < n; ++j) {
    const auto& s = p.sets[j];
    if (s.kind() != ConstraintSet::Kind::box || s.box_list().front().lower.size() != 1)
      throw std::invalid_argument("one dimensional interval constraints expected");
    Vec c = s.bounded() ? s.center() : Vec::Constant(1, std::clamp(0.0, lo, hi));
    y[j] = std::clamp(c[0], lo, hi);
    if (!s.bounded()) {
      // half-line: start at its finite end
      const auto& b = s.box_list().front();
      y[j] = std::clamp(std::isfinite(b.lower[0]) ? b.lower[0] : b.upper[0], lo, hi);
    }
  }
  // minimizer of w*(v - t)^2 + const over [a, b] for signed total weight w and weighted mean t
  auto quad_min = [](double w, double t, double a, double b) {
    if (w > 0) return std::clamp(t, a, b);
    if (w < 0) return std::abs(a - t) >= std::abs(b - t) ? a : b;
    return a;
  };
  auto best_in_set = [&](const ConstraintSet& s, double w, double t) {
    double best = 0.0, bv = std::numeric_limits<double>::infinity();
    for (const auto& b : s.box_list()) {
      double a0 = std::max(b.lower[0], lo), b0 = std::min(b.upper[0], hi);
      if (a0 > b0) continue;
      double v = quad_min(w, t, a0, b0);
      double f = w * (v - t) * (v - t);
      if (f < bv) bv = f, best = v;
    }
    if (!std::isfinite(bv)) throw std::invalid_argument("constraint outside the search interval");
    return best;
  };
  SparseRowMat At = p.A.transpose();
  Vec rowsum = p.A * Vec::Ones(n), colsum = At * Vec::Ones(n);
  DisambiguatedLabels<double> out;
  auto objective = [&] {
    double v = 0.0;
    for (int k = 0; k < p.A.outerSize(); ++k)
      for (SparseRowMat::InnerIterator it(p.A, k); it; ++it) v += it.value() * std::pow(z[it.row()] - y[it.col()], 2);
    return v;
  };
  for (int it = 0; it < max_iters; ++it) {
    Vec ay = p.A * y;
    for (int i = 0; i < n; ++i) {
      const double w = rowsum[i];
      z[i] = quad_min(w, w != 0 ? ay[i] / w : 0.0, lo, hi);
    }
    Vec az = At * z;
    Vec ynew(n);
    for (int j = 0; j < n; ++j) {
      const double w = colsum[j];
      ynew[j] = best_in_set(p.sets[j], w, w != 0 ? az[j] / w : 0.0);
    }
    const double moved = (ynew - y).cwiseAbs().sum();
    y = ynew;
    out.objective.push_back(objective());
    out.iterations = it + 1;
    if (moved < eps) {
      out.converged = true;
      break;
    }
  }
  out.labels.assign(y.data(), y.data() + n);
  return out;
}

// ------------------------------------------------------------------ IQP

// l(y, z) = psi(y).psi(z) - phi(y).phi(z) with ||psi(y)|| = ||phi(y)|| = c for every y
struct QuadraticDecomposition {
  Mat psi, phi;  // rows are labels
  double c = 0.0;
};

inline QuadraticDecomposition quadratic_decomposition(const Mat& L) {
  const auto K = L.rows();
  if (L.cols() != K) throw std::invalid_argument("square loss table expected");
  if ((L - L.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + L.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("quadratic decomposition needs a symmetric loss");
  if (L.diagonal().cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("quadratic decomposition needs a proper loss");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (L + L.transpose()));
  const Vec& lam = es.eigenvalues();
  const Mat& U = es.eigenvectors();
  Mat P = U * lam.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Mat N = U * (-lam).cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const double C = lam.cwiseAbs().maxCoeff();
  QuadraticDecomposition d;
  d.psi = Mat::Zero(K, 2 * K);
  d.phi = Mat::Zero(K, 2 * K);
  d.psi.leftCols(K) = P;
  d.phi.leftCols(K) = N;
  for (Eigen::Index y = 0; y < K; ++y) {
    // norms of P and N rows agree since l(y, y) = 0; pad both the same way
    const double pad = std::sqrt(std::max(0.0, C - P.row(y).squaredNorm()));
    d.psi(y, K + y) = pad;
    d.phi(y, K + y) = pad;
  }
  d.c = std::sqrt(C);
  return d;
}

// Euclidean projection onto the probability simplex
inline Vec project_simplex(const Vec& v) {
  const auto k = v.size();
  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index r = 0; r < k; ++r) {
    cum += u[r];
    const double t = (cum - 1.0) / static_cast<double>(r + 1);
    if (u[r] - t > 0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

// spectral norm of a symmetric sparse matrix by power iteration
inline double symmetric_norm(const SparseRowMat& S, int iters = 200) {
  const auto n = S.rows();
  Rng rng(0x5eed);
  Vec v = rng.normal_vector(static_cast<int>(n));
  v.normalize();
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec w = S * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    est = nw;
    v = w / nw;
  }
  return est;
}

struct IqpResult : DisambiguatedLabels<int> {
  std::vector<double> relaxed;  // convexified objective per gradient step
};

inline IqpResult disambiguate_iqp(const DisambiguationProblem& p, int max_iters = 200) {
  const auto& loss = p.loss;
  if (!loss.finite()) throw std::invalid_argument("finite loss expected");
  const int n = p.n(), K = loss.size();
  auto dec = quadratic_decomposition(loss.table());
  SparseRowMat As = 0.5 * (SparseRowMat(p.A) + SparseRowMat(p.A.transpose()));
  // slight over-estimate keeps both blocks of B positive semidefinite despite power iteration
  const double s = 1.01 * symmetric_norm(As);
  Mat V(K, dec.psi.cols() + dec.phi.cols());
  V << dec.psi, dec.phi;
  const double sv = Eigen::JacobiSVD<Mat>(V).singularValues()[0];
  const double lip = 2.0 * (2.0 * s) * sv * sv;
  std::vector<std::vector<int>> members(n);
  std::vector<Vec> q(n);
  for (int i = 0; i < n; ++i) {
    members[i] = enumerate_set(p.sets[i], loss);
    q[i] = Vec::Constant(static_cast<Eigen::Index>(members[i].size()), 1.0 / static_cast<double>(members[i].size()));
  }
  const auto dpsi = dec.psi.cols();
  auto embed = [&](Mat& Psi, Mat& Phi) {
    Psi.setZero(n, dpsi);
    Phi.setZero(n, dpsi);
    for (int i = 0; i < n; ++i)
      for (std::size_t k = 0; k < members[i].size(); ++k) {
        Psi.row(i) += q[i][static_cast<Eigen::Index>(k)] * dec.psi.row(members[i][k]);
        Phi.row(i) += q[i][static_cast<Eigen::Index>(k)] * dec.phi.row(members[i][k]);
      }
  };
  IqpResult out;
  Mat Psi, Phi;
  embed(Psi, Phi);
  auto relaxed_value = [&](const Mat& GPsi, const Mat& GPhi) {
    // f = tr((sI + A) Psi Psi^T) + tr((sI - A) Phi Phi^T) = 0.5 <grad, X>
    return 0.5 * ((GPsi.array() * Psi.array()).sum() + (GPhi.array() * Phi.array()).sum());
  };
  for (int it = 0; it < max_iters; ++it) {
    Mat GPsi = 2.0 * (s * Psi + As * Psi);
    Mat GPhi = 2.0 * (s * Phi - As * Phi);
    out.relaxed.push_back(relaxed_value(GPsi, GPhi));
    double moved = 0.0;
    for (int i = 0; i < n; ++i) {
      if (members[i].size() == 1) continue;
      Vec g(q[i].size());
      for (std::size_t k = 0; k < members[i].size(); ++k)
        g[static_cast<Eigen::Index>(k)] = dec.psi.row(members[i][k]).dot(GPsi.row(i)) + dec.phi.row(members[i][k]).dot(GPhi.row(i));
      Vec nq = project_simplex(q[i] - g / lip);
      moved += (nq - q[i]).cwiseAbs().sum();
      q[i] = nq;
    }
    embed(Psi, Phi);
    out.iterations = it + 1;
    if (moved < 1e-12) {
      out.converged = true;
      break;
    }
  }
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    // nearest vertex; all vertices share one norm, so the largest inner product wins
    int best = members[i].front();
    double bv = -std::numeric_limits<double>::infinity();
    for (int y : members[i]) {
      const double v = dec.psi.row(y).dot(Psi.row(i)) + dec.phi.row(y).dot(Phi.row(i));
      if (v > bv + 1e-12) bv = v, best = y;
    }
    out.labels[i] = best;
  }
  out.objective.push_back(disambiguation_objective(p, out.labels));
  return out;
}

// ------------------------------------------------------ supervised inference

inline int supervised_inference(const Vec& alpha, const LossSpec& loss, const std::vector<int>& labels) {
  if (alpha.size() != static_cast<Eigen::Index>(labels.size())) throw std::invalid_argument("weights and labels differ in length");
  Mat L = loss.table();
  Vec risk = Vec::Zero(L.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) risk += alpha[static_cast<Eigen::Index>(i)] * L.col(labels[i]);
  int best = 0;
  for (int z = 1; z < risk.size(); ++z)
    if (risk[z] < risk[best]) best = z;
  return best;
}

inline Perm supervised_inference(const Vec& alpha, const LossSpec& loss, const std::vector<Perm>& labels,
                                 PartialConfig::MfasSolver solver = PartialConfig::MfasSolver::lp) {
  const int m = loss.m();
  Vec g = Vec::Zero(num_pairs(m));
  for (std::size_t i = 0; i < labels.size(); ++i) g += alpha[static_cast<Eigen::Index>(i)] * embed_kendall(labels[i]);
  return solve_mfas(MfasInstance(m, -g), solver).sigma;
}

// squared loss over a uniform grid of the search interval
inline double supervised_inference(const Vec& alpha, const std::vector<double>& labels, double lo = -6.0, double hi = 6.0,
                                   int points = 1000) {
  RegressionGrid grid{lo, hi, points};
  Vec r(points);
  for (int g = 0; g < points; ++g) {
    double v = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) v += alpha[static_cast<Eigen::Index>(i)] * std::pow(grid.at(g) - labels[i], 2);
    r[g] = v;
  }
  return grid.at(grid_argmin(r));
}

// rows of Q, finite labels
inline std::vector<int> supervised_inference_batch(const WeightingScheme& w, const LossSpec& loss, const std::vector<int>& labels,
                                                   const Mat& Q) {
  const int K = loss.size();
  Mat Y = Mat::Zero(static_cast<Eigen::Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i) Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  Mat R = (w.at_rows(Q) * Y) * loss.table().transpose();
  std::vector<int> out(Q.rows());
  for (Eigen::Index q = 0; q < Q.rows(); ++q) {
    Eigen::Index best = 0;
    for (Eigen::Index z = 1; z < K; ++z)
      if (R(q, z) < R(q, best)) best = z;
    out[q] = static_cast<int>(best);
  }
  return out;
}

}  // namespace weaklearn
