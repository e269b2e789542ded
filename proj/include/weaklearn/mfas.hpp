#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/core.hpp"
#include "weaklearn/simplex.hpp"

namespace weaklearn {

struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// minimize sum_{i<j} c_ij sign(sigma(i) - sigma(j)) over sigma compatible with `fixed`
struct MfasInstance {
  int m = 2;
  Vec c;
  ConstraintSet fixed = ConstraintSet::kendall_partial(ConstraintSet::PairMap{});

  MfasInstance() = default;
  MfasInstance(int m_, Vec c_, ConstraintSet fixed_ = ConstraintSet::kendall_partial(ConstraintSet::PairMap{}))
      : m(m_), c(std::move(c_)), fixed(std::move(fixed_)) {
    if (m < 2) throw std::invalid_argument("MFAS needs m >= 2");
    if (c.size() != num_pairs(m)) throw std::invalid_argument("objective length must be m(m-1)/2");
    if (fixed.kind() == ConstraintSet::Kind::full) fixed = ConstraintSet::kendall_partial(ConstraintSet::PairMap{});
    if (fixed.kind() != ConstraintSet::Kind::kendallPartial) throw std::invalid_argument("MFAS constraints are kendall coordinates");
    for (auto [k, v] : fixed.fixed_pairs())
      if (k.second >= m) throw std::invalid_argument("fixed pair outside [m]");
  }

  double objective(const Perm& sigma) const { return c.dot(embed_kendall(sigma)); }
  bool feasible(const Perm& sigma) const { return fixed.contains(sigma); }
};

struct MfasSolution {
  Perm sigma;
  double objective = 0.0;
};

struct MfasLpSolution {
  Vec x;          // relaxed pair vector in [-1, 1]
  double value;   // c . x, a lower bound on the discrete optimum
  Perm sigma;     // exact vertex or row-sum rounding
  double objective;
  bool exact;
};

inline MfasSolution solve_brute(const MfasInstance& inst) {
  if (inst.m > 9) throw std::invalid_argument("brute force limited to m <= 9");
  Perm p(inst.m);
  std::iota(p.begin(), p.end(), 0);
  MfasSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  do {
    if (!inst.feasible(p)) continue;
    double v = inst.objective(p);
    if (v < best.objective) best = {p, v};
  } while (std::next_permutation(p.begin(), p.end()));
  if (best.sigma.empty()) throw InfeasibleError("fixed coordinates admit no permutation");
  return best;
}

// transitivity rows over triples i<j<k: -1 <= x_ij + x_jk - x_ik <= 1
struct TransitivityLP {
  int m;
  Mat rows;  // C(m,3) x E, coefficients of x_ij + x_jk - x_ik

  explicit TransitivityLP(int m_) : m(m_) {
    const int E = num_pairs(m);
    int t = 0;
    rows = Mat::Zero(m * (m - 1) * (m - 2) / 6, E);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        for (int k = j + 1; k < m; ++k, ++t) {
          rows(t, pair_index(m, i, j)) = 1.0;
          rows(t, pair_index(m, j, k)) = 1.0;
          rows(t, pair_index(m, i, k)) = -1.0;
        }
  }
};

// order items by the row sums of the antisymmetric extension of x
inline Perm rowsum_rounding(const Vec& x, int m) {
  Vec s = Vec::Zero(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      double v = x[pair_index(m, i, j)];
      s[i] += v;
      s[j] -= v;
    }
  return ranks_from_scores(s);
}

inline MfasLpSolution solve_lp(const MfasInstance& inst) {
  const int m = inst.m, E = num_pairs(m);
  // free coordinates after substituting the fixed ones; y = x + 1 in [0, 2]
  std::vector<int> free_idx, col(E, -1);
  Vec xfix = Vec::Zero(E);
  const auto pairs = pair_list(m);
  for (int e = 0; e < E; ++e) {
    auto [i, j] = pairs[e];
    int v = inst.fixed.pair_sign(i, j);
    if (v != 0) xfix[e] = v;
    else {
      col[e] = static_cast<int>(free_idx.size());
      free_idx.push_back(e);
    }
  }
  const int F = static_cast<int>(free_idx.size());
  TransitivityLP tl(m);
  const int R = static_cast<int>(tl.rows.rows());
  Mat A = Mat::Zero(2 * R + F, F);
  Vec b(2 * R + F);
  for (int r = 0; r < R; ++r) {
    // t = sum coef * x = sum_free coef * (y - 1) + sum_fixed coef * xfix
    double shift = 0.0;
    for (int e = 0; e < E; ++e) {
      const double a = tl.rows(r, e);
      if (a == 0.0) continue;
      if (col[e] >= 0) {
        A(r, col[e]) = a;
        A(R + r, col[e]) = -a;
        shift -= a;
      } else {
        shift += a * xfix[e];
      }
    }
    b[r] = 1.0 - shift;       // t <= 1
    b[R + r] = 1.0 + shift;   // -t <= 1
  }
  for (int f = 0; f < F; ++f) {
    A(2 * R + f, f) = 1.0;
    b[2 * R + f] = 2.0;
  }
  Vec cf(F);
  for (int f = 0; f < F; ++f) cf[f] = inst.c[free_idx[f]];

  MfasLpSolution out;
  out.x = xfix;
  if (F > 0) {
    LpResult r = solve_lp_min(A, b, cf);
    if (r.status != LpResult::Status::optimal) throw InfeasibleError("transitivity LP infeasible for the fixed coordinates");
    for (int f = 0; f < F; ++f) out.x[free_idx[f]] = std::clamp(r.x[f] - 1.0, -1.0, 1.0);
  } else if (!inst.fixed.fixed_pairs().empty()) {
    // everything fixed: check transitivity directly
    Vec t = tl.rows * xfix;
    if ((t.array().abs() > 1.0 + 1e-9).any()) throw InfeasibleError("fixed coordinates are not transitive");
  }
  out.value = inst.c.dot(out.x);
  out.exact = (out.x.array().abs() >= 1.0 - 1e-7).all();
  if (out.exact) {
    Vec s = out.x.unaryExpr([](double v) { return v > 0 ? 1.0 : -1.0; });
    out.sigma = perm_from_embedding(s, m);
  } else {
    out.sigma = rowsum_rounding(out.x, m);
  }
  out.objective = inst.objective(out.sigma);
  return out;
}

namespace detail {

// transitive closure of the fixed pairs: above[i][j] true when i must rank above j
inline std::vector<std::vector<char>> forced_order(const MfasInstance& inst) {
  const int m = inst.m;
  std::vector<std::vector<char>> above(m, std::vector<char>(m, 0));
  for (auto [k, v] : inst.fixed.fixed_pairs()) {
    if (v > 0) above[k.first][k.second] = 1;
    else above[k.second][k.first] = 1;
  }
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      if (above[i][k])
        for (int j = 0; j < m; ++j)
          if (above[k][j]) above[i][j] = 1;
  for (int i = 0; i < m; ++i)
    if (above[i][i]) throw InfeasibleError("fixed coordinates contain a cycle");
  return above;
}

inline double pair_cost(const MfasInstance& inst, int a, int b) {
  // contribution of "a above b"
  return a < b ? inst.c[pair_index(inst.m, a, b)] : -inst.c[pair_index(inst.m, b, a)];
}

}  // namespace detail

namespace detail {

// bottom-up order: repeatedly place the lowest-scored item whose forced-below items are placed
inline std::vector<int> greedy_order(const Vec& score, const std::vector<std::vector<char>>& above) {
  const int m = static_cast<int>(score.size());
  std::vector<int> order;
  std::vector<char> placed(m, 0);
  for (int r = 0; r < m; ++r) {
    int pick = -1;
    for (int i = 0; i < m; ++i) {
      if (placed[i]) continue;
      bool ready = true;
      for (int j = 0; j < m && ready; ++j)
        if (!placed[j] && above[i][j]) ready = false;
      if (ready && (pick < 0 || score[i] < score[pick])) pick = i;
    }
    placed[pick] = 1;
    order.push_back(pick);
  }
  return order;
}

// best-insertion local search; each accepted move strictly lowers the objective
inline void insertion_search(const MfasInstance& inst, const std::vector<std::vector<char>>& above,
                             std::vector<int>& order) {
  const int m = inst.m;
  bool improved = true;
  while (improved) {
    improved = false;
    for (int a = 0; a < m; ++a) {
      const int it = order[a];
      double best = -1e-12, delta = 0.0;
      int target = -1;
      for (int b = a + 1; b < m; ++b) {
        const int o = order[b];
        if (above[o][it]) break;
        delta += pair_cost(inst, it, o) - pair_cost(inst, o, it);
        if (delta < best) best = delta, target = b;
      }
      delta = 0.0;
      for (int b = a - 1; b >= 0; --b) {
        const int o = order[b];
        if (above[it][o]) break;
        delta += pair_cost(inst, o, it) - pair_cost(inst, it, o);
        if (delta < best) best = delta, target = b;
      }
      if (target >= 0) {
        order.erase(order.begin() + a);
        order.insert(order.begin() + target, it);
        improved = true;
      }
    }
  }
}

inline Perm order_to_perm(const std::vector<int>& order) {
  Perm s(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) s[order[r]] = static_cast<int>(r);
  return s;
}

}  // namespace detail

// Pairwise-comparison sort under the forced order, refined by insertion moves.
// Two starts: net pairwise preference and count of pairwise wins.
inline MfasSolution solve_heuristic(const MfasInstance& inst, Perm* initial = nullptr) {
  const int m = inst.m;
  auto above = detail::forced_order(inst);
  Vec net = Vec::Zero(m), wins = Vec::Zero(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const double pref = detail::pair_cost(inst, j, i) - detail::pair_cost(inst, i, j);
      net[i] += pref;
      wins[i] += pref > 0 ? 1.0 : (pref == 0 ? 0.5 : 0.0);
    }
  MfasSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  bool first = true;
  for (const Vec* score : {&net, &wins}) {
    auto order = detail::greedy_order(*score, above);
    if (first && initial) *initial = detail::order_to_perm(order);
    first = false;
    detail::insertion_search(inst, above, order);
    Perm sigma = detail::order_to_perm(order);
    double v = inst.objective(sigma);
    if (v < best.objective) best = {sigma, v};
  }
  return best;
}

}  // namespace weaklearn
