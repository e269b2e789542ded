#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "weaklearn/rng.hpp"

namespace weaklearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// rank vector: perm[i] is the rank of item i, higher is preferred
using Perm = std::vector<int>;

struct OutputSpace {
  enum class Kind { classes, multilabel, permutations, reals };
  Kind kind = Kind::classes;
  int m = 1;
  std::vector<std::string> names;

  static OutputSpace classes(int m, std::vector<std::string> names = {}) {
    return make(Kind::classes, m, std::move(names));
  }
  static OutputSpace multilabel(int m) { return make(Kind::multilabel, m, {}); }
  static OutputSpace permutations(int m) { return make(Kind::permutations, m, {}); }
  static OutputSpace reals(int m) { return make(Kind::reals, m, {}); }

  bool finite() const { return kind != Kind::reals; }

  // number of labels of a finite space
  std::size_t size() const {
    switch (kind) {
      case Kind::classes: return static_cast<std::size_t>(m);
      case Kind::multilabel: return std::size_t{1} << m;
      case Kind::permutations: {
        std::size_t f = 1;
        for (int i = 2; i <= m; ++i) f *= static_cast<std::size_t>(i);
        return f;
      }
      case Kind::reals: break;
    }
    throw std::invalid_argument("output space is not finite");
  }

  int id(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument("unknown label name: " + name);
    return static_cast<int>(it - names.begin());
  }

 private:
  static OutputSpace make(Kind k, int m, std::vector<std::string> names) {
    if (m < 1) throw std::invalid_argument("output dimension must be >= 1");
    if (k == Kind::permutations && m < 2) throw std::invalid_argument("permutations need m >= 2");
    if (k == Kind::multilabel && m > 62) throw std::invalid_argument("multilabel limited to 62 tags");
    if (!names.empty() && static_cast<int>(names.size()) != m)
      throw std::invalid_argument("name table size differs from m");
    OutputSpace s;
    s.kind = k;
    s.m = m;
    s.names = std::move(names);
    return s;
  }
};

// ---------------------------------------------------------------- pairs

inline int num_pairs(int m) { return m * (m - 1) / 2; }

// lexicographic index of the pair (i, j), i < j
inline int pair_index(int m, int i, int j) {
  if (i < 0 || j >= m || i >= j) throw std::out_of_range("pair index needs 0 <= i < j < m");
  return i * (2 * m - i - 1) / 2 + (j - i - 1);
}

inline std::vector<std::pair<int, int>> pair_list(int m) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(num_pairs(m)));
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) out.emplace_back(i, j);
  return out;
}

inline bool is_permutation(const Perm& sigma) {
  std::vector<char> seen(sigma.size(), 0);
  for (int r : sigma) {
    if (r < 0 || r >= static_cast<int>(sigma.size()) || seen[r]) return false;
    seen[r] = 1;
  }
  return true;
}

inline Vec embed_kendall(const Perm& sigma) {
  if (!is_permutation(sigma)) throw std::invalid_argument("embed_kendall: not a permutation");
  const int m = static_cast<int>(sigma.size());
  Vec phi(num_pairs(m));
  int e = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) phi[e++] = sigma[i] > sigma[j] ? 1.0 : -1.0;
  return phi;
}

// rank vector recovered from a ±1 pair vector that is a valid embedding
inline Perm perm_from_embedding(const Vec& x, int m) {
  Perm sigma(m, 0);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      if (x[pair_index(m, i, j)] > 0) ++sigma[i];
      else ++sigma[j];
    }
  if (!is_permutation(sigma)) throw std::invalid_argument("pair vector is not transitive");
  return sigma;
}

// ranks by ascending score; equal scores broken by item index
inline Perm ranks_from_scores(const Vec& s) {
  const int m = static_cast<int>(s.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] < s[b]; });
  Perm sigma(m);
  for (int r = 0; r < m; ++r) sigma[order[r]] = r;
  return sigma;
}

// all rank vectors of [m], lexicographic
inline std::vector<Perm> all_permutations(int m) {
  Perm p(m);
  std::iota(p.begin(), p.end(), 0);
  std::vector<Perm> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

inline double kendall_loss(const Perm& z, const Perm& y) {
  if (z.size() != y.size()) throw std::invalid_argument("kendall_loss: size mismatch");
  const double C = num_pairs(static_cast<int>(z.size()));
  return C - embed_kendall(z).dot(embed_kendall(y));
}

// ------------------------------------------------------------ constraints

struct Box {
  Vec lower;
  Vec upper;
  double volume() const {
    double v = 1.0;
    for (Eigen::Index i = 0; i < lower.size(); ++i) v *= upper[i] - lower[i];
    return v;
  }
};

struct Halfspace {
  Vec u;          // unit direction
  double offset;  // threshold <z, u>
  int bit;        // observed sign(<y, u> - offset), sign(0) = +1
};

class ConstraintSet {
 public:
  enum class Kind { finite, box, halfspaceHistory, kendallPartial, tags, full };
  using PairMap = std::map<std::pair<int, int>, int>;

  ConstraintSet() = default;

  static ConstraintSet full() { return ConstraintSet(); }

  static ConstraintSet finite(std::vector<int> labels) {
    if (labels.empty()) throw std::invalid_argument("finite constraint set must be non-empty");
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.front() < 0) throw std::invalid_argument("labels are non-negative ids");
    ConstraintSet s;
    s.kind_ = Kind::finite;
    s.labels_ = std::move(labels);
    return s;
  }
  static ConstraintSet singleton(int y) { return finite({y}); }

  static ConstraintSet boxes(std::vector<Box> boxes) {
    if (boxes.empty()) throw std::invalid_argument("box constraint needs at least one box");
    const auto d = boxes.front().lower.size();
    for (const auto& b : boxes) {
      if (b.lower.size() != d || b.upper.size() != d) throw std::invalid_argument("box dimension mismatch");
      for (Eigen::Index i = 0; i < d; ++i)
        if (!(b.lower[i] <= b.upper[i])) throw std::invalid_argument("box needs lower <= upper");
    }
    ConstraintSet s;
    s.kind_ = Kind::box;
    s.boxes_ = std::move(boxes);
    return s;
  }
  static ConstraintSet box(Vec lower, Vec upper) { return boxes({Box{std::move(lower), std::move(upper)}}); }
  static ConstraintSet interval(double lo, double hi) {
    return box(Vec::Constant(1, lo), Vec::Constant(1, hi));
  }
  static ConstraintSet intervals(const std::vector<std::pair<double, double>>& iv) {
    std::vector<Box> b;
    for (auto [lo, hi] : iv) b.push_back(Box{Vec::Constant(1, lo), Vec::Constant(1, hi)});
    return boxes(std::move(b));
  }

  static ConstraintSet halfspaces(std::vector<Halfspace> h) {
    for (const auto& e : h) {
      if (std::abs(e.u.norm() - 1.0) > 1e-9) throw std::invalid_argument("halfspace direction must be unit");
      if (e.bit != 1 && e.bit != -1) throw std::invalid_argument("halfspace bit must be +-1");
    }
    ConstraintSet s;
    s.kind_ = Kind::halfspaceHistory;
    s.halfspaces_ = std::move(h);
    return s;
  }

  // entries (i, j, v): item i above item j iff v = +1
  static ConstraintSet kendall_partial(const std::vector<std::tuple<int, int, int>>& entries) {
    ConstraintSet s;
    s.kind_ = Kind::kendallPartial;
    for (auto [i, j, v] : entries) s.fix(i, j, v);
    return s;
  }
  static ConstraintSet kendall_partial(const PairMap& entries) {
    ConstraintSet s;
    s.kind_ = Kind::kendallPartial;
    for (auto [k, v] : entries) s.fix(k.first, k.second, v);
    return s;
  }

  // multilabel: tags in pos are on, tags in neg are off
  static ConstraintSet tags(std::vector<int> pos, std::vector<int> neg) {
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    std::vector<int> both;
    std::set_intersection(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(both));
    if (!both.empty()) throw std::invalid_argument("tag both positive and negative");
    ConstraintSet s;
    s.kind_ = Kind::tags;
    s.labels_ = std::move(pos);
    s.negative_ = std::move(neg);
    return s;
  }

  Kind kind() const { return kind_; }
  bool is_full() const { return kind_ == Kind::full; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& positive_tags() const { return labels_; }
  const std::vector<int>& negative_tags() const { return negative_; }
  const std::vector<Box>& box_list() const { return boxes_; }
  const std::vector<Halfspace>& halfspace_list() const { return halfspaces_; }
  const PairMap& fixed_pairs() const { return pairs_; }

  // +1, -1 for a fixed pair, 0 if free
  int pair_sign(int i, int j) const {
    if (i == j) return 0;
    int sgn = 1;
    if (i > j) std::swap(i, j), sgn = -1;
    auto it = pairs_.find({i, j});
    return it == pairs_.end() ? 0 : sgn * it->second;
  }

  bool contains(int y) const {
    switch (kind_) {
      case Kind::full: return true;
      case Kind::finite: return std::binary_search(labels_.begin(), labels_.end(), y);
      case Kind::tags: {
        auto bits = static_cast<std::uint64_t>(y);
        for (int j : labels_) if (!((bits >> j) & 1U)) return false;
        for (int j : negative_) if ((bits >> j) & 1U) return false;
        return true;
      }
      default: throw std::invalid_argument("constraint kind does not hold discrete labels");
    }
  }

  bool contains(const Vec& y) const {
    switch (kind_) {
      case Kind::full: return true;
      case Kind::box:
        for (const auto& b : boxes_) {
          if (b.lower.size() != y.size()) throw std::invalid_argument("box dimension mismatch");
          if (((y - b.lower).array() >= 0).all() && ((b.upper - y).array() >= 0).all()) return true;
        }
        return false;
      case Kind::halfspaceHistory:
        for (const auto& h : halfspaces_) {
          int s = y.dot(h.u) - h.offset >= 0 ? 1 : -1;
          if (s != h.bit) return false;
        }
        return true;
      default: throw std::invalid_argument("constraint kind does not hold real vectors");
    }
  }

  bool contains(const Perm& sigma) const {
    if (kind_ == Kind::full) return true;
    if (kind_ != Kind::kendallPartial) throw std::invalid_argument("constraint kind does not hold permutations");
    for (auto [k, v] : pairs_) {
      if (k.second >= static_cast<int>(sigma.size())) throw std::invalid_argument("pair outside permutation");
      int s = sigma[k.first] > sigma[k.second] ? 1 : -1;
      if (s != v) return false;
    }
    return true;
  }

  bool bounded() const {
    if (kind_ == Kind::box) {
      for (const auto& b : boxes_)
        if (!b.lower.allFinite() || !b.upper.allFinite()) return false;
      return true;
    }
    return kind_ == Kind::finite || kind_ == Kind::kendallPartial || kind_ == Kind::tags;
  }

  // mean of the uniform distribution on a bounded box union
  Vec center() const {
    require_bounded_boxes();
    auto w = box_weights();
    Vec c = Vec::Zero(boxes_.front().lower.size());
    for (std::size_t b = 0; b < boxes_.size(); ++b) c += w[b] * 0.5 * (boxes_[b].lower + boxes_[b].upper);
    return c;
  }

  // E||Y - c||^2 for Y uniform on the box union
  double spread() const {
    require_bounded_boxes();
    auto w = box_weights();
    Vec c = center();
    double v = 0.0;
    for (std::size_t b = 0; b < boxes_.size(); ++b) {
      Vec mid = 0.5 * (boxes_[b].lower + boxes_[b].upper);
      Vec len = boxes_[b].upper - boxes_[b].lower;
      v += w[b] * ((mid - c).squaredNorm() + len.squaredNorm() / 12.0);
    }
    return v;
  }

  // probability of each box under the uniform distribution on the union
  std::vector<double> box_weights() const {
    std::vector<double> w(boxes_.size());
    double tot = 0.0;
    for (std::size_t b = 0; b < boxes_.size(); ++b) tot += (w[b] = boxes_[b].volume());
    for (auto& x : w) x = tot > 0 ? x / tot : 1.0 / static_cast<double>(w.size());
    return w;
  }

 private:
  void fix(int i, int j, int v) {
    if (i == j || i < 0 || j < 0) throw std::invalid_argument("kendall coordinate needs distinct items");
    if (v != 1 && v != -1) throw std::invalid_argument("kendall coordinate must be +-1");
    if (i > j) std::swap(i, j), v = -v;
    auto [it, inserted] = pairs_.emplace(std::make_pair(i, j), v);
    if (!inserted && it->second != v) throw std::invalid_argument("kendall coordinates violate antisymmetry");
  }
  void require_bounded_boxes() const {
    if (kind_ != Kind::box) throw std::invalid_argument("centre defined for box constraints only");
    if (!bounded()) throw std::invalid_argument("centre undefined for unbounded boxes");
  }

  Kind kind_ = Kind::full;
  std::vector<int> labels_;
  std::vector<int> negative_;
  std::vector<Box> boxes_;
  std::vector<Halfspace> halfspaces_;
  PairMap pairs_;
};

inline bool constraint_contains(const ConstraintSet& s, int y) { return s.contains(y); }
inline bool constraint_contains(const ConstraintSet& s, const Vec& y) { return s.contains(y); }
inline bool constraint_contains(const ConstraintSet& s, const Perm& y) { return s.contains(y); }

// ------------------------------------------------------------------ losses

// rows are labels: loss(z, y) = psi.row(z) . phi.row(y)
struct Embedding {
  Mat psi;
  Mat phi;
};

class LossSpec {
 public:
  enum class Kind { zeroOne, hamming, kendall, squared, absoluteDeviation, table };

  static LossSpec zero_one(int m) { return finite_loss(Kind::zeroOne, OutputSpace::classes(m)); }
  static LossSpec hamming(int m) { return finite_loss(Kind::hamming, OutputSpace::multilabel(m)); }
  static LossSpec kendall(int m) {
    LossSpec l;
    l.kind_ = Kind::kendall;
    l.space_ = OutputSpace::permutations(m);
    if (m <= 8) l.perms_ = all_permutations(m);
    return l;
  }
  static LossSpec squared(int dim = 1) {
    LossSpec l;
    l.kind_ = Kind::squared;
    l.space_ = OutputSpace::reals(dim);
    return l;
  }
  static LossSpec absolute_deviation(int dim = 1) {
    LossSpec l;
    l.kind_ = Kind::absoluteDeviation;
    l.space_ = OutputSpace::reals(dim);
    return l;
  }
  // arbitrary finite loss; entry (z, y)
  static LossSpec table(Mat L, std::vector<std::string> names = {}) {
    if (L.rows() != L.cols() || L.rows() < 1) throw std::invalid_argument("loss table must be square");
    if ((L.array() < 0).any() || !L.allFinite()) throw std::invalid_argument("loss table must be finite and >= 0");
    LossSpec l;
    l.kind_ = Kind::table;
    l.space_ = OutputSpace::classes(static_cast<int>(L.rows()), std::move(names));
    l.table_ = std::move(L);
    l.embedding_ = Embedding{Mat::Identity(l.table_.rows(), l.table_.rows()), l.table_.transpose()};
    return l;
  }

  Kind kind() const { return kind_; }
  const OutputSpace& space() const { return space_; }
  int m() const { return space_.m; }
  bool finite() const { return space_.finite(); }
  int size() const { return static_cast<int>(space_.size()); }

  // loss between finite label ids; permutations indexed as in all_permutations
  double operator()(int z, int y) const {
    check_id(z);
    check_id(y);
    switch (kind_) {
      case Kind::zeroOne: return z == y ? 0.0 : 1.0;
      case Kind::hamming:
        return static_cast<double>(__builtin_popcountll(static_cast<std::uint64_t>(z) ^ static_cast<std::uint64_t>(y)));
      case Kind::table: return table_(z, y);
      case Kind::kendall: {
        const auto& P = perms();
        return kendall_loss(P[z], P[y]);
      }
      default: throw std::invalid_argument("loss is not finite");
    }
  }

  double operator()(const Perm& z, const Perm& y) const {
    if (kind_ != Kind::kendall) throw std::invalid_argument("permutation loss requires kendall");
    if (static_cast<int>(z.size()) != m() || static_cast<int>(y.size()) != m())
      throw std::invalid_argument("permutation size mismatch");
    return kendall_loss(z, y);
  }

  double operator()(const Vec& z, const Vec& y) const {
    if (z.size() != y.size() || z.size() != m()) throw std::invalid_argument("regression dimension mismatch");
    switch (kind_) {
      case Kind::squared: return (z - y).squaredNorm();
      case Kind::absoluteDeviation: return (z - y).norm();
      default: throw std::invalid_argument("loss is not a regression loss");
    }
  }
  double operator()(double z, double y) const { return (*this)(Vec::Constant(1, z), Vec::Constant(1, y)); }

  Mat table() const {
    if (kind_ == Kind::table) return table_;
    const int K = size();
    if (K > 5040) throw std::invalid_argument("loss table too large");
    Mat L(K, K);
    for (int z = 0; z < K; ++z)
      for (int y = 0; y < K; ++y) L(z, y) = (*this)(z, y);
    return L;
  }

  // bilinear factorization over the finite space
  Embedding embedding() const {
    switch (kind_) {
      case Kind::table: return embedding_;
      case Kind::zeroOne: {
        const int K = m();
        return {Mat::Identity(K, K), Mat::Ones(K, K) - Mat::Identity(K, K)};
      }
      case Kind::hamming: {
        const int K = size(), mm = m();
        Mat psi(K, mm + 1), phi(K, mm + 1);
        for (int y = 0; y < K; ++y) {
          for (int j = 0; j < mm; ++j) {
            double s = ((y >> j) & 1) ? 1.0 : -1.0;
            psi(y, j) = -0.5 * s;
            phi(y, j) = s;
          }
          psi(y, mm) = 0.5 * mm;
          phi(y, mm) = 1.0;
        }
        return {psi, phi};
      }
      case Kind::kendall: {
        const auto& P = perms();
        const int K = static_cast<int>(P.size()), E = num_pairs(m());
        Mat psi(K, E + 1), phi(K, E + 1);
        for (int y = 0; y < K; ++y) {
          Vec e = embed_kendall(P[y]);
          psi.row(y).head(E) = -e.transpose();
          psi(y, E) = E;
          phi.row(y).head(E) = e.transpose();
          phi(y, E) = 1.0;
        }
        return {psi, phi};
      }
      default: throw std::invalid_argument("regression losses have no finite embedding");
    }
  }

  // proper: zero exactly on the diagonal
  bool proper() const {
    Mat L = table();
    for (int z = 0; z < L.rows(); ++z)
      for (int y = 0; y < L.cols(); ++y)
        if ((L(z, y) == 0.0) != (z == y)) return false;
    return true;
  }

  const std::vector<Perm>& perms() const {
    if (perms_.empty()) throw std::invalid_argument("permutation ids available for m <= 8 only");
    return perms_;
  }

 private:
  static LossSpec finite_loss(Kind k, OutputSpace s) {
    LossSpec l;
    l.kind_ = k;
    l.space_ = std::move(s);
    return l;
  }
  void check_id(int y) const {
    if (!finite()) throw std::invalid_argument("loss is not finite");
    if (y < 0 || static_cast<std::size_t>(y) >= space_.size()) throw std::out_of_range("label outside output space");
  }

  Kind kind_ = Kind::zeroOne;
  OutputSpace space_;
  Mat table_;
  Embedding embedding_;
  std::vector<Perm> perms_;
};

inline double loss_eval(const LossSpec& l, int z, int y) { return l(z, y); }
inline double loss_eval(const LossSpec& l, const Perm& z, const Perm& y) { return l(z, y); }
inline double loss_eval(const LossSpec& l, const Vec& z, const Vec& y) { return l(z, y); }

// the three-label loss with l(a,b) = l(a,c) = 1, l(b,c) = 2
inline LossSpec abc_example_loss() {
  Mat L(3, 3);
  L << 0, 1, 1,
       1, 0, 2,
       1, 2, 0;
  return LossSpec::table(L, {"a", "b", "c"});
}

// ----------------------------------------------------------------- datasets

template <class Y>
struct WeakDataset {
  Mat inputs;  // n x d
  std::vector<ConstraintSet> constraints;
  std::vector<Y> truths;  // optional, used by simulated oracles

  int n() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  bool has_truths() const { return !truths.empty(); }

  void validate() const {
    if (static_cast<int>(constraints.size()) != n()) throw std::invalid_argument("inputs and constraints differ in length");
    if (has_truths() && static_cast<int>(truths.size()) != n())
      throw std::invalid_argument("inputs and truths differ in length");
  }
};

// Least-squares slope of y against x (callers pass logs for a log-log fit).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope needs two or more matched points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw std::invalid_argument("slope needs distinct x values");
  return sxy / sxx;
}

}  // namespace weaklearn
