#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "weaklearn/core.hpp"
#include "weaklearn/rng.hpp"

namespace weaklearn {

// ------------------------------------------------------------------ LIBSVM

struct LibsvmRecord {
  double label = 0.0;
  std::vector<std::pair<int, double>> features;  // 1-based indices, strictly increasing
  bool operator==(const LibsvmRecord&) const = default;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int l, const std::string& what) : std::runtime_error("line " + std::to_string(l) + ": " + what), line(l) {}
};

namespace detail {

inline double parse_double(std::string_view s, int line) {
  if (s.size() > 1 && s[0] == '+' && s[1] != '-') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(line, "unparseable number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline std::vector<LibsvmRecord> parse_libsvm(std::istream& in) {
  std::vector<LibsvmRecord> out;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::istringstream ss(raw);
    std::string tok;
    if (!(ss >> tok) || tok[0] == '#') continue;
    LibsvmRecord r;
    r.label = detail::parse_double(tok, lineno);
    while (ss >> tok) {
      if (tok[0] == '#') break;
      auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "expected idx:val, got '" + tok + "'");
      std::string_view sv(tok);
      const double idx = detail::parse_double(sv.substr(0, colon), lineno);
      if (idx < 1 || idx != std::floor(idx)) throw ParseError(lineno, "feature index must be a positive integer");
      const int k = static_cast<int>(idx);
      if (!r.features.empty() && k <= r.features.back().first) throw ParseError(lineno, "feature indices must increase");
      r.features.emplace_back(k, detail::parse_double(sv.substr(colon + 1), lineno));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<LibsvmRecord> parse_libsvm(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

inline void write_libsvm(std::ostream& os, const std::vector<LibsvmRecord>& recs) {
  char buf[64];
  auto put = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, p - buf);
  };
  for (const auto& r : recs) {
    put(r.label);
    for (auto [k, v] : r.features) {
      os << ' ' << k << ':';
      put(v);
    }
    os << '\n';
  }
}

// dense inputs and integer class ids 0..m-1 ordered by the sorted distinct labels
struct ClassificationData {
  Mat inputs;
  std::vector<int> labels;
  std::vector<double> label_values;
  int classes() const { return static_cast<int>(label_values.size()); }
};

inline ClassificationData to_classification(const std::vector<LibsvmRecord>& recs) {
  ClassificationData d;
  int dim = 0;
  std::map<double, int> ids;
  for (const auto& r : recs) {
    if (!r.features.empty()) dim = std::max(dim, r.features.back().first);
    ids.emplace(r.label, 0);
  }
  int next = 0;
  for (auto& [v, id] : ids) id = next++, d.label_values.push_back(v);
  d.inputs = Mat::Zero(static_cast<Eigen::Index>(recs.size()), dim);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (auto [k, v] : recs[i].features) d.inputs(static_cast<Eigen::Index>(i), k - 1) = v;
    d.labels.push_back(ids[recs[i].label]);
  }
  return d;
}

// -------------------------------------------------------------- corruption

struct CorruptionMode {
  enum class Kind { uniform, skewed, majorityPair } kind = Kind::uniform;
  double c = 0.0;
  static CorruptionMode uniform(double c) { return {Kind::uniform, c}; }
  // only samples of the majority class get extra candidates, each with probability c
  static CorruptionMode skewed(double c) { return {Kind::skewed, c}; }
  // with probability c the majority class joins the true label
  static CorruptionMode majority_pair(double c) { return {Kind::majorityPair, c}; }
};

inline int majority_class(const std::vector<int>& labels, int m) {
  std::vector<int> count(m, 0);
  for (int y : labels) ++count.at(y);
  return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

inline std::vector<ConstraintSet> corrupt_classification(const std::vector<int>& labels, int m, CorruptionMode mode, Rng& rng) {
  if (mode.c < 0.0 || mode.c > 1.0) throw std::invalid_argument("corruption level must lie in [0, 1]");
  const int maj = labels.empty() ? 0 : majority_class(labels, m);
  std::vector<ConstraintSet> out;
  out.reserve(labels.size());
  for (int y : labels) {
    std::vector<int> s{y};
    switch (mode.kind) {
      case CorruptionMode::Kind::uniform:
        for (int z = 0; z < m; ++z)
          if (z != y && rng.bernoulli(mode.c)) s.push_back(z);
        break;
      case CorruptionMode::Kind::skewed:
        if (y == maj)
          for (int z = 0; z < m; ++z)
            if (z != y && rng.bernoulli(mode.c)) s.push_back(z);
        break;
      case CorruptionMode::Kind::majorityPair:
        if (y != maj && rng.bernoulli(mode.c)) s.push_back(maj);
        break;
    }
    out.push_back(ConstraintSet::finite(s));
  }
  return out;
}

// ------------------------------------------------------------- generators

inline double sign_pm(double v) { return v >= 0 ? 1.0 : -1.0; }

inline WeakDataset<double> gen_interval_regression(int n, Rng& rng, double omega = 10.0) {
  WeakDataset<double> d;
  d.inputs.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double y = std::sin(omega * x);
    const double r = 1.0 - std::log(1.0 - rng.uniform()) / 3.0;
    const double c = rng.uniform(0.0, r);
    const double mid = y + sign_pm(y) * c;
    d.inputs(i, 0) = x;
    d.truths.push_back(y);
    d.constraints.push_back(ConstraintSet::interval(mid - r, mid + r));
  }
  d.validate();
  return d;
}

inline WeakDataset<int> gen_concentric_circles(int n_unlabeled, Rng& rng) {
  WeakDataset<int> d;
  d.inputs.resize(n_unlabeled + 4, 2);
  const double tau = 2.0 * std::numbers::pi;
  for (int i = 0; i < n_unlabeled; ++i) {
    const double theta = rng.uniform();
    const int r = 1 + static_cast<int>(rng.below(4));
    d.inputs.row(i) << r * std::cos(tau * theta), r * std::sin(tau * theta);
    d.truths.push_back(r - 1);
    d.constraints.push_back(ConstraintSet::full());
  }
  const double s3 = std::sqrt(3.0), s2 = std::sqrt(2.0);
  const double pts[4][2] = {{-2 * s3, 2.0}, {1.0, -2 * s2}, {-s3, -1.0}, {-1.0, 0.0}};
  const int cls[4] = {3, 2, 1, 0};
  for (int k = 0; k < 4; ++k) {
    d.inputs.row(n_unlabeled + k) << pts[k][0], pts[k][1];
    d.truths.push_back(cls[k]);
    d.constraints.push_back(ConstraintSet::singleton(cls[k]));
  }
  d.validate();
  return d;
}

// class of a plane point: the nearest circle
inline int circle_class(double x1, double x2) {
  const double r = std::hypot(x1, x2);
  return std::clamp(static_cast<int>(std::lround(r)), 1, 4) - 1;
}

struct SemiSupervisedData {
  Mat inputs;
  std::vector<int> labels;  // +1 / -1, all retained for evaluation
  int labeled = 0;          // the first `labeled` rows are observed
};

inline SemiSupervisedData gen_two_gaussians(int n, int nl, Rng& rng, int d = 10, double delta = 3.0) {
  if (nl > n || nl < 0) throw std::invalid_argument("need 0 <= nl <= n");
  SemiSupervisedData s;
  s.inputs.resize(n, d);
  s.labeled = nl;
  // balanced labels in random order, with both classes among the labelled rows when nl >= 2
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2 ? 1 : -1;
  auto perm = rng.permutation(n);
  std::vector<int> shuffled(n);
  for (int i = 0; i < n; ++i) shuffled[i] = y[perm[i]];
  if (nl >= 2) {
    auto it = std::find(shuffled.begin() + 1, shuffled.end(), -shuffled[0]);
    if (it - shuffled.begin() >= nl) std::iter_swap(shuffled.begin() + 1, it);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) s.inputs(i, j) = rng.normal();
    s.inputs(i, 0) += 0.5 * delta * shuffled[i];
    s.labels.push_back(shuffled[i]);
  }
  return s;
}

inline WeakDataset<Perm> gen_ranking_lines(int m, int n, double c, Rng& rng, Vec* slopes = nullptr, Vec* offsets = nullptr) {
  Vec a = rng.normal_vector(m), b = rng.normal_vector(m);
  if (slopes) *slopes = a;
  if (offsets) *offsets = b;
  WeakDataset<Perm> d;
  d.inputs.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform();
    d.inputs(i, 0) = x;
    Vec v = a * x + b;
    Perm y = ranks_from_scores(v);
    double span = v.maxCoeff() - v.minCoeff();
    ConstraintSet::PairMap pm;
    for (auto [j, k] : pair_list(m)) {
      const double dist = span > 0 ? std::abs(v[j] - v[k]) / span : 0.0;
      if (dist <= c) pm[{j, k}] = y[j] > y[k] ? 1 : -1;
    }
    d.truths.push_back(y);
    d.constraints.push_back(ConstraintSet::kendall_partial(pm));
  }
  d.validate();
  return d;
}

inline double knn_rates_target(double x, double alpha) { return sign_pm(x) * std::pow(std::abs(x), 1.0 / alpha); }

struct BinaryData {
  Mat inputs;
  std::vector<int> labels;  // +1 / -1
};

inline BinaryData gen_knn_rates_problem(double alpha, int n, Rng& rng) {
  BinaryData b;
  b.inputs.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    b.inputs(i, 0) = x;
    b.labels.push_back(rng.bernoulli(0.5 * (1.0 + knn_rates_target(x, alpha))) ? 1 : -1);
  }
  return b;
}

// labels within Hamming distance r of a center, over m bits
inline ConstraintSet hamming_ball(int m, int center, double r) {
  std::vector<int> ys;
  for (int y = 0; y < (1 << m); ++y)
    if (std::popcount(static_cast<unsigned>(y ^ center)) <= r) ys.push_back(y);
  return ConstraintSet::finite(ys);
}

// tags from random hyperplanes; supervision is a Hamming ball of random radius around a perturbed truth
inline WeakDataset<int> gen_multilabel_hamming(int n, int m, int d, double c, Rng& rng, Mat* planes = nullptr) {
  if (m > 16) throw std::invalid_argument("Hamming-ball sets are enumerated; keep m <= 16");
  Mat W(m, d);
  for (int j = 0; j < m; ++j) W.row(j) = rng.normal_vector(d).transpose();
  if (planes) *planes = W;
  WeakDataset<int> ds;
  ds.inputs.resize(n, d);
  for (int i = 0; i < n; ++i) {
    Vec x = rng.normal_vector(d);
    ds.inputs.row(i) = x.transpose();
    int y = 0;
    for (int j = 0; j < m; ++j) y |= (W.row(j).dot(x) > 0 ? 1 : 0) << j;
    const double r = rng.uniform(0.0, c * (m + 1));
    int center = y;
    for (int f = 0; f < static_cast<int>(r); ++f) center ^= 1 << rng.below(m);
    ds.truths.push_back(y);
    ds.constraints.push_back(hamming_ball(m, center, r));
  }
  ds.validate();
  return ds;
}

// unbalanced three-class surrogate for the LIBSVM classification figures
inline ClassificationData gen_unbalanced_surrogate(int n, Rng& rng, int d = 5) {
  ClassificationData c;
  c.label_values = {0, 1, 2};
  c.inputs.resize(n, d);
  const double prior[3] = {0.55, 0.3, 0.15};
  Mat centers(3, d);
  for (int k = 0; k < 3; ++k) centers.row(k) = 1.5 * rng.normal_vector(d).transpose();
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const int y = u < prior[0] ? 0 : (u < prior[0] + prior[1] ? 1 : 2);
    c.inputs.row(i) = centers.row(y) + rng.normal_vector(d).transpose();
    c.labels.push_back(y);
  }
  return c;
}

}  // namespace weaklearn
