#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "weaklearn/active.hpp"
#include "weaklearn/data.hpp"
#include "weaklearn/disambiguation.hpp"
#include "weaklearn/laplacian.hpp"
#include "weaklearn/mfas.hpp"
#include "weaklearn/partial.hpp"

namespace weaklearn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResultRow {
  int trial = 0;
  double param = 0.0;  // x-axis value
  std::string method;
  std::string metric;
  double value = 0.0;
};

inline bool operator==(const ResultRow& a, const ResultRow& b) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.trial == b.trial && same(a.param, b.param) && a.method == b.method && a.metric == b.metric &&
         same(a.value, b.value);
}

// shortest text that parses back to the same double
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------- params

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class Params {
 public:
  Params() = default;
  Params(std::initializer_list<std::pair<const std::string, std::string>> kv) : kv_(kv) {}

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  // later entries win
  void merge(const Params& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
  }

  std::string get(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : to_double(key, it->second);
  }

  long get_long(const std::string& key, long def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const double v = to_double(key, it->second);
    if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError(key + " must be an integer, got " + it->second);
    return static_cast<long>(v);
  }

  int get_int(const std::string& key, int def) const { return static_cast<int>(get_long(key, def)); }

  bool get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const auto& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError(key + " must be a boolean, got " + v);
  }

  // comma separated, optional surrounding brackets
  std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::string s = trim(it->second);
    if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    if (out.empty()) throw ConfigError(key + " is an empty list");
    return out;
  }

 private:
  static double to_double(const std::string& key, const std::string& s) {
    double v = 0;
    const auto t = trim(s);
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      throw ConfigError(key + ": not a number: " + s);
    return v;
  }

  std::map<std::string, std::string> kv_;
};

// key = value lines; '#' starts a comment; [section] headers are ignored
inline Params parse_config(std::istream& in) {
  Params p;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty() || (line.front() == '[' && line.back() == ']')) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    p.set(key, value);
  }
  return p;
}

inline Params parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  return parse_config(in);
}

// ---------------------------------------------------------------- summaries

struct Stat {
  double mean = 0, sd = 0, min = 0, max = 0;
  int count = 0;
};

using SummaryKey = std::tuple<std::string, std::string, double>;  // method, metric, param
using Summary = std::map<SummaryKey, Stat>;

inline Summary summarize(const std::vector<ResultRow>& rows) {
  std::map<SummaryKey, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.method, r.metric, r.param}].push_back(r.value);
  Summary s;
  for (const auto& [k, v] : groups) {
    Stat st;
    st.count = static_cast<int>(v.size());
    st.mean = std::accumulate(v.begin(), v.end(), 0.0) / st.count;
    double ss = 0;
    for (double x : v) ss += (x - st.mean) * (x - st.mean);
    st.sd = st.count > 1 ? std::sqrt(ss / (st.count - 1)) : 0.0;
    st.min = *std::min_element(v.begin(), v.end());
    st.max = *std::max_element(v.begin(), v.end());
    s[k] = st;
  }
  return s;
}

inline const Stat& stat_of(const Summary& s, const std::string& method, const std::string& metric, double param) {
  auto it = s.find({method, metric, param});
  if (it == s.end())
    throw std::out_of_range("no results for " + method + "/" + metric + " at " + format_double(param));
  return it->second;
}

// ---------------------------------------------------------------- output

inline const char* kCsvHeader = "trial,param,method,metric,value";

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows)
    os << r.trial << ',' << format_double(r.param) << ',' << csv_field(r.method) << ',' << csv_field(r.metric) << ','
       << format_double(r.value) << '\n';
}

inline std::string csv_string(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  write_csv(os, rows);
  return os.str();
}

struct SvgOptions {
  std::string metric;
  std::string title;
  bool log_x = false, log_y = false;
  int width = 640, height = 420;
};

// one line per method through the per-param means, with a mean +- sd band
inline void write_svg(std::ostream& os, const std::vector<ResultRow>& rows, const SvgOptions& opt) {
  const auto s = summarize(rows);
  std::map<std::string, std::vector<std::pair<double, Stat>>> series;
  for (const auto& [k, st] : s)
    if (std::get<1>(k) == opt.metric) series[std::get<0>(k)].push_back({std::get<2>(k), st});
  auto tx = [&](double v) { return opt.log_x ? std::log10(std::max(v, 1e-300)) : v; };
  auto ty = [&](double v) { return opt.log_y ? std::log10(std::max(v, 1e-300)) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& [m, pts] : series)
    for (const auto& [x, st] : pts) {
      x0 = std::min(x0, tx(x)), x1 = std::max(x1, tx(x));
      y0 = std::min(y0, ty(st.mean - st.sd)), y1 = std::max(y1, ty(st.mean + st.sd));
    }
  if (series.empty()) x0 = y0 = 0, x1 = y1 = 1;
  if (x1 <= x0) x0 -= 0.5, x1 += 0.5;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  const double L = 70, R = 150, T = 40, B = 50, W = opt.width, H = opt.height;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << (opt.title.empty() ? opt.metric : opt.title) << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& s, const char* anchor) {
    os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s << "</text>\n";
  };
  auto untx = [&](double v) { return opt.log_x ? std::pow(10.0, v) : v; };
  auto unty = [&](double v) { return opt.log_y ? std::pow(10.0, v) : v; };
  std::ostringstream a, b, c, d;
  a << std::setprecision(4) << untx(x0), b << std::setprecision(4) << untx(x1);
  c << std::setprecision(4) << unty(y0), d << std::setprecision(4) << unty(y1);
  label(L, H - B + 18, a.str(), "start");
  label(W - R, H - B + 18, b.str(), "end");
  label(L - 6, H - B, c.str(), "end");
  label(L - 6, T + 4, d.str(), "end");
  int ci = 0;
  for (const auto& [method, pts] : series) {
    const char* col = colors[ci % 8];
    os << "<polygon fill=\"" << col << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& [x, st] : pts) os << px(x) << ',' << py(st.mean + st.sd) << ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) os << px(it->first) << ',' << py(it->second.mean - it->second.sd) << ' ';
    os << "\"/>\n<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, st] : pts) os << px(x) << ',' << py(st.mean) << ' ';
    os << "\"/>\n";
    label(W - R + 10, T + 16 * ci + 10, method, "start");
    os << "<rect x=\"" << W - R + 2 << "\" y=\"" << T + 16 * ci + 3 << "\" width=\"6\" height=\"6\" fill=\"" << col << "\"/>\n";
    ++ci;
  }
  os << "</svg>\n";
}

// ---------------------------------------------------------------- recipes

struct TrialContext {
  const Params& params;
  int trial;
  Rng rng;
  bool timing;
};

struct CheckResult {
  std::string name;
  bool pass;
  std::string detail;
};

struct Recipe {
  std::string name;
  std::string description;
  int default_trials = 1;
  std::string plot_metric;
  bool log_x = false, log_y = false;
  std::function<std::vector<ResultRow>(TrialContext&)> run;
  std::function<std::vector<CheckResult>(const std::vector<ResultRow>&, const Params&)> check;  // may be empty
};

struct ExperimentConfig {
  std::string recipe;
  std::uint64_t seed = 0;
  int trials = 0;   // 0: the recipe's default
  int threads = 0;  // 0: hardware concurrency
  bool timing = false;
  Params params;
};

namespace recipes {

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---- partial labels

inline LossSpec abc_loss() {
  Mat L(3, 3);
  L << 0, 1, 1,
       1, 0, 2,
       1, 2, 0;
  return LossSpec::table(L, {"a", "b", "c"});
}

inline std::vector<ResultRow> pointwise_counterexample(TrialContext& ctx) {
  const auto loss = abc_loss();
  const std::vector<ConstraintSet> sets{ConstraintSet::finite({0, 1, 2}), ConstraintSet::finite({2}),
                                        ConstraintSet::finite({0, 2}), ConstraintSet::finite({1, 2})};
  Vec tau(4);
  tau << 5.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 8;
  std::vector<ResultRow> rows;
  for (auto p : {Principle::infimum, Principle::average, Principle::supremum}) {
    const auto d = infer_classification_weights(loss, p, sets, tau);
    // brute force: direct enumeration of each set
    int best = -1;
    double best_v = 0;
    for (int z = 0; z < 3; ++z) {
      double r = 0;
      for (int i = 0; i < 4; ++i) {
        const auto& ls = sets[i].labels();
        double agg = p == Principle::infimum ? 1e300 : (p == Principle::supremum ? -1e300 : 0.0);
        for (int y : ls) {
          const double l = loss.table()(z, y);
          if (p == Principle::infimum) agg = std::min(agg, l);
          else if (p == Principle::supremum) agg = std::max(agg, l);
          else agg += l / static_cast<double>(ls.size());
        }
        r += tau[i] * agg;
      }
      if (best < 0 || r < best_v - 1e-12) best = z, best_v = r;
    }
    rows.push_back({ctx.trial, 0, principle_name(p), "label", static_cast<double>(d.label)});
    rows.push_back({ctx.trial, 0, principle_name(p), "bruteLabel", static_cast<double>(best)});
  }
  return rows;
}

inline std::vector<CheckResult> check_pointwise(const std::vector<ResultRow>& rows, const Params&) {
  std::map<std::string, int> label, brute;
  for (const auto& r : rows) (r.metric == "label" ? label : brute)[r.method] = static_cast<int>(r.value);
  const bool ok = label["infimum"] == 2 && label["average"] == 0 && label["supremum"] == 0 && label == brute;
  return {{"pointwise counterexample", ok,
           "infimum=" + std::string(1, char('a' + label["infimum"])) + " average=" +
               std::string(1, char('a' + label["average"])) + " supremum=" +
               std::string(1, char('a' + label["supremum"])) + (label == brute ? ", brute force agrees" : ", brute force differs")}};
}

inline std::vector<ResultRow> mfas_exactness(TrialContext& ctx) {
  const int m = ctx.params.get_int("m", 4), count = ctx.params.get_int("instances", 500);
  int exact = 0, match = 0;
  double gap = 0;
  for (int i = 0; i < count; ++i) {
    MfasInstance inst(m, ctx.rng.normal_vector(num_pairs(m)));
    const auto lp = solve_lp(inst);
    const auto bf = solve_brute(inst);
    exact += lp.exact;
    const double g = std::abs(lp.objective - bf.objective);
    match += g <= 1e-9 * (1 + std::abs(bf.objective));
    gap = std::max(gap, g);
  }
  return {{ctx.trial, double(m), "lp", "exactFraction", double(exact) / count},
          {ctx.trial, double(m), "lp", "matchFraction", double(match) / count},
          {ctx.trial, double(m), "lp", "maxGap", gap}};
}

inline std::vector<CheckResult> check_mfas(const std::vector<ResultRow>& rows, const Params&) {
  double ex = 1, ma = 1, gap = 0;
  for (const auto& r : rows) {
    if (r.metric == "exactFraction") ex = std::min(ex, r.value);
    if (r.metric == "matchFraction") ma = std::min(ma, r.value);
    if (r.metric == "maxGap") gap = std::max(gap, r.value);
  }
  return {{"mfas exactness", ex == 1.0 && ma == 1.0,
           "exact fraction " + fmt(ex) + ", brute-force match " + fmt(ma) + ", max gap " + fmt(gap)}};
}

// train/test split of either a LIBSVM file or the synthetic surrogate
struct ClassSplit {
  ClassificationData train, test;
};

inline ClassificationData take_rows(const ClassificationData& d, const std::vector<int>& idx) {
  ClassificationData out;
  out.label_values = d.label_values;
  out.inputs.resize(static_cast<Eigen::Index>(idx.size()), d.inputs.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = d.inputs.row(idx[i]);
    out.labels.push_back(d.labels[idx[i]]);
  }
  return out;
}

inline ClassSplit class_split(const Params& p, Rng& rng) {
  const int n = p.get_int("n", 500), n_test = p.get_int("test", 1000);
  const std::string path = p.get("data", "");
  ClassificationData all;
  if (path.empty()) {
    // one draw, then split, so both parts share the class centres
    all = gen_unbalanced_surrogate(n + n_test, rng);
  } else {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read LIBSVM file " + path);
    all = to_classification(parse_libsvm(in));
    auto perm = rng.permutation(static_cast<int>(all.labels.size()));
    all = take_rows(all, std::vector<int>(perm.begin(), perm.end()));
  }
  const int total = static_cast<int>(all.labels.size());
  const int tr = std::min(n, total / 2), te = std::min(n_test, total - tr);
  if (tr < 1 || te < 1) throw ConfigError("not enough samples for a train/test split");
  std::vector<int> a(tr), b(te);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), tr);
  return {take_rows(all, a), take_rows(all, b)};
}

inline double error_rate(const std::vector<int>& pred, const std::vector<int>& truth) {
  int e = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) e += pred[i] != truth[i];
  return static_cast<double>(e) / static_cast<double>(pred.size());
}

inline std::vector<ResultRow> corruption_trial(TrialContext& ctx, bool with_df) {
  const auto& p = ctx.params;
  const auto split = class_split(p, ctx.rng);
  const int m = split.train.classes();
  const auto loss = LossSpec::zero_one(m);
  const bool uniform = p.get("mode", "skewed") == "uniform";
  auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::kernel_ridge(p.get_double("lambda", 1e-2)),
                                                         split.train.inputs, GaussianKernel(p.get_double("sigma", 2.0))));
  std::vector<ResultRow> rows;
  for (double c : p.get_list("c", {0.5, 0.7, 0.9})) {
    Rng crng = ctx.rng.substream(static_cast<std::uint64_t>(std::llround(c * 1e6)));
    WeakDataset<int> d;
    d.inputs = split.train.inputs;
    d.truths = split.train.labels;
    d.constraints = corrupt_classification(split.train.labels, m,
                                           uniform ? CorruptionMode::uniform(c) : CorruptionMode::skewed(c), crng);
    for (auto pr : {Principle::infimum, Principle::average}) {
      PartialEstimator est(w, loss, pr);
      rows.push_back({ctx.trial, c, pr == Principle::infimum ? "IL" : "AC", "error",
                      error_rate(infer_classification_batch(est, d, split.test.inputs), split.test.labels)});
    }
    if (with_df) {
      auto dis = disambiguate_altmin(DisambiguationProblem(*w, d.constraints, loss), p.get_int("iters", 100));
      rows.push_back({ctx.trial, c, "DF", "error",
                      error_rate(supervised_inference_batch(*w, loss, dis.labels, split.test.inputs), split.test.labels)});
    }
  }
  return rows;
}

inline std::vector<CheckResult> check_il_corruption(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  std::vector<CheckResult> out;
  for (double c : p.get_list("c", {0.5, 0.7, 0.9})) {
    const double il = stat_of(s, "IL", "error", c).mean, ac = stat_of(s, "AC", "error", c).mean;
    out.push_back({"IL <= AC at c=" + fmt(c), il <= ac, "IL " + fmt(il) + " vs AC " + fmt(ac)});
  }
  return out;
}

// ---- disambiguation

inline Mat plane_grid(int side, double lo, double hi) {
  Mat G(side * side, 2);
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) G.row(a * side + b) << lo + (hi - lo) * a / (side - 1), lo + (hi - lo) * b / (side - 1);
  return G;
}

inline std::vector<ResultRow> df_circles(TrialContext& ctx) {
  const auto& p = ctx.params;
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = gen_concentric_circles(p.get_int("n", 2000), ctx.rng);
  const auto loss = LossSpec::zero_one(4);
  auto w = fit_weights(WeightKind::knn(p.get_int("k", 20)), ds.inputs);
  auto dis = disambiguate_altmin(DisambiguationProblem(w, ds.constraints, loss), p.get_int("iters", 200));
  int recovered = 0;
  for (int i = 0; i < ds.n(); ++i) recovered += dis.labels[i] == ds.truths[i];
  auto nw = fit_weights(WeightKind::nadaraya_watson(p.get_double("h", 0.08)), ds.inputs);
  const Mat G = plane_grid(p.get_int("grid", 50), -4.5, 4.5);
  auto acc = [&](const std::vector<int>& pred) {
    int ok = 0;
    for (Eigen::Index g = 0; g < G.rows(); ++g) ok += pred[g] == circle_class(G(g, 0), G(g, 1));
    return static_cast<double>(ok) / static_cast<double>(G.rows());
  };
  std::vector<ResultRow> rows;
  rows.push_back({ctx.trial, 0, "DF", "accuracy", acc(supervised_inference_batch(nw, loss, dis.labels, G))});
  rows.push_back({ctx.trial, 0, "DF", "trainAccuracy", static_cast<double>(recovered) / ds.n()});
  if (ctx.timing) rows.push_back({ctx.trial, 0, "DF", "seconds", elapsed(t0)});
  // infimum loss with the same weights: the unlabelled full sets carry no signal
  PartialEstimator il(std::make_shared<WeightingScheme>(nw), loss, Principle::infimum);
  rows.push_back({ctx.trial, 0, "IL", "accuracy", acc(infer_classification_batch(il, ds, G))});
  return rows;
}

inline std::vector<CheckResult> check_circles(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  const auto& st = stat_of(s, "DF", "accuracy", 0);
  const double thr = p.get_double("threshold", 0.99);
  std::string detail = "DF grid accuracy min " + fmt(st.min) + " over " + std::to_string(st.count) + " seeds (need >= " + fmt(thr) + ")";
  if (auto it = s.find({"DF", "trainAccuracy", 0}); it != s.end()) detail += ", disambiguated labels correct min " + fmt(it->second.min);
  return {{"concentric circles", st.min >= thr, detail}};
}

inline std::vector<ResultRow> df_intervals(TrialContext& ctx) {
  const auto& p = ctx.params;
  const double sigma = p.get_double("sigma", 0.1), lambda = p.get_double("lambda", 1e-3), omega = p.get_double("omega", 10);
  const int G = p.get_int("grid", 200);
  Mat Q(G, 1);
  for (int g = 0; g < G; ++g) Q(g, 0) = (g + 0.5) / G;
  std::vector<ResultRow> rows;
  for (double nd : p.get_list("n", {50, 100, 200, 400})) {
    const int n = static_cast<int>(nd);
    Rng r = ctx.rng.substream(static_cast<std::uint64_t>(n));
    auto train = gen_interval_regression(n, r, omega);
    auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::kernel_ridge(lambda), train.inputs, GaussianKernel(sigma)));
    auto mse = [&](const Vec& f) {
      double s = 0;
      for (int g = 0; g < G; ++g) s += std::pow(f[g] - std::sin(omega * Q(g, 0)), 2);
      return s / G;
    };
    PartialConfig cfg;
    cfg.explicit_grid = true, cfg.grid_lo = -6, cfg.grid_hi = 6;
    for (auto pr : {Principle::infimum, Principle::average}) {
      PartialEstimator est(w, LossSpec::squared(), pr, cfg);
      rows.push_back({ctx.trial, nd, pr == Principle::infimum ? "IL" : "AC", "mse", mse(infer_interval_batch(est, train, Q))});
    }
    auto dis = disambiguate_intervals(DisambiguationProblem(*w, train.constraints, LossSpec::squared()));
    Vec f(G);
    for (int g = 0; g < G; ++g) f[g] = supervised_inference(w->at(Q.row(g).transpose()), dis.labels);
    rows.push_back({ctx.trial, nd, "DF", "mse", mse(f)});
  }
  return rows;
}

// ---- laplacian

inline std::vector<ResultRow> laplacian_gaussians(TrialContext& ctx) {
  const auto& p = ctx.params;
  const int d = p.get_int("d", 10), anchors = p.get_int("p", 50);
  const double delta = p.get_double("delta", 3.0), frac = p.get_double("labeled_fraction", 0.1);
  std::vector<ResultRow> rows;
  for (double nd : p.get_list("n", {100, 200, 400})) {
    const int n = static_cast<int>(nd), nl = std::max(2, static_cast<int>(std::lround(frac * n)));
    Rng r = ctx.rng.substream(static_cast<std::uint64_t>(n));
    auto s = gen_two_gaussians(n, nl, r, d, delta);
    const double sig = graph_bandwidth(n, d);
    GaussianKernel k(sig);
    Vec y(nl);
    for (int i = 0; i < nl; ++i) y[i] = s.labels[i];
    auto err = [&](const Vec& f, int offset) {
      int e = 0;
      for (int i = nl; i < n; ++i) e += (f[i - offset] >= 0 ? 1 : -1) != s.labels[i];
      return static_cast<double>(e) / (n - nl);
    };
    auto t0 = std::chrono::steady_clock::now();
    auto a = select_anchors(s.inputs, std::min(anchors, n), r, k);
    SpectralConfig cfg;
    cfg.filter = SpectralFilter::tikhonov(p.get_double("lambda", 1.0));
    cfg.mu = p.get_double("mu", -1);
    auto model = fit_spectral(k, s.inputs, y, a.points, cfg);
    rows.push_back({ctx.trial, nd, "kernel", "error", err(model.predict_scalar(s.inputs), 0)});
    if (ctx.timing) rows.push_back({ctx.trial, nd, "kernel", "seconds", elapsed(t0)});
    t0 = std::chrono::steady_clock::now();
    try {
      Vec g = graph_laplacian_baseline(sig, s.inputs, y);
      rows.push_back({ctx.trial, nd, "graph", "error", err(g, nl)});
    } catch (const DisconnectedGraphError&) {
      rows.push_back({ctx.trial, nd, "graph", "disconnected", 1.0});
    }
    if (ctx.timing) rows.push_back({ctx.trial, nd, "graph", "seconds", elapsed(t0)});
  }
  return rows;
}

inline std::vector<CheckResult> check_laplacian(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  const double n = p.get_list("n", {100, 200, 400}).back(), thr = p.get_double("threshold", 0.25);
  const auto& k = stat_of(s, "kernel", "error", n);
  auto it = s.find({"graph", "error", n});
  const double g = it == s.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.mean;
  return {{"laplacian vs graph baseline", k.mean <= thr && g > thr,
           "n=" + fmt(n) + ": kernel " + fmt(k.mean) + " (<= " + fmt(thr) + "), graph " + fmt(g) + " (> " + fmt(thr) + ")"}};
}

inline std::vector<ResultRow> laplacian_eigenfunctions(TrialContext& ctx) {
  const auto& p = ctx.params;
  const int n = p.get_int("n", 2000), count = p.get_int("count", 4);
  auto ds = gen_concentric_circles(n, ctx.rng);
  Mat X = ds.inputs.topRows(n);
  std::vector<int> group(ds.truths.begin(), ds.truths.begin() + n);
  GaussianKernel k(p.get_double("sigma", 0.5));
  auto a = select_anchors(X, std::min(p.get_int("p", 500), n), ctx.rng, k);
  auto m = fit_eigenbasis(FeatureBasis(k, a.points, p.get_bool("derivatives", true)), X, p.get_double("mu", 1e-4));
  auto ef = first_eigenfunctions(m, count, X);
  std::vector<ResultRow> rows;
  double worst = 0;
  for (int i = 0; i < count; ++i) {
    const double r = variance_ratio(ef[i], group);
    worst = std::max(worst, r);
    rows.push_back({ctx.trial, double(i + 1), "spectral", "varianceRatio", r});
  }
  rows.push_back({ctx.trial, 0, "spectral", "worstRatio", worst});
  return rows;
}

inline std::vector<CheckResult> check_eigenfunctions(const std::vector<ResultRow>& rows, const Params& p) {
  const auto& st = stat_of(summarize(rows), "spectral", "worstRatio", 0);
  const double thr = p.get_double("threshold", 1e-2);
  return {{"laplacian eigenfunctions", st.max < thr, "worst within/between variance ratio " + fmt(st.max) + " (< " + fmt(thr) + ")"}};
}

// ---- active labeling

inline Vec scalar(double v) { return Vec::Constant(1, v); }

inline std::vector<double> horizons(const Params& p, const std::vector<double>& def) {
  auto T = p.get_list("T", def);
  for (double t : T)
    if (t < 0 || t != std::floor(t)) throw ConfigError("T values must be non-negative integers");
  return T;
}

inline std::vector<ResultRow> sgd_rate(TrialContext& ctx) {
  const auto& p = ctx.params;
  GaussianKernel k(p.get_double("sigma", 0.05));
  const Mat A = unit_grid(p.get_int("p", 50)), grid = unit_grid(p.get_int("grid", 1000));
  const auto comp = sin_comparator(k, A);
  std::vector<ResultRow> rows;
  for (double Td : horizons(p, {1e3, 3e3, 1e4, 3e4, 1e5})) {
    const long T = static_cast<long>(Td);
    Rng rng = ctx.rng.substream(static_cast<std::uint64_t>(T));
    ActiveModel m(k, A, 1, T > 0 ? theory_constant_step(comp.M, comp.kappa, T) : StepSchedule::constant(0), 0,
                  Averaging::running_mean);
    for (long t = 0; t < T; ++t) {
      const double x = SinTask::sample_x(rng);
      const Vec y = scalar(SinTask::target(x));
      median_sgd_step(m, scalar(x), [&](const WeakQuery& q) { return simulated_answer(y, q); }, rng);
    }
    rows.push_back({ctx.trial, Td, "median", "risk", sin_risk(m, grid)});
  }
  return rows;
}

inline std::vector<CheckResult> check_sgd_rate(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  std::vector<double> lx, ly;
  for (double T : horizons(p, {1e3, 3e3, 1e4, 3e4, 1e5}))
    if (T > 0) lx.push_back(std::log(T)), ly.push_back(std::log(stat_of(s, "median", "risk", T).mean));
  if (lx.size() < 2) return {{"sgd rate", false, "need two positive horizons"}};
  const double slope = loglog_slope(lx, ly);
  const double lo = p.get_double("slope_min", -0.65), hi = p.get_double("slope_max", -0.35);
  return {{"sgd rate", slope >= lo && slope <= hi, "log-log slope " + fmt(slope) + " (want [" + fmt(lo) + ", " + fmt(hi) + "])"}};
}

// one active and one passive run per trial, paired on the x stream, logged at checkpoints
inline std::vector<ResultRow> sgd_compare(TrialContext& ctx, bool classification) {
  const auto& p = ctx.params;
  GaussianKernel k(p.get_double("sigma", 0.05));
  const Mat A = unit_grid(p.get_int("p", 50)), grid = unit_grid(p.get_int("grid", 1000));
  ClassStream task;
  task.m = p.get_int("m", 10);
  task.eps = p.get_double("eps", 1.0 / 20);
  const int outs = classification ? task.m : 1;
  auto T = horizons(p, {1e2, 3e2, 1e3, 3e3, 1e4});
  std::sort(T.begin(), T.end());
  ActiveModel act(k, A, outs, StepSchedule::decaying(p.get_double("gamma0", 1.0)), 0, Averaging::running_mean), pas = act;
  Rng xa = ctx.rng.substream(0), xp = ctx.rng.substream(0), qa = ctx.rng.substream(1), qp = ctx.rng.substream(1);
  auto risk = [&](const ActiveModel& m) { return classification ? class_risk(m, task, grid) : sin_risk(m, grid); };
  std::vector<ResultRow> rows;
  long t = 0;
  for (double Td : T) {
    for (; t < static_cast<long>(Td); ++t) {
      const double x1 = xa.uniform(), x2 = xp.uniform();
      if (classification) {
        const int l1 = task.sample_label(x1, xa), l2 = task.sample_label(x2, xp);
        median_sgd_step(act, scalar(x1), [&](const WeakQuery& q) { return simulated_answer(l1, task.m, q); }, qa);
        passive_classification_step(pas, scalar(x2), [&](const WeakQuery& q) { return simulated_answer(l2, task.m, q); }, qp);
      } else {
        const Vec y1 = scalar(SinTask::target(x1)), y2 = scalar(SinTask::target(x2));
        median_sgd_step(act, scalar(x1), [&](const WeakQuery& q) { return simulated_answer(y1, q); }, qa);
        passive_regression_step(pas, scalar(x2), [&](const WeakQuery& q) { return simulated_answer(y2, q); }, qp);
      }
    }
    rows.push_back({ctx.trial, Td, "active", "risk", risk(act)});
    rows.push_back({ctx.trial, Td, "passive", "risk", risk(pas)});
  }
  return rows;
}

inline std::vector<CheckResult> check_sgd_compare(const std::vector<ResultRow>& rows, const Params&, const std::string& what) {
  const auto s = summarize(rows);
  double T = 0;
  for (const auto& r : rows) T = std::max(T, r.param);
  const double a = stat_of(s, "active", "risk", T).mean, b = stat_of(s, "passive", "risk", T).mean;
  return {{"active <= passive (" + what + ")", a <= b, "T=" + fmt(T) + ": active " + fmt(a) + " vs passive " + fmt(b)}};
}

// ---- k-NN rates

// 1-D k-NN vote with a sorted window; a tied vote predicts +1
class Knn1d {
 public:
  Knn1d(const Mat& X, const std::vector<int>& y) {
    const int n = static_cast<int>(y.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return X(a, 0) < X(b, 0); });
    xs_.resize(n);
    cs_.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) xs_[i] = X(idx[i], 0), cs_[i + 1] = cs_[i] + y[idx[i]];
  }

  int predict(double x, int k) const {
    const int n = static_cast<int>(xs_.size());
    k = std::min(k, n);
    int r = static_cast<int>(std::lower_bound(xs_.begin(), xs_.end(), x) - xs_.begin()), l = r;
    while (r - l < k) {
      if (l == 0) ++r;
      else if (r == n) --l;
      else if (x - xs_[l - 1] <= xs_[r] - x) --l;
      else ++r;
    }
    return cs_[r] - cs_[l] >= 0 ? 1 : -1;
  }

 private:
  std::vector<double> xs_;
  std::vector<int> cs_;
};

inline int knn_rate_k(int n, double exponent) { return std::max(1, static_cast<int>(std::floor(std::pow(n, exponent) + 1e-9))); }

inline std::vector<ResultRow> knn_rates(TrialContext& ctx) {
  const auto& p = ctx.params;
  const double alpha = p.get_double("alpha", 1.0), expo = p.get_double("k_exponent", 2.0 / 3.0);
  const int G = p.get_int("grid", 2000);
  std::vector<ResultRow> rows;
  for (double nd : p.get_list("n", {1e2, 1e3, 1e4})) {
    const int n = static_cast<int>(nd), k = knn_rate_k(n, expo);
    Rng r = ctx.rng.substream(static_cast<std::uint64_t>(n));
    auto b = gen_knn_rates_problem(alpha, n, r);
    Knn1d knn(b.inputs, b.labels);
    double ex = 0;
    for (int g = 0; g < G; ++g) {
      const double x = -1 + (g + 0.5) * 2.0 / G;
      if (knn.predict(x, k) != (x >= 0 ? 1 : -1)) ex += std::abs(knn_rates_target(x, alpha));
    }
    rows.push_back({ctx.trial, nd, "knn", "excessRisk", ex / G});
  }
  return rows;
}

inline std::vector<CheckResult> check_knn(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  const auto ns = p.get_list("n", {1e2, 1e3, 1e4});
  std::vector<double> lx, ly;
  bool dec = true;
  std::string detail;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double e = stat_of(s, "knn", "excessRisk", ns[i]).mean;
    if (i > 0 && !(e < std::exp(ly.back()))) dec = false;
    lx.push_back(std::log(ns[i])), ly.push_back(std::log(e));
    detail += "n=" + fmt(ns[i]) + ":" + fmt(e) + " ";
  }
  const double slope = loglog_slope(lx, ly), thr = p.get_double("slope_max", -0.3);
  return {{"k-NN rates", dec && slope <= thr,
           detail + (dec ? "strictly decreasing" : "not decreasing") + ", slope " + fmt(slope) + " (<= " + fmt(thr) + ")"}};
}

// ---- constants and the median surrogate

inline std::vector<ResultRow> constants(TrialContext& ctx) {
  const auto& p = ctx.params;
  const double M = p.get_double("M", 1.0);
  const long samples = p.get_long("samples", 1000000);
  std::vector<ResultRow> rows;
  for (double md : p.get_list("m", {1, 2, 3, 5, 10, 50})) {
    const int m = static_cast<int>(md);
    Rng r = ctx.rng.substream(static_cast<std::uint64_t>(m));
    const auto mc = directional_constants(m, M, r, samples);
    const auto cf = directional_constants(m, M);
    rows.push_back({ctx.trial, md, "monteCarlo", "c2", mc.c2});
    rows.push_back({ctx.trial, md, "monteCarlo", "c2_se", mc.c2_se});
    rows.push_back({ctx.trial, md, "monteCarlo", "c1", mc.c1});
    rows.push_back({ctx.trial, md, "monteCarlo", "c1_se", mc.c1_se});
    rows.push_back({ctx.trial, md, "closedForm", "c2", cf.c2});
    rows.push_back({ctx.trial, md, "closedForm", "c1", cf.c1});
    rows.push_back({ctx.trial, md, "printed", "c2", c2_printed_formula(m)});
  }
  return rows;
}

inline std::vector<CheckResult> check_constants(const std::vector<ResultRow>& rows, const Params& p) {
  const auto s = summarize(rows);
  bool ok = true;
  std::string detail;
  double worst = 0;
  for (double m : p.get_list("m", {1, 2, 3, 5, 10, 50})) {
    for (const auto& r : rows) {
      if (r.param != m || r.method != "monteCarlo" || r.metric != "c2") continue;
      double se = 0;
      for (const auto& q : rows)
        if (q.trial == r.trial && q.param == m && q.method == "monteCarlo" && q.metric == "c2_se") se = q.value;
      const double diff = std::abs(r.value - stat_of(s, "closedForm", "c2", m).mean);
      // m = 1: |u| = 1 exactly, the estimate has no spread
      const double z = se > 0 ? diff / se : (diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
      worst = std::max(worst, z);
      if (!(z <= 3.0)) ok = false;
    }
  }
  const double c3 = c2_closed_form(3);
  const bool half = std::abs(c3 - 0.5) <= 1e-12;
  detail = "max |MC - closed form| = " + fmt(worst) + " se (<= 3); c2(3) = " + fmt(c3, 12);
  return {{"directional constants", ok && half, detail}};
}

inline std::vector<ResultRow> median_surrogate(TrialContext& ctx) {
  const auto& p = ctx.params;
  const int draws = p.get_int("draws", 100), G = p.get_int("grid", 300);
  const Mat E = Mat::Identity(3, 3);
  int optimal = 0, agree = 0, strict = 0;
  while (strict < draws) {
    Vec q(3);
    for (int i = 0; i < 3; ++i) q[i] = -std::log(ctx.rng.uniform(1e-12, 1.0));
    q /= q.sum();
    Vec sorted = q;
    std::sort(sorted.begin(), sorted.end());
    if (!(sorted[2] > sorted[1])) continue;  // strict mode only
    ++strict;
    const Vec z = geometric_median(E, q);
    double best = std::numeric_limits<double>::infinity();
    Vec arg;
    for (int i = 0; i <= G; ++i)
      for (int j = 0; i + j <= G; ++j) {
        Vec c(3);
        c << double(i) / G, double(j) / G, double(G - i - j) / G;
        const double v = weighted_distance_sum(E, q, c);
        if (v < best) best = v, arg = c;
      }
    optimal += weighted_distance_sum(E, q, z) <= best + 1e-12;
    agree += median_surrogate_classify(z) == median_surrogate_classify(q);
  }
  Vec ce(3);
  ce << 1, 1, 2 * std::cos(std::numbers::pi / 6);
  ce /= ce.sum();
  const Vec zc = geometric_median(E, ce);
  return {{ctx.trial, 0, "geometricMedian", "optimalFraction", double(optimal) / draws},
          {ctx.trial, 0, "geometricMedian", "argmaxAgreement", double(agree) / draws},
          {ctx.trial, 0, "counterexample", "distanceToE3", (zc - E.col(2)).norm()},
          {ctx.trial, 0, "counterexample", "label", double(median_surrogate_classify(zc))}};
}

inline std::vector<CheckResult> check_median(const std::vector<ResultRow>& rows, const Params&) {
  const auto s = summarize(rows);
  const double opt = stat_of(s, "geometricMedian", "optimalFraction", 0).min,
               ag = stat_of(s, "geometricMedian", "argmaxAgreement", 0).min,
               dist = stat_of(s, "counterexample", "distanceToE3", 0).max;
  return {{"median surrogate", opt == 1.0 && ag == 1.0 && dist <= 1e-9,
           "optimal vs grid " + fmt(opt) + ", argmax agreement " + fmt(ag) + ", counterexample |z - e3| = " + fmt(dist)}};
}

}  // namespace recipes

inline const std::vector<Recipe>& recipe_registry() {
  using namespace recipes;
  static const std::vector<Recipe> all = [] {
    std::vector<Recipe> r;
    r.push_back({"pointwise-counterexample", "three-label instance where the infimum and average principles disagree", 1, "label",
                 false, false, pointwise_counterexample, check_pointwise});
    r.push_back({"mfas-exactness", "LP relaxation vs brute force on random Kendall objectives", 1, "matchFraction", false, false,
                 mfas_exactness, check_mfas});
    r.push_back({"il-corruption", "infimum vs average loss under skewed corruption (LIBSVM file via data=path)", 20, "error",
                 false, false, [](TrialContext& c) { return corruption_trial(c, false); }, check_il_corruption});
    r.push_back({"df-corruption", "disambiguation vs infimum and average loss under corruption", 10, "error", false, false,
                 [](TrialContext& c) { return corruption_trial(c, true); }, nullptr});
    r.push_back({"df-intervals", "interval regression on sin(10x)", 10, "mse", true, true, df_intervals, nullptr});
    r.push_back({"df-circles", "disambiguation on four concentric circles", 3, "accuracy", false, false, df_circles, check_circles});
    r.push_back({"laplacian-gaussians", "kernel spectral method vs graph Laplacian on two Gaussians", 20, "error", true, false,
                 laplacian_gaussians, check_laplacian});
    r.push_back({"laplacian-eigenfunctions", "leading generalized eigenfunctions on concentric circles", 1, "varianceRatio",
                 false, true, laplacian_eigenfunctions, check_eigenfunctions});
    r.push_back({"sgd-rate", "median SGD on sin with the constant theory step, one run per horizon", 20, "risk", true, true,
                 sgd_rate, check_sgd_rate});
    r.push_back({"sgd-regression", "active median SGD vs passive half-line queries on sin", 20, "risk", true, true,
                 [](TrialContext& c) { return sgd_compare(c, false); },
                 [](const std::vector<ResultRow>& rows, const Params& p) { return check_sgd_compare(rows, p, "sin"); }});
    r.push_back({"sgd-classification", "active median SGD vs passive membership queries, m-class stream", 20, "risk", true, true,
                 [](TrialContext& c) { return sgd_compare(c, true); },
                 [](const std::vector<ResultRow>& rows, const Params& p) { return check_sgd_compare(rows, p, "stream"); }});
    r.push_back({"knn-rates", "k-NN excess risk against n", 100, "excessRisk", true, true, knn_rates, check_knn});
    r.push_back({"constants", "Monte Carlo directional constants against closed forms", 1, "c2", false, false, constants,
                 check_constants});
    r.push_back({"median-surrogate", "geometric median decoding on the simplex", 1, "argmaxAgreement", false, false,
                 median_surrogate, check_median});
    return r;
  }();
  return all;
}

inline const Recipe& find_recipe(const std::string& name) {
  for (const auto& r : recipe_registry())
    if (r.name == name) return r;
  throw ConfigError("unknown recipe: " + name);
}

// trial t always uses Rng(seed).substream(t); results come back in trial order
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  const auto& recipe = find_recipe(cfg.recipe);
  const int trials = cfg.trials > 0 ? cfg.trials : recipe.default_trials;
  if (cfg.trials < 0) throw ConfigError("trials must be >= 1");
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, trials);
  std::vector<std::vector<ResultRow>> out(trials);
  std::vector<std::exception_ptr> errors(trials);
  std::atomic<int> next{0};
  const Rng root(cfg.seed);
  auto work = [&] {
    for (int t; (t = next++) < trials;) {
      try {
        TrialContext ctx{cfg.params, t, root.substream(static_cast<std::uint64_t>(t)), cfg.timing};
        out[t] = recipe.run(ctx);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<ResultRow> rows;
  for (auto& v : out) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

inline std::vector<CheckResult> check_experiment(const std::string& recipe, const std::vector<ResultRow>& rows,
                                                 const Params& params) {
  const auto& r = find_recipe(recipe);
  if (!r.check) return {};
  return r.check(rows, params);
}

}  // namespace weaklearn
