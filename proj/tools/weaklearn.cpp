// weaklearn command line: experiments, the labeling service, simulated sessions, data generators.

#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "weaklearn/experiments.hpp"
#include "weaklearn/protocol.hpp"
#include "weaklearn/server.hpp"

using namespace weaklearn;

namespace {

constexpr int kConfigError = 2;
constexpr int kAssertFailed = 3;

struct Global {
  std::uint64_t seed = 0;
  int trials = 0;
  std::string out;
  std::string config;
  std::vector<std::string> sets;  // key=value overrides
};

Params gather_params(const Global& g) {
  Params p;
  if (!g.config.empty()) p = parse_config_file(g.config);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got " + kv);
    p.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return p;
}

// output file or stdout
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw ConfigError("cannot write " + path);
  }
  std::ostream& os() { return file_ ? *file_ : std::cout; }
  void finish(const std::string& what) {
    os().flush();
    if (!os()) throw std::runtime_error("write failed: " + what);
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

int report_checks(const std::vector<CheckResult>& checks) {
  bool ok = true;
  for (const auto& c : checks) {
    std::cerr << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.pass;
  }
  if (checks.empty()) std::cerr << "no thresholds defined for this recipe\n";
  return ok ? 0 : kAssertFailed;
}

// ---- session config from key=value pairs

SessionConfig session_config(const Params& p, std::uint64_t seed, bool seed_given) {
  Json j = Json::object();
  for (const auto& [k, v] : p.entries()) {
    if (k == "bind") continue;
    if (k == "strategy" || k == "schedule" || k == "averaging") j[k] = v;
    else if (k == "anchorCount" || k == "outputs" || k == "budget") j[k] = p.get_long(k, 0);
    else if (k == "seed") j[k] = static_cast<std::uint64_t>(p.get_long(k, 0));
    else if (k == "sigma" || k == "gamma0" || k == "ridge" || k == "M") j[k] = p.get_double(k, 0);
    else throw ConfigError("unknown session key: " + k);
  }
  if (seed_given) j["seed"] = seed;
  try {
    return session_config_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

// ---- data generators

Json constraint_to_json(const ConstraintSet& s) {
  using K = ConstraintSet::Kind;
  auto bound = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  switch (s.kind()) {
    case K::full: return {{"kind", "full"}};
    case K::finite: return {{"kind", "finite"}, {"labels", s.labels()}};
    case K::tags: return {{"kind", "tags"}, {"positive", s.positive_tags()}, {"negative", s.negative_tags()}};
    case K::box: {
      Json boxes = Json::array();
      for (const auto& b : s.box_list()) {
        Json lo = Json::array(), hi = Json::array();
        for (Eigen::Index i = 0; i < b.lower.size(); ++i) lo.push_back(bound(b.lower[i])), hi.push_back(bound(b.upper[i]));
        boxes.push_back({{"lower", lo}, {"upper", hi}});
      }
      return {{"kind", "box"}, {"boxes", boxes}};
    }
    case K::kendallPartial: {
      Json pairs = Json::array();
      for (const auto& [k, v] : s.fixed_pairs()) pairs.push_back({k.first, k.second, v});
      return {{"kind", "kendallPartial"}, {"pairs", pairs}};
    }
    case K::halfspaceHistory: {
      Json hs = Json::array();
      for (const auto& h : s.halfspace_list()) hs.push_back({{"u", vec_to_json(h.u)}, {"offset", h.offset}, {"bit", h.bit}});
      return {{"kind", "halfspaceHistory"}, {"halfspaces", hs}};
    }
  }
  return nullptr;
}

Json row_json(const Mat& X, Eigen::Index i) { return vec_to_json(X.row(i).transpose()); }

template <class Y>
void write_weak(std::ostream& os, const WeakDataset<Y>& d) {
  for (int i = 0; i < d.n(); ++i) {
    Json j{{"x", row_json(d.inputs, i)}, {"set", constraint_to_json(d.constraints[i])}};
    if (d.has_truths()) j["truth"] = d.truths[i];
    os << j.dump() << '\n';
  }
}

void write_labeled(std::ostream& os, const Mat& X, const std::vector<int>& y) {
  std::vector<LibsvmRecord> recs;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    LibsvmRecord r;
    r.label = y[i];
    for (Eigen::Index j = 0; j < X.cols(); ++j) r.features.push_back({static_cast<int>(j) + 1, X(i, j)});
    recs.push_back(std::move(r));
  }
  write_libsvm(os, recs);
}

const std::vector<std::string> kGenerators{"interval-regression", "concentric-circles", "two-gaussians", "ranking-lines",
                                           "knn-rates", "multilabel-hamming", "surrogate"};

void generate(const std::string& name, const Params& p, Rng& rng, std::ostream& os) {
  const int n = p.get_int("n", 100);
  if (name == "interval-regression") {
    write_weak(os, gen_interval_regression(n, rng, p.get_double("omega", 10)));
  } else if (name == "concentric-circles") {
    write_weak(os, gen_concentric_circles(n, rng));
  } else if (name == "two-gaussians") {
    const int nl = p.get_int("nl", n / 10);
    auto s = gen_two_gaussians(n, nl, rng, p.get_int("d", 10), p.get_double("delta", 3));
    for (int i = 0; i < n; ++i) {
      Json j{{"x", row_json(s.inputs, i)}, {"truth", s.labels[i]}};
      j["label"] = i < nl ? Json(s.labels[i]) : Json(nullptr);
      os << j.dump() << '\n';
    }
  } else if (name == "ranking-lines") {
    write_weak(os, gen_ranking_lines(p.get_int("m", 5), n, p.get_double("c", 0.5), rng));
  } else if (name == "knn-rates") {
    auto b = gen_knn_rates_problem(p.get_double("alpha", 1), n, rng);
    write_labeled(os, b.inputs, b.labels);
  } else if (name == "multilabel-hamming") {
    write_weak(os, gen_multilabel_hamming(n, p.get_int("m", 6), p.get_int("d", 5), p.get_double("c", 0.5), rng));
  } else if (name == "surrogate") {
    auto c = gen_unbalanced_surrogate(n, rng, p.get_int("d", 5));
    write_labeled(os, c.inputs, c.labels);
  } else {
    throw ConfigError("unknown generator: " + name);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--trials", g.trials, "number of trials (default: the recipe's)")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file (default stdout)");
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--set", g.sets, "key=value parameter override (repeatable)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a named experiment recipe");
  exp->require_subcommand(1);
  exp->add_subcommand("list", "list recipes");
  auto* run = exp->add_subcommand("run", "run a recipe and write CSV");
  std::string recipe, svg;
  int threads = 0;
  bool timing = false, assert_mode = false;
  run->add_option("recipe", recipe, "recipe name")->required();
  run->add_option("--svg", svg, "also write an SVG plot");
  run->add_option("--threads", threads, "worker threads (default: hardware)");
  run->add_flag("--timing", timing, "add wall-clock rows");
  run->add_flag("--assert", assert_mode, "check the recipe's thresholds; exit 3 on failure");

  // serve
  auto* serve = app.add_subcommand("serve", "serve /session and /healthz");
  std::string bind;
  serve->add_option("--bind", bind, "host:port (default WEAKLEARN_BIND or 127.0.0.1:8080)");

  // label simulate
  auto* label = app.add_subcommand("label", "labeling sessions");
  label->require_subcommand(1);
  auto* sim = label->add_subcommand("simulate", "run a session against the simulated sin oracle and write its log");
  bool replay = false;
  sim->add_flag("--replay", replay, "rebuild the model from the written log and compare");

  // data gen
  auto* data = app.add_subcommand("data", "synthetic data");
  data->require_subcommand(1);
  auto* gen = data->add_subcommand("gen", "write a generated dataset (JSONL, or LIBSVM for labelled data)");
  std::string generator;
  gen->add_option("generator", generator, "generator name")->required()->check(CLI::IsMember(kGenerators));

  // constants check
  auto* cons = app.add_subcommand("constants", "directional constants");
  cons->require_subcommand(1);
  auto* ccheck = cons->add_subcommand("check", "Monte Carlo against closed forms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    Params params = gather_params(g);
    const bool seed_given = seed_opt->count() > 0;
    std::uint64_t seed = g.seed;
    if (!seed_given && params.has("seed")) seed = static_cast<std::uint64_t>(params.get_long("seed", 0));

    if (exp->got_subcommand("list")) {
      for (const auto& r : recipe_registry())
        std::cout << r.name << " (" << r.default_trials << " trials): " << r.description << '\n';
      return 0;
    }

    if (exp->got_subcommand(run) || *ccheck) {
      ExperimentConfig cfg;
      cfg.recipe = *ccheck ? "constants" : recipe;
      cfg.seed = seed;
      cfg.trials = g.trials > 0 ? g.trials : params.get_int("trials", 0);
      cfg.threads = threads > 0 ? threads : params.get_int("threads", 0);
      cfg.timing = timing || params.get_bool("timing", false);
      cfg.params = params;
      const auto& r = find_recipe(cfg.recipe);
      Output out(g.out);
      std::unique_ptr<std::ofstream> svg_file;
      if (!svg.empty()) {
        svg_file = std::make_unique<std::ofstream>(svg);
        if (!*svg_file) throw ConfigError("cannot write " + svg);
      }
      const auto rows = run_experiment(cfg);
      write_csv(out.os(), rows);
      out.finish("csv");
      if (svg_file) write_svg(*svg_file, rows, {r.plot_metric, r.name, r.log_x, r.log_y});
      if (assert_mode || *ccheck) return report_checks(check_experiment(cfg.recipe, rows, params));
      return 0;
    }

    if (*serve) {
      if (bind.empty()) bind = params.get("bind", "");
      const BindAddress addr = bind.empty() ? default_bind() : parse_bind(bind);
      const SessionConfig cfg = session_config(params, seed, seed_given);
      SessionServer server([cfg](std::uint64_t id) { return sin_protocol_session(cfg, "session-" + std::to_string(id)); },
                           addr);
      std::cerr << "listening on " << addr.host << ':' << server.port() << '\n';
      server.run();
      return 0;
    }

    if (*sim) {
      SessionConfig cfg = session_config(params, seed, seed_given);
      auto s = sin_stream(cfg.budget, cfg.seed);
      IndexedOracle oracle = [&](int i, const WeakQuery& q) { return s.oracle.answer(i, q); };
      auto [model, state] = run_session(cfg, s.stream, oracle, cfg.budget);
      Output out(g.out);
      write_log(out.os(), state.log);
      out.finish("log");
      const double risk = sin_risk(model, unit_grid(1000));
      std::cerr << "steps " << state.t << ", risk " << risk << '\n';
      if (replay) {
        if (g.out.empty() || g.out == "-") throw ConfigError("--replay needs --out");
        std::ifstream in(g.out);
        const auto rebuilt = replay_model(cfg, read_log(in));
        const bool same = rebuilt.coefficients() == model.coefficients();
        std::cerr << "replay " << (same ? "matches" : "DIFFERS") << '\n';
        return same ? 0 : 1;
      }
      return 0;
    }

    if (*gen) {
      Rng rng(seed);
      Output out(g.out);
      generate(generator, params, rng, out.os());
      out.finish("data");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
