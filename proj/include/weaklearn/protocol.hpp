#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "weaklearn/active.hpp"

namespace weaklearn {

using Json = nlohmann::json;

struct MissingLabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StreamExhaustedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OracleDisconnected : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ReplayMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Protocol rule violations; code is sent to the client verbatim.
struct ProtocolError : std::runtime_error {
  std::string code;
  ProtocolError(std::string c, const std::string& what) : std::runtime_error(what), code(std::move(c)) {}
};

// ---- oracle ----

class SimulatedOracle {
 public:
  static SimulatedOracle regression(std::vector<Vec> labels) {
    SimulatedOracle o;
    o.vec_ = std::move(labels);
    return o;
  }
  static SimulatedOracle classification(std::vector<int> labels, int m) {
    SimulatedOracle o;
    o.cls_ = std::move(labels);
    o.m_ = m;
    return o;
  }

  std::size_t size() const { return m_ > 0 ? cls_.size() : vec_.size(); }

  int answer(int index, const WeakQuery& q) const {
    if (index < 0 || static_cast<std::size_t>(index) >= size())
      throw MissingLabelError("no hidden label for sample " + std::to_string(index));
    if (m_ > 0) return simulated_answer(cls_[index], m_, q);
    return simulated_answer(vec_[index], q);
  }

 private:
  std::vector<Vec> vec_;
  std::vector<int> cls_;
  int m_ = 0;
};

// Answers as a function of the stream index and the query.
using IndexedOracle = std::function<int(int index, const WeakQuery&)>;

// ---- stream ----

class DataStream {
 public:
  DataStream() = default;
  explicit DataStream(Mat inputs) : inputs_(std::move(inputs)), order_(inputs_.rows()) {
    for (int i = 0; i < inputs_.rows(); ++i) order_[i] = i;
  }
  DataStream(Mat inputs, Rng& rng) : inputs_(std::move(inputs)), order_(rng.permutation(static_cast<int>(inputs_.rows()))) {}

  bool has_next() const { return pos_ < order_.size(); }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return order_.size(); }
  const Mat& inputs() const { return inputs_; }

  int next() {
    if (!has_next()) throw StreamExhaustedError("data stream exhausted after " + std::to_string(pos_) + " samples");
    return order_[pos_++];
  }

 private:
  Mat inputs_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

// ---- configuration ----

struct SessionConfig {
  Strategy strategy = Strategy::median;
  double sigma = 0.05;
  Mat anchors = unit_grid(50);
  int outputs = 1;
  StepSchedule schedule = StepSchedule::decaying(1.0);
  double ridge = 0;
  Averaging averaging = Averaging::running_mean;
  double M = 1.0;  // least-squares bound
  long budget = 100;
  std::uint64_t seed = 0;

  ActiveModel make_model() const {
    return ActiveModel(GaussianKernel(sigma), anchors, outputs, schedule, ridge, averaging);
  }
};

inline Json matrix_to_json(const Mat& A) {
  Json rows = Json::array();
  for (int i = 0; i < A.rows(); ++i) {
    Json r = Json::array();
    for (int j = 0; j < A.cols(); ++j) r.push_back(A(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Mat matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array of rows");
  const std::size_t cols = j.at(0).size();
  Mat A(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw std::invalid_argument("ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) A(i, c) = j[i][c].get<double>();
  }
  return A;
}

inline Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector must be an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

inline Json to_json(const SessionConfig& c) {
  return Json{{"strategy", strategy_name(c.strategy)},
              {"sigma", c.sigma},
              {"anchors", matrix_to_json(c.anchors)},
              {"outputs", c.outputs},
              {"schedule", c.schedule.kind == StepSchedule::Kind::constant ? "constant" : "decaying"},
              {"gamma0", c.schedule.gamma0},
              {"ridge", c.ridge},
              {"averaging", c.averaging == Averaging::last ? "last" : "runningMean"},
              {"M", c.M},
              {"budget", c.budget},
              {"seed", c.seed}};
}

// Missing keys keep their defaults; "anchorCount": p places p grid anchors on [0, 1].
inline SessionConfig session_config_from_json(const Json& j) {
  SessionConfig c;
  if (!j.is_object()) throw std::invalid_argument("session config must be a JSON object");
  if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
  if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
  if (j.contains("anchors")) c.anchors = matrix_from_json(j["anchors"]);
  else if (j.contains("anchorCount")) c.anchors = unit_grid(j["anchorCount"].get<int>());
  if (j.contains("outputs")) c.outputs = j["outputs"].get<int>();
  double g0 = j.value("gamma0", c.schedule.gamma0);
  const std::string kind = j.value("schedule", std::string("decaying"));
  if (kind == "constant") c.schedule = StepSchedule::constant(g0);
  else if (kind == "decaying") c.schedule = StepSchedule::decaying(g0);
  else throw std::invalid_argument("unknown schedule: " + kind);
  if (j.contains("ridge")) c.ridge = j["ridge"].get<double>();
  if (j.contains("averaging")) {
    const std::string a = j["averaging"].get<std::string>();
    if (a == "last") c.averaging = Averaging::last;
    else if (a == "runningMean") c.averaging = Averaging::running_mean;
    else throw std::invalid_argument("unknown averaging: " + a);
  }
  if (j.contains("M")) c.M = j["M"].get<double>();
  if (j.contains("budget")) c.budget = j["budget"].get<long>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (c.budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (!(c.sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  return c;
}

// ---- queries on the wire ----

inline Json query_to_json(const WeakQuery& q) {
  Json j{{"kind", query_kind_name(q.kind)}};
  if (q.kind == WeakQuery::Kind::membership) {
    j["set"] = q.set;
  } else {
    j["z"] = vec_to_json(q.z);
    j["u"] = vec_to_json(q.u);
    if (q.kind == WeakQuery::Kind::shifted_halfspace) j["v"] = q.v;
  }
  return j;
}

inline WeakQuery query_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "membership") return WeakQuery::membership(j.at("set").get<std::vector<int>>());
  if (kind == "halfspace") return WeakQuery::halfspace(vec_from_json(j.at("z")), vec_from_json(j.at("u")));
  if (kind == "shiftedHalfspace")
    return WeakQuery::shifted(vec_from_json(j.at("z")), vec_from_json(j.at("u")), j.at("v").get<double>());
  throw std::invalid_argument("unknown query kind: " + kind);
}

inline bool same_query(const WeakQuery& a, const WeakQuery& b) {
  return a.kind == b.kind && a.z == b.z && a.u == b.u && a.v == b.v && a.set == b.set;
}

// ---- session ----

struct LogEntry {
  long t = 0;
  int index = -1;  // position in the data set
  Vec x;
  WeakQuery query;
  int bit = 0;
  std::string timestamp;
};

struct SessionState {
  std::string id;
  long budget = 0;
  long t = 0;
  std::vector<LogEntry> log;
  bool interrupted = false;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

class Session {
 public:
  Session(SessionConfig cfg, DataStream stream, std::string id = "session")
      : cfg_(std::move(cfg)), model_(cfg_.make_model()), rng_(cfg_.seed), stream_(std::move(stream)) {
    state_.id = std::move(id);
    state_.budget = cfg_.budget;
  }

  const SessionConfig& config() const { return cfg_; }
  const ActiveModel& model() const { return model_; }
  const SessionState& state() const { return state_; }
  SessionState& state() { return state_; }
  bool finished() const { return state_.t >= state_.budget; }
  bool has_pending() const { return pending_.has_value(); }
  long pending_t() const { return state_.t + 1; }

  // Outstanding query, drawing the next sample when none is outstanding.
  const WeakQuery& pending() {
    if (finished()) throw ProtocolError("budget-exhausted", "session budget reached");
    if (!pending_) {
      pending_index_ = stream_.next();
      pending_x_ = stream_.inputs().row(pending_index_).transpose();
      pending_ = propose_query(cfg_.strategy, model_, pending_x_, rng_, cfg_.M);
    }
    return *pending_;
  }
  int pending_index() const { return pending_index_; }
  const Vec& pending_x() const { return pending_x_; }

  void answer(long t, int bit) {
    if (!pending_) throw ProtocolError("no-query", "no query is outstanding");
    if (t != pending_t()) {
      throw ProtocolError("stale-answer",
                          "answer for t=" + std::to_string(t) + " but the outstanding query is t=" + std::to_string(pending_t()));
    }
    if (!answer_in_domain(*pending_, bit)) {
      throw ProtocolError("invalid-bit", std::string("bit ") + std::to_string(bit) + " is not valid for a " +
                                             query_kind_name(pending_->kind) + " query");
    }
    apply_answer(cfg_.strategy, model_, pending_x_, *pending_, bit);
    ++state_.t;
    state_.log.push_back({state_.t, pending_index_, pending_x_, *pending_, bit, utc_timestamp()});
    pending_.reset();
  }

  // Rebuild a session from its log by re-drawing every query; each must match the logged one.
  static Session resume(SessionConfig cfg, DataStream stream, const std::vector<LogEntry>& log, std::string id = "session") {
    Session s(std::move(cfg), std::move(stream), std::move(id));
    for (const auto& e : log) {
      const WeakQuery& q = s.pending();
      if (!same_query(q, e.query) || s.pending_index() != e.index || e.t != s.pending_t())
        throw ReplayMismatchError("log entry t=" + std::to_string(e.t) + " does not match the replayed query");
      s.answer(e.t, e.bit);
      s.state_.log.back().timestamp = e.timestamp;
    }
    return s;
  }

 private:
  SessionConfig cfg_;
  ActiveModel model_;
  Rng rng_;
  DataStream stream_;
  SessionState state_;
  std::optional<WeakQuery> pending_;
  int pending_index_ = -1;
  Vec pending_x_;
};

// Exactly T steps in stream order. A disconnecting oracle marks the state interrupted and stops.
inline std::pair<ActiveModel, SessionState> run_session(SessionConfig cfg, DataStream stream, const IndexedOracle& oracle,
                                                        long T) {
  cfg.budget = T;
  Session s(std::move(cfg), std::move(stream));
  while (!s.finished()) {
    const WeakQuery& q = s.pending();
    int bit;
    try {
      bit = oracle(s.pending_index(), q);
    } catch (const OracleDisconnected&) {
      s.state().interrupted = true;
      break;
    }
    s.answer(s.pending_t(), bit);
  }
  return {s.model(), s.state()};
}

// Model rebuilt from (x, query, answer) alone, without any randomness.
inline ActiveModel replay_model(const SessionConfig& cfg, const std::vector<LogEntry>& log) {
  ActiveModel m = cfg.make_model();
  for (const auto& e : log) apply_answer(cfg.strategy, m, e.x, e.query, e.bit);
  return m;
}

// ---- JSONL log ----

inline Json log_entry_to_json(const LogEntry& e) {
  return Json{{"t", e.t}, {"index", e.index}, {"x", vec_to_json(e.x)}, {"query", query_to_json(e.query)},
              {"bit", e.bit}, {"timestamp", e.timestamp}};
}

inline LogEntry log_entry_from_json(const Json& j) {
  LogEntry e;
  e.t = j.at("t").get<long>();
  e.index = j.at("index").get<int>();
  e.x = vec_from_json(j.at("x"));
  e.query = query_from_json(j.at("query"));
  e.bit = j.at("bit").get<int>();
  e.timestamp = j.value("timestamp", std::string());
  return e;
}

inline void write_log(std::ostream& os, const std::vector<LogEntry>& log) {
  for (const auto& e : log) os << log_entry_to_json(e).dump() << '\n';
}

inline std::vector<LogEntry> read_log(std::istream& is) {
  std::vector<LogEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(log_entry_from_json(Json::parse(line)));
    } catch (const std::exception& ex) {
      throw std::runtime_error("session log line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

// ---- messages ----

inline Json query_message(long t, const WeakQuery& q, const Vec& x) {
  Json j = query_to_json(q);
  j["type"] = "query";
  j["t"] = t;
  j["x"] = vec_to_json(x);
  return j;
}

inline Json answer_message(long t, int bit) { return Json{{"type", "answer"}, {"t", t}, {"bit", bit}}; }

inline Json error_message(const std::string& code, const std::string& message) {
  return Json{{"type", "error"}, {"code", code}, {"message", message}};
}

inline Json state_message(long t, std::optional<double> risk, const Mat& preview_x, const Mat& preview_f) {
  Json preview = Json::array();
  for (int i = 0; i < preview_x.rows(); ++i) {
    Json x = preview_x.cols() == 1 ? Json(preview_x(i, 0)) : vec_to_json(preview_x.row(i).transpose());
    Json f = preview_f.cols() == 1 ? Json(preview_f(i, 0)) : vec_to_json(preview_f.row(i).transpose());
    preview.push_back(Json::array({x, f}));
  }
  return Json{{"type", "state"}, {"t", t}, {"riskEstimate", risk ? Json(*risk) : Json(nullptr)}, {"preview", preview}};
}

inline Json done_message(long t, const Mat& coefficients) {
  return Json{{"type", "done"}, {"t", t}, {"coefficients", matrix_to_json(coefficients)}};
}

inline std::pair<long, int> parse_answer(const Json& j) {
  if (!j.is_object() || j.value("type", std::string()) != "answer")
    throw ProtocolError("malformed", "expected an answer message");
  if (!j.contains("t") || !j["t"].is_number_integer() || !j.contains("bit") || !j["bit"].is_number_integer())
    throw ProtocolError("malformed", "answer needs integer fields t and bit");
  return {j["t"].get<long>(), j["bit"].get<int>()};
}

using RiskEstimator = std::function<std::optional<double>(const ActiveModel&)>;

// One session per connection, independent of the transport.
class ProtocolSession {
 public:
  ProtocolSession(SessionConfig cfg, DataStream stream, RiskEstimator risk = {}, Mat preview = Mat(), std::string id = "session")
      : session_(std::move(cfg), std::move(stream), std::move(id)), risk_(std::move(risk)), preview_(std::move(preview)) {}

  std::vector<Json> open() { return next(); }

  std::vector<Json> handle(const std::string& text) {
    if (closed_) return {error_message("closed", "session already finished")};
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      return reissue(error_message("malformed", e.what()));
    }
    try {
      auto [t, bit] = parse_answer(j);
      session_.answer(t, bit);
    } catch (const ProtocolError& e) {
      return reissue(error_message(e.code, e.what()));
    }
    std::vector<Json> out{state()};
    for (auto& m : next()) out.push_back(std::move(m));
    return out;
  }

  bool closed() const { return closed_; }
  const Session& session() const { return session_; }

 private:
  Json state() const {
    const ActiveModel& m = session_.model();
    std::optional<double> r = risk_ ? risk_(m) : std::nullopt;
    Mat f = preview_.rows() > 0 ? m.predict_rows(preview_) : Mat();
    return state_message(session_.state().t, r, preview_, f);
  }

  std::vector<Json> next() {
    if (session_.finished()) {
      closed_ = true;
      return {done_message(session_.state().t, session_.model().coefficients())};
    }
    try {
      const WeakQuery& q = session_.pending();
      return {query_message(session_.pending_t(), q, session_.pending_x())};
    } catch (const StreamExhaustedError& e) {
      closed_ = true;
      return {error_message("stream-exhausted", e.what())};
    }
  }

  std::vector<Json> reissue(Json err) {
    std::vector<Json> out{std::move(err)};
    if (session_.has_pending())
      out.push_back(query_message(session_.pending_t(), session_.pending(), session_.pending_x()));
    return out;
  }

  Session session_;
  RiskEstimator risk_;
  Mat preview_;
  bool closed_ = false;
};

// ---- sin task wiring ----

struct SinStream {
  DataStream stream;
  SimulatedOracle oracle;
};

// budget inputs x ~ U[0, 1] drawn from a substream of the seed, with hidden labels sin(2 pi x)
inline SinStream sin_stream(long budget, std::uint64_t seed) {
  Rng rng = Rng(seed).substream(1);
  Mat X(budget, 1);
  std::vector<Vec> y;
  for (long i = 0; i < budget; ++i) {
    X(i, 0) = SinTask::sample_x(rng);
    y.push_back(Vec::Constant(1, SinTask::target(X(i, 0))));
  }
  return {DataStream(std::move(X)), SimulatedOracle::regression(std::move(y))};
}

inline ProtocolSession sin_protocol_session(const SessionConfig& cfg, const std::string& id = "session") {
  if (cfg.outputs != 1) throw std::invalid_argument("the sin task has one output");
  Mat grid = unit_grid(200);
  RiskEstimator risk = [grid](const ActiveModel& m) -> std::optional<double> { return sin_risk(m, grid); };
  return ProtocolSession(cfg, sin_stream(cfg.budget, cfg.seed).stream, risk, unit_grid(50), id);
}

}  // namespace weaklearn
