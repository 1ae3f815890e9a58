#include "prefopt/service.hpp"

#include "prefopt/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace prefopt {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_response: return "awaiting_response";
    case SessionStatus::running: return "running";
    case SessionStatus::optimization_done: return "optimization_done";
    case SessionStatus::validating: return "validating";
    case SessionStatus::closed: return "closed";
  }
  return "?";
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  ServiceConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open service config " + path);
    json j;
    try {
      in >> j;
      c.bind_address = j.value("bind", c.bind_address);
      c.port = j.value("port", c.port);
      c.data_dir = j.value("data_dir", c.data_dir);
      c.static_dir = j.value("static_dir", c.static_dir);
    } catch (const json::exception& e) {
      throw ConfigError("malformed service config: " + std::string(e.what()));
    }
  }
  if (const char* bind = std::getenv("PREFOPT_BIND")) {
    std::string b(bind);
    const auto colon = b.rfind(':');
    if (colon != std::string::npos) {
      try {
        c.port = std::stoi(b.substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("PREFOPT_BIND port is not a number");
      }
      b = b.substr(0, colon);
    }
    if (!b.empty()) c.bind_address = b;
  }
  if (const char* dir = std::getenv("PREFOPT_DATA_DIR")) c.data_dir = dir;
  if (c.port < 0 || c.port > 65535) throw ConfigError("port out of range");
  return c;
}

SessionConfig SessionConfig::from_request(const json& body) {
  if (!body.is_object()) throw ConfigError("session config must be an object");
  SessionConfig c;
  try {
    const json space = body.value("space", json("prosthesis4"));
    if (space.is_string()) {
      if (space.get<std::string>() != "prosthesis4") throw ConfigError("unknown preset '" + space.get<std::string>() + "'");
      c.space = prosthesis4_preset();
    } else {
      c.space = space_from_json(space);
    }
    const Algorithm alg = algorithm_from_string(body.value("algorithm", std::string("bpe4prost")));
    if (alg == Algorithm::eubo_linecospar && !c.space.is_grid()) {
      c.space = c.space.as_grid(body.value("points_per_dim", 51));
    } else if (alg != Algorithm::eubo_linecospar && c.space.is_grid()) {
      c.space = c.space.as_continuous();
    }
    std::uint64_t seed;
    if (body.contains("seed")) {
      seed = body.at("seed").get<std::uint64_t>();
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
    }
    c.loop.algorithm = alg;
    c.loop.seeds = LoopSeeds::from(seed);
    c.loop.n_init_pairs = body.value("n_init_pairs", c.loop.n_init_pairs);
    c.loop.budget = body.value("budget", c.loop.budget);
    c.loop.n_stop = body.value("n_stop", c.loop.n_stop);
    c.loop.stability_fraction = body.value("stability_fraction", c.loop.stability_fraction);
    c.loop.refit_every_n = body.value("refit_every_n", c.loop.refit_every_n);
    c.loop.stability_stop = body.value("stability_stop", c.loop.stability_stop);
    c.loop.check(c.space);
    c.model = ModelConfig::for_algorithm(alg, c.space.dim());
    c.acquisition = acquisition_for(alg, body.value("q", 3));
    c.acquisition.check();
    if (body.contains("x_ref") && !body.at("x_ref").is_null()) {
      c.x_ref = from_native(c.space, body.at("x_ref").get<std::vector<double>>());
      validate(c.space, *c.x_ref);
    } else {
      c.x_ref = midpoint(c.space);
    }
    c.operator_label = body.value("operator_label", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed session config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

namespace {

json native_params(const ParameterSpace& space, const Configuration& x) {
  const auto v = to_native(space, x);
  json out = json::array();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& s = space.specs()[i];
    out.push_back({{"name", s.name}, {"value", v[i]}, {"unit", s.unit_label}});
  }
  return out;
}

struct ValidationPair {
  std::size_t preferred_index = 0;
  Configuration challenger;
  bool swapped = false;
  std::optional<PresentedChoice> answer;
};

struct Snapshot {
  json describe;
  std::optional<json> query;
  json estimate;
};

}  // namespace

class Session {
 public:
  SessionKind kind = SessionKind::trial;
  std::string id;
  std::string path;
  std::mutex mu;
  std::unique_ptr<EventWriter> writer;

  // Trials.
  SessionSetup setup;
  std::unique_ptr<Elicitation> engine;
  std::unique_ptr<RunRecorder> recorder;
  std::map<std::int64_t, std::pair<PresentedChoice, json>> answered;
  bool closed = false;

  // Validation rounds.
  std::vector<std::string> trial_ids;
  ParameterSpace vspace = ParameterSpace::unit_cube(1);
  std::vector<Configuration> preferred;
  std::vector<ValidationPair> pairs;

  std::shared_ptr<const Snapshot> snapshot() const { return std::atomic_load(&snap_); }

  SessionStatus status() const {
    if (kind == SessionKind::validation) {
      return next_pair() < pairs.size() ? SessionStatus::validating : SessionStatus::closed;
    }
    if (closed) return SessionStatus::closed;
    if (engine->finished()) return SessionStatus::optimization_done;
    if (engine->pending()) return SessionStatus::awaiting_response;
    return SessionStatus::running;
  }

  std::size_t next_pair() const {
    std::size_t i = 0;
    while (i < pairs.size() && pairs[i].answer) ++i;
    return i;
  }

  json validation_summary() const {
    int answered_pairs = 0, wins = 0;
    json outcomes = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      if (!p.answer) continue;
      ++answered_pairs;
      const bool won = preferred_won(p);
      wins += won;
      outcomes.push_back({{"pair", i + 1},
                          {"trial_id", trial_ids[p.preferred_index]},
                          {"choice", to_string(*p.answer)},
                          {"preferred_won", won}});
    }
    json j{{"answered", answered_pairs}, {"total", pairs.size()}, {"outcomes", outcomes}};
    j["recognition_rate"] = answered_pairs ? json(static_cast<double>(wins) / answered_pairs) : json(nullptr);
    return j;
  }

  static bool preferred_won(const ValidationPair& p) {
    if (!p.answer || *p.answer == PresentedChoice::no_preference) return false;
    return (*p.answer == PresentedChoice::A) != p.swapped;
  }

  void refresh() {
    auto s = std::make_shared<Snapshot>();
    if (kind == SessionKind::trial) {
      const auto& st = engine->state();
      const auto& space = engine->space();
      s->describe = {{"session_id", id},
                     {"kind", "trial"},
                     {"status", to_string(status())},
                     {"algorithm", to_string(engine->config().algorithm)},
                     {"operator_label", setup.extra.value("operator_label", std::string())},
                     {"iteration", st.iteration},
                     {"budget", engine->config().budget},
                     {"n_init_pairs", engine->config().n_init_pairs},
                     {"init_pairs_done", st.init_pairs_done},
                     {"n_stop", engine->config().n_stop},
                     {"comparisons", st.dataset.size()},
                     {"stability_count", st.stability_count},
                     {"stop_reason", to_string(st.stop_reason)},
                     {"space", space_to_json(space)},
                     {"x_ref", setup.x_ref ? native_params(space, *setup.x_ref) : json(nullptr)},
                     {"seed", engine->config().seeds.sobol}};
      if (engine->pending() && !closed) {
        const Query& q = *engine->pending();
        s->query = json{{"session_id", id},
                        {"kind", "trial"},
                        {"query_id", q.query_id},
                        {"option_A", native_params(space, q.option_a())},
                        {"option_B", native_params(space, q.option_b())},
                        {"progress",
                         {{"phase", q.phase == QueryPhase::init ? "init" : "optimization"},
                          {"init_pairs_done", st.init_pairs_done},
                          {"n_init_pairs", engine->config().n_init_pairs},
                          {"iteration", st.iteration},
                          {"budget", engine->config().budget}}}};
      }
      json history = json::array();
      for (const auto& r : st.recommendation_history) {
        history.push_back({{"iteration", r.iteration}, {"parameters", native_params(space, r.point)}, {"posterior_mean", r.posterior_mean}});
      }
      s->estimate = {{"session_id", id},
                     {"status", to_string(status())},
                     {"stop_reason", to_string(st.stop_reason)},
                     {"recommendation", history.empty() ? json(nullptr) : history.back()},
                     {"history", history}};
    } else {
      const std::size_t next = next_pair();
      s->describe = {{"session_id", id},
                     {"kind", "validation"},
                     {"status", to_string(status())},
                     {"trial_ids", trial_ids},
                     {"validation", validation_summary()}};
      if (next < pairs.size()) {
        const auto& p = pairs[next];
        const Configuration& a = p.swapped ? p.challenger : preferred[p.preferred_index];
        const Configuration& b = p.swapped ? preferred[p.preferred_index] : p.challenger;
        s->query = json{{"session_id", id},
                        {"kind", "validation"},
                        {"query_id", static_cast<std::int64_t>(next + 1)},
                        {"option_A", native_params(vspace, a)},
                        {"option_B", native_params(vspace, b)},
                        {"progress", {{"pair", next + 1}, {"total", pairs.size()}}}};
      }
      s->estimate = s->describe;
    }
    std::atomic_store(&snap_, std::shared_ptr<const Snapshot>(std::move(s)));
  }

 private:
  std::shared_ptr<const Snapshot> snap_;
};

namespace {

json ack_for(const Session& s, std::int64_t query_id, PresentedChoice choice) {
  json ack{{"query_id", query_id}, {"accepted", true}, {"choice", to_string(choice)}, {"next_state", to_string(s.status())}};
  if (s.kind == SessionKind::trial) {
    const auto& st = s.engine->state();
    ack["iteration"] = st.iteration;
    ack["stop_reason"] = to_string(st.stop_reason);
    ack["next_query_id"] = s.engine->pending() ? json(s.engine->pending()->query_id) : json(nullptr);
  } else {
    const std::size_t next = s.next_pair();
    ack["next_query_id"] = next < s.pairs.size() ? json(static_cast<std::int64_t>(next + 1)) : json(nullptr);
    if (next == s.pairs.size()) ack["recognition_rate"] = s.validation_summary()["recognition_rate"];
  }
  return ack;
}

json validation_plan_to_json(const Session& s, std::uint64_t seed) {
  json pairs = json::array();
  for (const auto& p : s.pairs) {
    pairs.push_back({{"preferred_index", p.preferred_index}, {"challenger", configuration_to_json(p.challenger)}, {"swapped", p.swapped}});
  }
  json preferred = json::array();
  for (const auto& p : s.preferred) preferred.push_back(configuration_to_json(p));
  return {{"format_version", kLogFormatVersion},
          {"kind", "validation"},
          {"session_id", s.id},
          {"trial_ids", s.trial_ids},
          {"seed", seed},
          {"space", space_to_json(s.vspace)},
          {"preferred", preferred},
          {"pairs", pairs}};
}

}  // namespace

SessionManager::SessionManager(std::string data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_);
}

std::string SessionManager::log_path(const std::string& id) const { return (fs::path(data_dir_) / (id + ".jsonl")).string(); }

std::string SessionManager::fresh_id(const char* prefix) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  for (;;) {
    std::ostringstream os;
    os << prefix << std::hex << std::setw(12) << std::setfill('0') << (rng() & 0xffffffffffffULL) << '-' << ++id_counter_;
    const std::string id = os.str();
    if (!sessions_.count(id) && !fs::exists(log_path(id))) return id;
  }
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(registry_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::shared_lock lock(registry_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

std::string SessionManager::create_session(const SessionConfig& cfg) {
  auto s = std::make_shared<Session>();
  {
    std::unique_lock lock(registry_mutex_);
    s->id = fresh_id("t-");
    sessions_[s->id] = s;
  }
  std::lock_guard g(s->mu);
  s->path = log_path(s->id);
  s->setup.session_id = s->id;
  s->setup.source = "live";
  s->setup.space = cfg.space;
  s->setup.loop = cfg.loop;
  s->setup.model = cfg.model;
  s->setup.acquisition = cfg.acquisition;
  s->setup.x_ref = cfg.x_ref;
  s->setup.extra = {{"kind", "trial"}, {"operator_label", cfg.operator_label}};
  try {
    s->writer = std::make_unique<EventWriter>(s->path, true);
    s->writer->append(event_type::session_created, to_json(s->setup));
    s->engine = std::make_unique<Elicitation>(cfg.space, cfg.loop, cfg.model, cfg.acquisition);
    s->recorder = std::make_unique<RunRecorder>(*s->writer, *s->engine);
    s->recorder->query();
    s->refresh();
  } catch (...) {
    std::unique_lock lock(registry_mutex_);
    sessions_.erase(s->id);
    throw;
  }
  return s->id;
}

json SessionManager::describe(const std::string& id) const { return find(id)->snapshot()->describe; }

json SessionManager::get_query(const std::string& id) const {
  const auto snap = find(id)->snapshot();
  if (!snap->query) {
    throw StateError("session " + id + " has no pending query (status " + snap->describe.value("status", std::string()) + ")");
  }
  return *snap->query;
}

json SessionManager::get_estimate(const std::string& id) const { return find(id)->snapshot()->estimate; }

json SessionManager::post_response(const std::string& id, std::int64_t query_id, PresentedChoice choice) {
  const auto s = find(id);
  std::lock_guard g(s->mu);

  if (s->kind == SessionKind::validation) {
    const std::size_t next = s->next_pair();
    if (query_id >= 1 && static_cast<std::size_t>(query_id) <= s->pairs.size() && s->pairs[query_id - 1].answer) {
      if (*s->pairs[query_id - 1].answer != choice) throw StateError("query " + std::to_string(query_id) + " was already answered");
      json ack = ack_for(*s, query_id, choice);
      return ack;
    }
    if (next >= s->pairs.size() || query_id != static_cast<std::int64_t>(next + 1)) {
      throw StateError("stale query id " + std::to_string(query_id));
    }
    s->pairs[next].answer = choice;
    s->writer->append(event_type::validation_response,
                      {{"query_id", query_id}, {"choice", to_string(choice)}, {"preferred_won", Session::preferred_won(s->pairs[next])}});
    if (s->next_pair() < s->pairs.size()) {
      s->writer->append(event_type::validation_pair_issued, {{"query_id", query_id + 1}});
    } else {
      s->writer->append(event_type::session_closed, {{"closed_by", "validation_complete"}, {"summary", s->validation_summary()}});
    }
    s->refresh();
    return ack_for(*s, query_id, choice);
  }

  if (const auto it = s->answered.find(query_id); it != s->answered.end()) {
    if (it->second.first != choice) throw StateError("query " + std::to_string(query_id) + " was already answered");
    return it->second.second;
  }
  if (s->closed) throw StateError("session " + id + " is closed");
  if (s->engine->finished()) {
    throw StateError("session " + id + " stopped: " + to_string(s->engine->state().stop_reason));
  }
  if (!s->engine->pending() || s->engine->pending()->query_id != query_id) {
    throw StateError("stale query id " + std::to_string(query_id));
  }

  const Query q = *s->engine->pending();
  const LoopState before = s->engine->state();
  try {
    s->engine->respond_presented(choice);
  } catch (...) {
    // Leave the session exactly as it was before the failed answer.
    s->engine = std::make_unique<Elicitation>(s->setup.space, s->setup.loop, s->setup.model, s->setup.acquisition, before);
    s->recorder->resume(*s->writer, *s->engine);
    throw;
  }
  json ack = ack_for(*s, query_id, choice);
  json ev = response_event(q, choice);
  ev["ack"] = ack;
  s->writer->append(event_type::response, ev);
  s->recorder->progress();
  s->recorder->query();
  s->answered[query_id] = {choice, ack};
  s->refresh();
  return ack;
}

json SessionManager::close_session(const std::string& id) {
  const auto s = find(id);
  std::lock_guard g(s->mu);
  if (s->kind == SessionKind::validation) throw StateError("validation rounds close when every pair is answered");
  if (!s->closed) {
    s->closed = true;
    s->writer->append(event_type::session_closed, {{"closed_by", "operator"}, {"stop_reason", to_string(s->engine->state().stop_reason)}});
    s->refresh();
  }
  return s->snapshot()->describe;
}

std::string SessionManager::start_validation(const std::vector<std::string>& trial_ids, std::optional<std::uint64_t> seed) {
  if (trial_ids.empty() || trial_ids.size() > 3) throw ConfigError("a validation round takes one to three trials");
  auto v = std::make_shared<Session>();
  v->kind = SessionKind::validation;
  v->trial_ids = trial_ids;
  std::optional<json> space_json;
  for (const auto& tid : trial_ids) {
    const auto t = find(tid);
    std::lock_guard g(t->mu);
    if (t->kind != SessionKind::trial) throw ConfigError(tid + " is not a trial session");
    if (!t->engine->finished()) throw StateError("trial " + tid + " has not completed");
    const auto rec = t->engine->final_recommendation();
    if (!rec) throw StateError("trial " + tid + " has no recommendation");
    const json sj = space_to_json(t->engine->space().as_continuous());
    if (space_json && *space_json != sj) throw ConfigError("validation trials must share one parameter space");
    space_json = sj;
    v->vspace = t->engine->space();
    v->preferred.push_back(rec->point);
  }
  if (!seed) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
  }
  std::mt19937_64 rng(*seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < v->preferred.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd c(static_cast<Eigen::Index>(v->vspace.dim()));
      for (Eigen::Index j = 0; j < c.size(); ++j) c[j] = unif(rng);
      Configuration challenger(std::move(c));
      if (v->vspace.is_grid()) challenger = snap_to_grid(v->vspace, challenger);
      v->pairs.push_back({i, std::move(challenger), false, std::nullopt});
    }
  }
  std::shuffle(v->pairs.begin(), v->pairs.end(), rng);
  for (auto& p : v->pairs) p.swapped = (rng() >> 63) != 0;

  {
    std::unique_lock lock(registry_mutex_);
    v->id = fresh_id("v-");
    sessions_[v->id] = v;
  }
  std::lock_guard g(v->mu);
  v->path = log_path(v->id);
  v->writer = std::make_unique<EventWriter>(v->path, true);
  v->writer->append(event_type::session_created, validation_plan_to_json(*v, *seed));
  v->writer->append(event_type::validation_pair_issued, {{"query_id", 1}});
  v->refresh();
  return v->id;
}

std::string SessionManager::export_events(const std::string& id) const {
  const auto s = find(id);
  std::ifstream in(s->path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int SessionManager::recover() {
  int recovered = 0;
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(data_dir_)) {
    if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    const std::string id = path.stem().string();
    {
      std::shared_lock lock(registry_mutex_);
      if (sessions_.count(id)) continue;
    }
    try {
      const auto events = read_events(path.string());
      if (events.empty() || events.front().type != event_type::session_created) throw ParseError("missing header");
      auto s = std::make_shared<Session>();
      s->id = id;
      s->path = path.string();
      const json& head = events.front().data;
      if (head.value("kind", std::string()) == "validation") {
        if (head.value("format_version", -1) != kLogFormatVersion) throw IncompatibleLogError("unsupported log version");
        s->kind = SessionKind::validation;
        s->trial_ids = head.at("trial_ids").get<std::vector<std::string>>();
        s->vspace = space_from_json(head.at("space"));
        for (const auto& p : head.at("preferred")) s->preferred.push_back(configuration_from_json(p));
        for (const auto& p : head.at("pairs")) {
          s->pairs.push_back({p.at("preferred_index").get<std::size_t>(), configuration_from_json(p.at("challenger")),
                              p.at("swapped").get<bool>(), std::nullopt});
        }
        for (const auto& ev : events) {
          if (ev.type != event_type::validation_response) continue;
          const auto qid = ev.data.at("query_id").get<std::size_t>();
          if (qid < 1 || qid > s->pairs.size()) throw ParseError("validation response out of range");
          s->pairs[qid - 1].answer = presented_choice_from_string(ev.data.at("choice").get<std::string>());
        }
      } else {
        s->setup = session_setup_from_json(head);
        s->engine = std::make_unique<Elicitation>(s->setup.space, s->setup.loop, s->setup.model, s->setup.acquisition);
        for (const auto& ev : events) {
          if (ev.type == event_type::response) {
            const auto qid = ev.data.at("query_id").get<std::int64_t>();
            if (!s->engine->pending() || s->engine->pending()->query_id != qid) {
              throw IncompatibleLogError("response to query " + std::to_string(qid) + " does not match the rebuilt loop");
            }
            const auto choice = presented_choice_from_string(ev.data.at("choice").get<std::string>());
            s->engine->respond_presented(choice);
            s->answered[qid] = {choice, ev.data.value("ack", json::object())};
          } else if (ev.type == event_type::session_closed && ev.data.value("closed_by", std::string()) == "operator") {
            s->closed = true;
          }
        }
      }
      s->writer = std::make_unique<EventWriter>(s->path, true, events.back().seq + 1);
      if (s->kind == SessionKind::trial) {
        s->recorder = std::make_unique<RunRecorder>(*s->writer, *s->engine);
        // A crash between a response and its follow-up events leaves them unlogged.
        bool query_logged = false;
        for (const auto& ev : events) {
          if (ev.type == event_type::query_issued && s->engine->pending() &&
              ev.data.at("query").at("query_id").get<std::int64_t>() == s->engine->pending()->query_id) {
            query_logged = true;
          }
        }
        s->recorder->resume(*s->writer, *s->engine, query_logged);
        s->recorder->query();
      }
      s->refresh();
      std::unique_lock lock(registry_mutex_);
      sessions_[id] = s;
      ++recovered;
    } catch (const std::exception& e) {
      std::cerr << "skipping session log " << path << ": " << e.what() << '\n';
    }
  }
  return recovered;
}

}  // namespace prefopt
