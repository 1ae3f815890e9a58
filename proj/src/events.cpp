#include "prefopt/events.hpp"

#include "prefopt/errors.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <iomanip>
#include <sstream>

namespace prefopt {

using nlohmann::json;

json to_json(const Event& e) {
  json j{{"seq", e.seq}, {"type", e.type}, {"data", e.data}};
  if (!e.time.empty()) j["time"] = e.time;
  return j;
}

Event event_from_json(const json& j) {
  Event e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.type = j.at("type").get<std::string>();
  e.data = j.at("data");
  e.time = j.value("time", std::string());
  return e;
}

json to_json(const SessionSetup& s) {
  return {{"format_version", kLogFormatVersion},
          {"session_id", s.session_id},
          {"source", s.source},
          {"space", space_to_json(s.space)},
          {"loop", to_json(s.loop)},
          {"model", to_json(s.model)},
          {"acquisition", to_json(s.acquisition)},
          {"x_ref", s.x_ref ? configuration_to_json(*s.x_ref) : json(nullptr)},
          {"extra", s.extra}};
}

SessionSetup session_setup_from_json(const json& j) {
  const int version = j.value("format_version", -1);
  if (version != kLogFormatVersion) {
    throw IncompatibleLogError("log format version " + std::to_string(version) + ", this build reads version " +
                               std::to_string(kLogFormatVersion));
  }
  try {
    SessionSetup s;
    s.session_id = j.at("session_id").get<std::string>();
    s.source = j.value("source", std::string("simulation"));
    s.space = space_from_json(j.at("space"));
    s.loop = loop_config_from_json(j.at("loop"));
    s.model = model_config_from_json(j.at("model"));
    s.acquisition = acquisition_config_from_json(j.at("acquisition"));
    if (j.contains("x_ref") && !j.at("x_ref").is_null()) s.x_ref = configuration_from_json(j.at("x_ref"));
    s.extra = j.value("extra", json::object());
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed session header: ") + e.what());
  }
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

EventWriter::EventWriter(const std::string& path, bool timestamps, std::int64_t next_seq)
    : out_(path, std::ios::app), timestamps_(timestamps), next_seq_(next_seq) {
  if (!out_) throw ConfigError("cannot open event log " + path);
}

const Event& EventWriter::append(const std::string& type, json data) {
  Event e{next_seq_++, type, std::move(data), timestamps_ ? utc_now_iso8601() : std::string()};
  out_ << to_json(e).dump() << '\n';
  out_.flush();
  if (!out_) throw Error("failed to write event log");
  written_.push_back(std::move(e));
  return written_.back();
}

std::vector<Event> read_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open log " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  // A final line without its newline may be torn.
  in.clear();
  in.seekg(0, std::ios::end);
  bool torn_tail_possible = false;
  if (in.tellg() > 0) {
    in.seekg(-1, std::ios::end);
    torn_tail_possible = in.get() != '\n';
  }
  std::vector<Event> events;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      events.push_back(event_from_json(json::parse(lines[i])));
    } catch (const json::exception& e) {
      if (torn_tail_possible && i + 1 == lines.size()) break;
      throw ParseError("malformed event at line " + std::to_string(i + 1) + ": " + e.what(), static_cast<long>(i + 1));
    }
  }
  return events;
}

namespace {

json native_json(const ParameterSpace& space, const Configuration& x) { return to_native(space, x); }

double max_abs_diff(const Configuration& a, const Configuration& b) {
  if (a.dim() != b.dim()) return std::numeric_limits<double>::infinity();
  if (a.dim() == 0) return 0.0;
  return (a.coords - b.coords).cwiseAbs().maxCoeff();
}

}  // namespace

json query_event(const ParameterSpace& space, const Query& q) {
  return {{"query", to_json(q)},
          {"option_a_native", native_json(space, q.option_a())},
          {"option_b_native", native_json(space, q.option_b())}};
}

json response_event(const Query& q, PresentedChoice presented) {
  return {{"query_id", q.query_id},
          {"choice", to_string(presented)},
          {"resolved", to_string(q.to_algorithm_order(presented))}};
}

json recommendation_event(const ParameterSpace& space, const Recommendation& r, const LoopState& s) {
  return {{"recommendation", to_json(r)},
          {"native", native_json(space, r.point)},
          {"stability_count", s.stability_count},
          {"stop_reason", to_string(s.stop_reason)},
          {"kernel", to_json(s.kernel)}};
}

void RunRecorder::resume(EventWriter& writer, const Elicitation& e, bool pending_logged) {
  writer_ = &writer;
  e_ = &e;
  last_query_ = e.pending() && pending_logged ? e.pending()->query_id : 0;
  recs_logged_ = e.state().recommendation_history.size();
  stop_logged_ = e.finished();
}

void RunRecorder::query() {
  const auto& p = e_->pending();
  if (p && p->query_id != last_query_) {
    writer_->append(event_type::query_issued, query_event(e_->space(), *p));
    last_query_ = p->query_id;
  }
}

void RunRecorder::response(PresentedChoice presented) {
  if (!e_->pending()) throw StateError("no pending query");
  writer_->append(event_type::response, response_event(*e_->pending(), presented));
}

void RunRecorder::progress() {
  const auto& s = e_->state();
  while (recs_logged_ < s.recommendation_history.size()) {
    const Recommendation& r = s.recommendation_history[recs_logged_++];
    writer_->append(event_type::trial_completed, {{"iteration", r.iteration}, {"comparisons", s.dataset.size()}});
    writer_->append(event_type::recommendation, recommendation_event(e_->space(), r, s));
  }
  if (e_->finished() && !stop_logged_) {
    stop_logged_ = true;
    writer_->append(event_type::session_closed, {{"stop_reason", to_string(s.stop_reason)}, {"iteration", s.iteration}, {"closed_by", "loop"}});
  }
}

ReplayReport replay_events(const std::vector<Event>& events, double tol) {
  ReplayReport rep;
  if (events.empty() || events.front().type != event_type::session_created) {
    throw ParseError("log does not start with a session_created event", 1);
  }
  const SessionSetup setup = session_setup_from_json(events.front().data);
  Elicitation e(setup.space, setup.loop, setup.model, setup.acquisition);
  auto fail = [&](const Event& ev, const std::string& why) {
    rep.matched = false;
    rep.mismatch = "event " + std::to_string(ev.seq) + " (" + ev.type + "): " + why;
    return rep;
  };

  for (std::size_t i = 1; i < events.size(); ++i) {
    const Event& ev = events[i];
    try {
      if (ev.type == event_type::query_issued) {
        const Query logged = query_from_json(ev.data.at("query"));
        const auto& p = e.pending();
        if (!p) return fail(ev, "engine has no pending query");
        if (p->query_id != logged.query_id) return fail(ev, "query id differs");
        const double dev = std::max(max_abs_diff(p->first, logged.first), max_abs_diff(p->second, logged.second));
        rep.max_deviation = std::max(rep.max_deviation, dev);
        if (dev > tol) return fail(ev, "query points differ by " + std::to_string(dev));
        if (p->swapped != logged.swapped) return fail(ev, "presentation order differs");
        ++rep.queries_checked;
      } else if (ev.type == event_type::response) {
        const auto& p = e.pending();
        if (!p || p->query_id != ev.data.at("query_id").get<std::int64_t>()) return fail(ev, "response to a query the engine did not issue");
        e.respond_presented(presented_choice_from_string(ev.data.at("choice").get<std::string>()));
        ++rep.responses_replayed;
      } else if (ev.type == event_type::recommendation) {
        const Recommendation logged = recommendation_from_json(ev.data.at("recommendation"));
        const auto& hist = e.state().recommendation_history;
        if (logged.iteration < 1 || static_cast<std::size_t>(logged.iteration) > hist.size()) {
          return fail(ev, "engine has no recommendation for iteration " + std::to_string(logged.iteration));
        }
        const Recommendation& mine = hist[static_cast<std::size_t>(logged.iteration) - 1];
        const double dev = std::max(max_abs_diff(mine.point, logged.point), std::abs(mine.posterior_mean - logged.posterior_mean));
        rep.max_deviation = std::max(rep.max_deviation, dev);
        if (!(dev <= tol)) return fail(ev, "recommendation differs by " + std::to_string(dev));
        ++rep.recommendations_checked;
      }
    } catch (const StalledUserError&) {
      // The live run hit the same cap; nothing further can follow.
      continue;
    } catch (const json::exception& err) {
      throw ParseError("malformed event " + std::to_string(ev.seq) + ": " + err.what(), static_cast<long>(i + 1));
    }
  }
  return rep;
}

ReplayReport replay_log(const std::string& path, double tol) { return replay_events(read_events(path), tol); }

}  // namespace prefopt
