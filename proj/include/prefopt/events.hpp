#pragma once

#include "prefopt/loops.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace prefopt {

inline constexpr int kLogFormatVersion = 1;

namespace event_type {
inline constexpr const char* session_created = "session_created";
inline constexpr const char* query_issued = "query_issued";
inline constexpr const char* response = "response";
inline constexpr const char* recommendation = "recommendation";
inline constexpr const char* trial_completed = "trial_completed";
inline constexpr const char* validation_pair_issued = "validation_pair_issued";
inline constexpr const char* validation_response = "validation_response";
inline constexpr const char* session_closed = "session_closed";
}  // namespace event_type

struct Event {
  std::int64_t seq = 0;
  std::string type;
  nlohmann::json data;
  std::string time;  // ISO-8601 UTC; empty in simulation logs
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

/// Everything needed to rebuild an elicitation run from scratch.
struct SessionSetup {
  std::string session_id;
  std::string source = "simulation";  // or "live"
  ParameterSpace space = ParameterSpace::unit_cube(1);
  LoopConfig loop;
  ModelConfig model;
  AcquisitionConfig acquisition;
  std::optional<Configuration> x_ref;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const SessionSetup& s);
SessionSetup session_setup_from_json(const nlohmann::json& j);

/// Append-only JSON-lines writer; every event is flushed before append returns.
class EventWriter {
 public:
  EventWriter(const std::string& path, bool timestamps, std::int64_t next_seq = 1);
  const Event& append(const std::string& type, nlohmann::json data);
  std::int64_t next_seq() const { return next_seq_; }
  const std::vector<Event>& written() const { return written_; }

 private:
  std::ofstream out_;
  bool timestamps_;
  std::int64_t next_seq_;
  std::vector<Event> written_;
};

/// Reads a log. A torn final line (crash mid-write) is dropped; any other
/// malformed line is a ParseError carrying its line number.
std::vector<Event> read_events(const std::string& path);

std::string utc_now_iso8601();

nlohmann::json query_event(const ParameterSpace& space, const Query& q);
nlohmann::json response_event(const Query& q, PresentedChoice presented);
nlohmann::json recommendation_event(const ParameterSpace& space, const Recommendation& r, const LoopState& s);

/// Writes the events of one elicitation as it advances.
class RunRecorder {
 public:
  RunRecorder(EventWriter& writer, const Elicitation& e) : writer_(&writer), e_(&e) {}
  /// Points at a rebuilt engine whose events up to now are already logged.
  void resume(EventWriter& writer, const Elicitation& e, bool pending_logged = true);
  /// Logs the pending query if it has not been logged yet.
  void query();
  void response(PresentedChoice presented);
  /// Logs any recommendations produced since the last call.
  void progress();

 private:
  EventWriter* writer_;
  const Elicitation* e_;
  std::int64_t last_query_ = 0;
  std::size_t recs_logged_ = 0;
  bool stop_logged_ = false;
};

struct ReplayReport {
  bool matched = true;
  int queries_checked = 0;
  int responses_replayed = 0;
  int recommendations_checked = 0;
  double max_deviation = 0.0;
  std::string mismatch;  // first mismatch, empty when matched
};

/// Re-runs the logged responses through a fresh engine and checks every
/// logged query and recommendation against the recomputed one. A log prefix
/// is checked as far as it goes.
ReplayReport replay_events(const std::vector<Event>& events, double tolerance = 1e-9);
ReplayReport replay_log(const std::string& path, double tolerance = 1e-9);

}  // namespace prefopt
