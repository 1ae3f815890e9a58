#pragma once

#include "prefopt/events.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace prefopt {

enum class SessionStatus { awaiting_response, running, optimization_done, validating, closed };
enum class SessionKind { trial, validation };

std::string to_string(SessionStatus s);

struct ServiceConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "sessions";
  std::string static_dir;  // optional UI bundle

  /// Reads the file (empty path: defaults) and applies PREFOPT_BIND
  /// ("host" or "host:port") and PREFOPT_DATA_DIR.
  static ServiceConfig load(const std::string& path);
};

/// Request body of POST /sessions, already validated.
struct SessionConfig {
  ParameterSpace space = prosthesis4_preset();
  LoopConfig loop;
  ModelConfig model;
  AcquisitionConfig acquisition;
  std::optional<Configuration> x_ref;  // defaults to the midpoint
  std::string operator_label;

  /// Fields: space (preset name or inline space), algorithm, n_init_pairs,
  /// budget, n_stop, stability_fraction, refit_every_n, seed, q,
  /// points_per_dim (EUBO-LineCoSpar grid), x_ref (native), operator_label.
  static SessionConfig from_request(const nlohmann::json& body);
};

class Session;

/// Thread-safe registry of sessions persisted as one JSON-lines log each.
class SessionManager {
 public:
  explicit SessionManager(std::string data_dir);

  /// Rebuilds every session found in the data directory from its log.
  int recover();

  std::string create_session(const SessionConfig& cfg);
  nlohmann::json describe(const std::string& id) const;
  nlohmann::json get_query(const std::string& id) const;
  nlohmann::json post_response(const std::string& id, std::int64_t query_id, PresentedChoice choice);
  nlohmann::json get_estimate(const std::string& id) const;
  nlohmann::json close_session(const std::string& id);
  /// Validation round over completed trials; returns its id. The round is
  /// answered through get_query/post_response like a trial.
  std::string start_validation(const std::vector<std::string>& trial_ids, std::optional<std::uint64_t> seed = {});
  std::string export_events(const std::string& id) const;
  std::string log_path(const std::string& id) const;
  std::vector<std::string> session_ids() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string fresh_id(const char* prefix);

  std::string data_dir_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_counter_ = 0;
};

}  // namespace prefopt
