#include "prefopt/http_server.hpp"

#include "prefopt/errors.hpp"

#include <httplib.h>

#include <iostream>

namespace prefopt {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("request body is not valid JSON: ") + e.what());
  }
}

}  // namespace

HttpServer::HttpServer(SessionManager& manager, const ServiceConfig& cfg)
    : manager_(manager), cfg_(cfg), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() = default;

void HttpServer::routes() {
  auto& srv = *server_;
  auto& mgr = manager_;

  // Every handler maps library errors onto status codes in one place.
  auto guarded = [&mgr](auto handler) {
    return [&mgr, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const NotFoundError& e) {
        send(res, 404, {{"error", "not_found"}, {"message", e.what()}});
      } catch (const StalledUserError& e) {
        send(res, 409, {{"error", "stalled"}, {"message", e.what()}});
      } catch (const StateError& e) {
        json body{{"error", "conflict"}, {"message", e.what()}};
        if (req.path_params.count("id")) {
          try {
            const json d = mgr.describe(req.path_params.at("id"));
            body["status"] = d.value("status", std::string());
            if (d.contains("stop_reason")) body["stop_reason"] = d["stop_reason"];
          } catch (const Error&) {
          }
        }
        send(res, 409, body);
      } catch (const ConfigError& e) {
        send(res, 422, {{"error", "invalid_request"}, {"message", e.what()}});
      } catch (const ParseError& e) {
        send(res, 422, {{"error", "invalid_request"}, {"message", e.what()}});
      } catch (const NumericalError& e) {
        send(res, 500, {{"error", "numerical_failure"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  };

  srv.Post("/sessions", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const std::string id = mgr.create_session(SessionConfig::from_request(parse_body(req)));
             send(res, 201, mgr.describe(id));
           }));
  srv.Get("/sessions", guarded([&mgr](const httplib::Request&, httplib::Response& res) {
            json ids = mgr.session_ids();
            send(res, 200, {{"sessions", ids}});
          }));
  srv.Get("/sessions/:id", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, mgr.describe(req.path_params.at("id")));
          }));
  srv.Get("/sessions/:id/query", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, mgr.get_query(req.path_params.at("id")));
          }));
  srv.Post("/sessions/:id/response", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             std::int64_t qid;
             PresentedChoice choice;
             try {
               qid = body.at("query_id").get<std::int64_t>();
               choice = presented_choice_from_string(body.at("choice").get<std::string>());
             } catch (const json::exception& e) {
               throw ConfigError(std::string("response needs query_id and choice: ") + e.what());
             }
             send(res, 200, mgr.post_response(req.path_params.at("id"), qid, choice));
           }));
  srv.Get("/sessions/:id/estimate", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            send(res, 200, mgr.get_estimate(req.path_params.at("id")));
          }));
  srv.Post("/sessions/:id/close", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             send(res, 200, mgr.close_session(req.path_params.at("id")));
           }));
  srv.Get("/sessions/:id/events", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            res.status = 200;
            res.set_content(mgr.export_events(req.path_params.at("id")), "application/x-ndjson");
          }));
  srv.Post("/validation", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             std::vector<std::string> ids;
             std::optional<std::uint64_t> seed;
             try {
               ids = body.at("session_ids").get<std::vector<std::string>>();
               if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
             } catch (const json::exception& e) {
               throw ConfigError(std::string("validation needs session_ids: ") + e.what());
             }
             const std::string id = mgr.start_validation(ids, seed);
             send(res, 201, mgr.describe(id));
           }));

  if (!cfg_.static_dir.empty() && !srv.set_mount_point("/", cfg_.static_dir)) {
    std::cerr << "static directory " << cfg_.static_dir << " not found; serving the API only\n";
  }
}

bool HttpServer::listen() { return server_->listen(cfg_.bind_address, cfg_.port); }

int HttpServer::bind_any_port() { return server_->bind_to_any_port(cfg_.bind_address); }

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace prefopt
