#pragma once

#include "prefopt/service.hpp"

#include <memory>

namespace httplib {
class Server;
}

namespace prefopt {

/// HTTP+JSON front of a SessionManager.
class HttpServer {
 public:
  HttpServer(SessionManager& manager, const ServiceConfig& cfg);
  ~HttpServer();

  /// Binds and serves until stop(); returns false if binding fails.
  bool listen();
  /// Binds to an ephemeral port on the configured address; returns the port.
  int bind_any_port();
  bool listen_after_bind();
  void stop();

 private:
  void routes();

  SessionManager& manager_;
  ServiceConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace prefopt
