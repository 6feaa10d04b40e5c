#pragma once

#include <memory>
#include <string>

#include "touchadd/service/service.hpp"

namespace httplib {
class Server;
}

namespace touchadd::service {

/// JSON/PNG HTTP front end for an EditService.
///
///   POST /sessions                       PNG body or multipart field "image"
///   GET  /sessions/{id}
///   POST /sessions/{id}/placement        {"instruction", "touch": {"x", "y", "frame"}}
///   POST /sessions/{id}/edits            {"turn", "bbox": [x_c, y_c, w, h], "seed"}
///   GET  /sessions/{id}/edits/{eid}      PNG; ?layer=blended|edited|mask
///   GET  /healthz
class HttpServer {
 public:
  explicit HttpServer(EditService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the port (0 picks a free one) and returns it, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  bool listen();
  void stop();

 private:
  EditService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace touchadd::service
