#include "touchadd/service/http.hpp"

#include <httplib.h>
#include <json.hpp>

namespace touchadd::service {

using nlohmann::json;

namespace {

int status_of(ServiceError::Kind k) {
  switch (k) {
    case ServiceError::Kind::kBadRequest: return 400;
    case ServiceError::Kind::kNotFound: return 404;
    case ServiceError::Kind::kTooLarge: return 413;
    case ServiceError::Kind::kUnavailable: return 503;
  }
  return 500;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, json{{"error", message}}, status);
}

json box_json(const NormalizedBBox& b) { return json::array({b.x_c, b.y_c, b.w, b.h}); }

NormalizedBBox parse_box(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ServiceError(ServiceError::Kind::kBadRequest, "bbox must be [x_c, y_c, w, h]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ServiceError(ServiceError::Kind::kBadRequest, std::string("malformed JSON: ") + e.what());
  }
}

// Runs a handler, mapping service and JSON errors to HTTP statuses.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, status_of(e.kind()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("bad request: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

HttpServer::HttpServer(EditService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;

  s.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"placement", service_.has_placement()}, {"editor", service_.has_editor()}});
  }));

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string bytes;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) throw ServiceError(ServiceError::Kind::kBadRequest, "multipart field 'image' missing");
      bytes = req.get_file_value("image").content;
    } else {
      bytes = req.body;
    }
    const std::string id = service_.create_session(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    const SessionInfo info = service_.session_info(id);
    send_json(res, {{"id", id}, {"width", info.width}, {"height", info.height}}, 201);
  }));

  s.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const SessionInfo info = service_.session_info(req.matches[1]);
    send_json(res, {{"id", info.id},
                    {"width", info.width},
                    {"height", info.height},
                    {"turns", info.turns},
                    {"edits", info.edits}});
  }));

  s.Post(R"(/sessions/([^/]+)/placement)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const json& t = body.at("touch");
    TouchPoint touch{t.at("x").get<double>(), t.at("y").get<double>(),
                     parse_frame(t.value("frame", std::string("normalized")))};
    const Turn turn = service_.propose_placement(req.matches[1], body.at("instruction").get<std::string>(), touch);
    send_json(res, {{"turn", turn.id},
                    {"reasoning", turn.placement.reasoning},
                    {"bbox", box_json(turn.placement.bbox)},
                    {"fallback_used", turn.placement.fallback_used},
                    {"tokens", turn.placement.token_ids}});
  }));

  s.Post(R"(/sessions/([^/]+)/edits)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string id = req.matches[1];
    const StoredEdit e = service_.apply_edit(id, body.at("turn").get<int>(), parse_box(body.at("bbox")),
                                             body.value("seed", std::uint64_t{0}));
    send_json(res, {{"edit", e.id}, {"turn", e.turn}, {"bbox", box_json(e.bbox)}, {"seed", e.seed},
                    {"url", "/sessions/" + id + "/edits/" + e.id}},
              201);
  }));

  s.Get(R"(/sessions/([^/]+)/edits/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const StoredEdit e = service_.get_edit(req.matches[1], req.matches[2]);
    const std::string layer = req.has_param("layer") ? req.get_param_value("layer") : "blended";
    std::vector<std::uint8_t> png;
    if (layer == "blended") png = encode_png(e.result.blended_image);
    else if (layer == "edited") png = encode_png(e.result.edited_image);
    else if (layer == "mask") png = encode_png(e.result.instance_mask);
    else throw ServiceError(ServiceError::Kind::kBadRequest, "unknown layer '" + layer + "'");
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace touchadd::service
