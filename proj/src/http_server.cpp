#include "labelforge/http_server.hpp"

#include <fstream>
#include <sstream>

#include "httplib.h"
#include "labelforge/error.hpp"

namespace labelforge {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnauthorized: return 401;
    case ErrorCode::kConsentMissing:
    case ErrorCode::kBannedAnnotator: return 403;
    case ErrorCode::kUnknownBatch:
    case ErrorCode::kNoLabels: return 404;
    case ErrorCode::kLeaseAlreadyOpen:
    case ErrorCode::kAlreadySubmitted: return 409;
    case ErrorCode::kPoolExhausted:
    case ErrorCode::kLeaseExpired: return 410;
    case ErrorCode::kIncompleteChoices:
    case ErrorCode::kInvalidChoice: return 422;
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kLogUnwritable: return 503;
    default: return 500;
  }
}

std::pair<std::string, int> split_bind_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kConfigInvalid, "bind_addr needs host:port");
  }
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfigInvalid, "bad port in bind_addr " + addr);
  }
}

namespace {

constexpr const char* kJson = "application/json";

std::string bearer(const httplib::Request& req) {
  auto h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (h.size() <= kPrefix.size() || h.compare(0, kPrefix.size(), kPrefix) != 0) {
    return {};
  }
  return h.substr(kPrefix.size());
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& msg) {
  res.status = http_status(code);
  nlohmann::json body{{"error", error_code_name(code)}, {"message", msg}};
  res.set_content(body.dump(), kJson);
}

void send_json(httplib::Response& res, const nlohmann::json& body,
               int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

// Runs a handler and maps protocol errors onto status codes.
template <typename F>
auto guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req,
                                  httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorCode::kInvalidArgument, e.what());
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(
          nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump(),
          kJson);
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kInvalidArgument, "request body is not JSON");
  }
  return j;
}

}  // namespace

HttpServer::HttpServer(CollectionService& service, std::string admin_token,
                       std::filesystem::path image_dir, int worker_threads)
    : service_(service),
      admin_token_(std::move(admin_token)),
      image_dir_(std::move(image_dir)),
      server_(std::make_unique<httplib::Server>()) {
  server_->new_task_queue = [worker_threads] {
    return new httplib::ThreadPool(static_cast<size_t>(worker_threads));
  };
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo,
                "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::install_routes() {
  auto& s = *server_;

  // The web client may be served from another origin. Tokens travel in the
  // Authorization header, never in cookies.
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(/v1/.*)", [](const auto&, auto& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers",
                   "Authorization, Content-Type");
    res.status = 204;
  });

  s.Post("/v1/session", guarded([this](const auto&, auto& res) {
           auto creds = service_.create_session();
           send_json(res, {{"annotator_id", creds.annotator_id},
                           {"token", creds.token}});
         }));

  s.Post("/v1/consent", guarded([this](const auto& req, auto& res) {
           auto token = bearer(req);
           auto body = parse_body(req);
           if (!body.is_object() || !body.contains("accepted") ||
               !body["accepted"].is_boolean()) {
             // Authenticate first so a missing token is still a 401.
             service_.me(token);
             throw Error(ErrorCode::kInvalidArgument,
                         "body must be {\"accepted\": bool}");
           }
           service_.consent(token, body["accepted"].template get<bool>());
           res.status = 204;
         }));

  s.Get("/v1/batch", guarded([this](const auto& req, auto& res) {
          auto batch = service_.next_batch(bearer(req));
          nlohmann::json items = nlohmann::json::array();
          for (const auto& item : batch.items) {
            items.push_back(client_view(item, "/images/"));
          }
          send_json(res, {{"batch_id", batch.batch_id},
                          {"expires_at", to_unix_ms(batch.expires_at)},
                          {"items", std::move(items)}});
        }));

  s.Post(R"(/v1/batch/([A-Za-z0-9_.-]+)/labels)",
         guarded([this](const auto& req, auto& res) {
           auto token = bearer(req);
           auto body = nlohmann::json::parse(req.body, nullptr, false);
           if (body.is_discarded()) {
             service_.me(token);
             throw Error(ErrorCode::kInvalidChoice, "body is not JSON");
           }
           auto choices = [&] {
             try {
               return parse_wire_choices(body);
             } catch (const Error&) {
               service_.me(token);
               throw;
             }
           }();
           auto out = service_.submit(token, req.matches[1].str(), choices);
           send_json(res, {{"reward", out.reward},
                           {"accuracy_band", out.accuracy_band},
                           {"banned", out.banned}});
         }));

  s.Get("/v1/me/stats", guarded([this](const auto& req, auto& res) {
          auto me = service_.me(bearer(req));
          send_json(res, {{"reward_balance", me.reward_balance},
                          {"labels_submitted", me.labels_submitted},
                          {"accuracy_band", me.accuracy_band},
                          {"banned", me.banned}});
        }));

  auto admin = [this](const httplib::Request& req) {
    if (admin_token_.empty() || bearer(req) != admin_token_) {
      throw Error(ErrorCode::kUnauthorized, "admin token required");
    }
  };

  s.Get("/v1/admin/stats", guarded([this, admin](const auto& req, auto& res) {
          admin(req);
          send_json(res, service_.admin_stats());
        }));

  s.Get("/v1/admin/export", guarded([this, admin](const auto& req, auto& res) {
          admin(req);
          res.set_content(service_.admin_export(), "application/x-ndjson");
        }));

  s.Get("/v1/admin/state_hash",
        guarded([this, admin](const auto& req, auto& res) {
          admin(req);
          auto snap = service_.snapshot();
          send_json(res, {{"state_hash", state_hash(snap)},
                          {"last_seq", snap.last_seq}});
        }));

  s.Get(R"(/images/([A-Za-z0-9_-]+\.svg))",
        guarded([this](const auto& req, auto& res) {
          auto path = image_dir_ / req.matches[1].str();
          std::ifstream in(path, std::ios::binary);
          if (!in) {
            send_json(res, {{"error", "not_found"}, {"message", "no image"}},
                      404);
            return;
          }
          std::ostringstream data;
          data << in.rdbuf();
          res.set_header("Cache-Control", "public, max-age=31536000, immutable");
          res.set_content(data.str(), "image/svg+xml");
        }));

  s.set_error_handler([](const auto&, auto& res) {
    if (res.body.empty()) {
      res.set_content(
          nlohmann::json{{"error", "not_found"}, {"message", "no such route"}}
              .dump(),
          kJson);
    }
  });
}

}  // namespace labelforge
