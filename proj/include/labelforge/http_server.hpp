#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "labelforge/error.hpp"
#include "labelforge/service.hpp"

namespace httplib {
class Server;
}

namespace labelforge {

// JSON over HTTP/1.1 front end for CollectionService.
//
//   POST /v1/session                    -> {annotator_id, token}
//   POST /v1/consent {accepted}         -> 204
//   GET  /v1/batch                      -> {batch_id, expires_at, items}
//   POST /v1/batch/{id}/labels {choices}-> {reward, accuracy_band, banned}
//   GET  /v1/me/stats                   -> {reward_balance, labels_submitted,
//                                           accuracy_band, banned}
//   GET  /v1/admin/stats                -> dataset statistics
//   GET  /v1/admin/export               -> dataset as JSON lines
//   GET  /v1/admin/state_hash           -> {state_hash, last_seq}
//   GET  /images/{file}                 -> stub images
//
// Errors are {"error": <code>, "message": <text>}.
class HttpServer {
 public:
  HttpServer(CollectionService& service, std::string admin_token,
             std::filesystem::path image_dir, int worker_threads = 64);
  ~HttpServer();

  // Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  void install_routes();

  CollectionService& service_;
  std::string admin_token_;
  std::filesystem::path image_dir_;
  std::unique_ptr<httplib::Server> server_;
};

// HTTP status for a protocol error.
int http_status(ErrorCode code);

// Splits "host:port".
std::pair<std::string, int> split_bind_addr(const std::string& addr);

}  // namespace labelforge
