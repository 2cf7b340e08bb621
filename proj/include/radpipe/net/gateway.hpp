#pragma once

// Browser-facing bridge to the server.
//   POST /api/login    {"secret": "..."}           -> {"token": "..."}
//   POST /api/command  control payload (Bearer token) -> server reply payload
//   GET  /api/status   connection state, refreshed by a ping every 500 ms
//   GET  /api/events   server results stream as server-sent events (?token=...)
// The gateway seals commands with the shared secret on the browser's behalf.

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "json.hpp"
#include "radpipe/net/transport.hpp"

namespace radpipe::net {

struct GatewayOptions {
  Endpoint listen{"127.0.0.1", 8080};
  Endpoint server{"127.0.0.1", 5556};
  Endpoint results{"127.0.0.1", 5557};
  std::string secret;
  std::chrono::milliseconds ping_interval{500};
  std::chrono::milliseconds ping_timeout{1000};
  std::string static_dir;  // optional directory served at "/"
};

class Gateway {
 public:
  explicit Gateway(GatewayOptions options);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start();
  void stop();
  std::uint16_t port() const noexcept { return port_; }

  /// Snapshot served by /api/status.
  nlohmann::json status() const;
  std::size_t event_clients() const;

  struct Impl;

 private:
  GatewayOptions options_;
  std::uint16_t port_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace radpipe::net
