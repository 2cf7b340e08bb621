#pragma once

// The integration daemon. Lifecycle:
//   IDLE --set_calibration--> CONFIGURED --new_queue--> RUNNING
//   RUNNING --abort--> CONFIGURED;  set_calibration from any state --> CONFIGURED
// Feeder events enqueue paths only while RUNNING; otherwise they are counted and dropped.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"
#include "radpipe/calib.hpp"
#include "radpipe/net/envelope.hpp"
#include "radpipe/net/transport.hpp"
#include "radpipe/pipeline.hpp"

namespace radpipe::net {

enum class ServerState { Idle, Configured, Running };
std::string_view to_string(ServerState state);

struct ServerOptions {
  Endpoint control{"*", 5556};
  Endpoint results{"*", 5557};
  std::optional<Endpoint> feeder;  // subscribe to this event stream
  std::string secret;
  bool open_queries = false;  // allow query_* without a valid envelope
  std::filesystem::path cache_dir;
  std::filesystem::path output_root;  // overrides the calibration's output directory
  /// Observes each verified control payload (before it is executed).
  std::function<void(const nlohmann::json&)> on_command;
};

class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the control and results ports and subscribes to the feeder.
  void start();
  void stop();

  std::uint16_t control_port() const;
  std::uint16_t results_port() const;

  /// Processes one wire request and returns the wire reply. This is what the
  /// control socket calls; exposed for in-process use.
  std::string handle_wire(const std::string& wire);
  /// Processes one feeder event line.
  void handle_event(const std::string& wire);
  /// Executes a verified payload.
  nlohmann::json execute(const nlohmann::json& payload);

  ServerState state() const;
  std::size_t dropped_events() const noexcept { return dropped_events_; }
  std::size_t rejected_requests() const noexcept { return rejected_; }
  const ImageQueue* queue() const;

 private:
  nlohmann::json cmd_set_calibration(const nlohmann::json& argument);
  nlohmann::json cmd_new_queue();
  nlohmann::json cmd_abort();
  nlohmann::json cmd_reintegrate();
  nlohmann::json cmd_query_history(const nlohmann::json& argument);
  nlohmann::json cmd_query_status();
  nlohmann::json cmd_subscribe_results();
  void publish(const nlohmann::json& event);
  void set_state(ServerState s);

  ServerOptions options_;
  mutable std::recursive_mutex mutex_;
  ServerState state_ = ServerState::Idle;
  std::optional<Calibration> calibration_;
  std::unique_ptr<ImageQueue> queue_;
  ReplayGuard replay_;
  std::atomic<std::size_t> dropped_events_{0};
  std::atomic<std::size_t> rejected_{0};

  std::unique_ptr<Publisher> results_;
  std::unique_ptr<ReplyServer> control_;
  std::unique_ptr<Subscriber> feeder_;
};

}  // namespace radpipe::net
