#include "radpipe/net/server.hpp"

#include <spdlog/spdlog.h>

#include "radpipe/errors.hpp"
#include "radpipe/net/protocol.hpp"

namespace radpipe::net {

using nlohmann::json;

std::string_view to_string(ServerState state) {
  switch (state) {
    case ServerState::Idle:
      return "IDLE";
    case ServerState::Configured:
      return "CONFIGURED";
    case ServerState::Running:
      return "RUNNING";
  }
  return "?";
}

Server::Server(ServerOptions options) : options_(std::move(options)) {
  if (options_.secret.empty()) throw AuthError("the server needs a non-empty shared secret");
}

Server::~Server() { stop(); }

void Server::start() {
  results_ = std::make_unique<Publisher>(options_.results);
  control_ = std::make_unique<ReplyServer>(options_.control, [this](const std::string& wire) { return handle_wire(wire); });
  if (options_.feeder) {
    feeder_ = std::make_unique<Subscriber>(*options_.feeder, [this](const std::string& wire) { handle_event(wire); });
  }
  spdlog::info("server listening: control {}, results {}", control_port(), results_port());
}

void Server::stop() {
  feeder_.reset();
  control_.reset();
  {
    std::lock_guard lock(mutex_);
    if (queue_) queue_->abort();
    queue_.reset();
  }
  results_.reset();
}

std::uint16_t Server::control_port() const { return control_ ? control_->port() : 0; }
std::uint16_t Server::results_port() const { return results_ ? results_->port() : 0; }

ServerState Server::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

const ImageQueue* Server::queue() const {
  std::lock_guard lock(mutex_);
  return queue_.get();
}

void Server::publish(const json& event) {
  if (results_) results_->publish(event.dump());
}

void Server::set_state(ServerState s) {
  state_ = s;
  publish(state_event(to_string(s)));
}

std::string Server::handle_wire(const std::string& wire) {
  json doc;
  try {
    doc = json::parse(wire);
  } catch (const json::parse_error&) {
    ++rejected_;
    return error_reply("protocol", "request is not JSON").dump();
  }

  if (!is_envelope(doc)) {
    const bool query = doc.is_object() && doc.contains("command") && doc["command"].is_string() &&
                       !is_mutating(doc["command"].get<std::string>());
    if (options_.open_queries && query) return execute(doc).dump();
    ++rejected_;
    return error_reply("auth", "request is not authenticated").dump();
  }

  ControlEnvelope envelope;
  json payload;
  try {
    envelope = ControlEnvelope::from_json(doc);
    payload = open(envelope, options_.secret);
  } catch (const Error& e) {
    ++rejected_;
    spdlog::warn("rejected control message: {}", e.what());
    return error_reply("auth", "authentication failed").dump();
  }
  if (!replay_.accept(envelope.nonce)) {
    ++rejected_;
    return error_reply("auth", "replayed message").dump();
  }
  if (options_.on_command) options_.on_command(payload);
  return seal(execute(payload), options_.secret, envelope.nonce).to_json().dump();
}

void Server::handle_event(const std::string& wire) {
  EventMessage event;
  try {
    event = EventMessage::parse(wire);
  } catch (const ProtocolError& e) {
    spdlog::warn("ignoring malformed feeder event: {}", e.what());
    ++dropped_events_;
    return;
  }
  if (event.command != kNewFile) {
    spdlog::warn("ignoring feeder command '{}'", event.command);
    ++dropped_events_;
    return;
  }
  std::lock_guard lock(mutex_);
  if (state_ != ServerState::Running || !queue_) {
    ++dropped_events_;
    return;
  }
  queue_->enqueue(event.argument);
}

json Server::execute(const json& payload) {
  if (!payload.is_object() || !payload.contains("command") || !payload["command"].is_string()) {
    return error_reply("protocol", "payload needs a string \"command\"");
  }
  const std::string name = payload["command"].get<std::string>();
  const json argument = payload.value("argument", json(nullptr));
  std::lock_guard lock(mutex_);
  try {
    if (name == command::kSetCalibration) return cmd_set_calibration(argument);
    if (name == command::kNewQueue) return cmd_new_queue();
    if (name == command::kAbort) return cmd_abort();
    if (name == command::kReintegrate) return cmd_reintegrate();
    if (name == command::kQueryHistory) return cmd_query_history(argument);
    if (name == command::kQueryStatus) return cmd_query_status();
    if (name == command::kSubscribeResults) return cmd_subscribe_results();
    return error_reply("protocol", "unknown command '" + name + "'");
  } catch (const SchemaError& e) {
    return error_reply("schema", e.what());
  } catch (const ValidationError& e) {
    return error_reply("validation", e.what());
  } catch (const Error& e) {
    return error_reply("error", e.what());
  } catch (const std::exception& e) {
    return error_reply("error", e.what());
  }
}

json Server::cmd_set_calibration(const json& argument) {
  if (!argument.is_object()) return error_reply("schema", "set_calibration needs the calibration object as argument");
  Calibration cal = calibration_from_json(argument);
  if (queue_) {
    queue_->abort();
    queue_.reset();
  }
  calibration_ = std::move(cal);
  set_state(ServerState::Configured);
  return ok_reply({{"state", to_string(state_)}});
}

json Server::cmd_new_queue() {
  if (!calibration_) return error_reply("state", "no calibration has been set");
  if (queue_) {
    queue_->abort();
    queue_.reset();
  }
  QueueOptions qo;
  qo.cache_dir = options_.cache_dir;
  qo.output_root = options_.output_root;
  qo.on_result = [this](const FrameResult& r) { publish(result_event(r)); };
  qo.on_failure = [this](const FailureRecord& f) { publish(failure_event(f)); };
  auto queue = std::make_unique<ImageQueue>(*calibration_, qo);
  queue->start();
  const json info{{"bins", queue->weights().n_bins()},
                  {"nonzeros", queue->weights().nonzeros()},
                  {"workers", calibration_->threads}};
  queue_ = std::move(queue);
  set_state(ServerState::Running);
  return ok_reply({{"state", to_string(state_)}, {"matrix", info}});
}

json Server::cmd_abort() {
  std::size_t discarded = 0;
  if (queue_) {
    const auto before = queue_->status().discarded;
    queue_->abort();
    discarded = queue_->status().discarded - before;
  }
  if (state_ == ServerState::Running) set_state(ServerState::Configured);
  return ok_reply({{"state", to_string(state_)}, {"discarded", discarded}});
}

json Server::cmd_reintegrate() {
  if (state_ != ServerState::Running || !queue_) return error_reply("state", "no running queue");
  const std::size_t n = queue_->reintegrate();
  return ok_reply({{"state", to_string(state_)}, {"queued", n}});
}

json Server::cmd_query_history(const json& argument) {
  std::optional<std::string> dataset;
  if (argument.is_object() && argument.contains("dataset") && !argument["dataset"].is_null()) {
    if (!argument["dataset"].is_string()) return error_reply("schema", "/argument/dataset: expected a string");
    dataset = argument["dataset"].get<std::string>();
  }
  json records = json::array();
  json datasets = json::array();
  if (queue_) {
    for (const auto& r : queue_->history().query(dataset)) records.push_back(to_json(r));
    datasets = queue_->history().datasets();
  }
  return ok_reply({{"records", records}, {"datasets", datasets}});
}

json Server::cmd_query_status() {
  json reply{{"state", to_string(state_)}, {"dropped_events", dropped_events_.load()}};
  reply["queue"] = queue_ ? to_json(queue_->status()) : json(nullptr);
  reply["calibration"] = calibration_ ? to_json(*calibration_) : json(nullptr);
  return ok_reply(reply);
}

json Server::cmd_subscribe_results() {
  return ok_reply({{"results_port", results_port()}, {"format", "newline-delimited JSON"}});
}

}  // namespace radpipe::net
