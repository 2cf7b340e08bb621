#pragma once

// JSON payloads shared by the feeder, server, gateway and clients.
//
// Feeder event (plaintext):   {"command":"new file","argument":"<path>"}
// Control request (sealed):   {"command":"<name>","argument":<json, optional>}
// Control reply (sealed):     {"ok":true,...} or {"ok":false,"code":"...","error":"..."}
// Result stream (plaintext):  {"event":"result"|"failure"|"state",...}
//
// See docs/protocol.md for every command's argument and reply fields.

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "radpipe/net/transport.hpp"
#include "radpipe/pipeline.hpp"
#include "radpipe/reduce.hpp"

namespace radpipe::net {

inline constexpr std::string_view kNewFile = "new file";

namespace command {
inline constexpr std::string_view kSetCalibration = "set_calibration";
inline constexpr std::string_view kNewQueue = "new_queue";
inline constexpr std::string_view kAbort = "abort";
inline constexpr std::string_view kReintegrate = "reintegrate";
inline constexpr std::string_view kQueryHistory = "query_history";
inline constexpr std::string_view kQueryStatus = "query_status";
inline constexpr std::string_view kSubscribeResults = "subscribe_results";
}  // namespace command

/// Every control command, in documentation order.
const std::vector<std::string>& control_commands();
/// Commands that change server state and therefore always need a sealed envelope.
bool is_mutating(std::string_view command);

struct EventMessage {
  std::string command;
  std::string argument;

  /// Compact JSON with keys in the order command, argument.
  std::string to_wire() const;
  static EventMessage parse(std::string_view wire);  // throws ProtocolError
  bool operator==(const EventMessage&) const = default;
};

EventMessage new_file_event(const std::string& path);

nlohmann::json make_request(std::string_view command, nlohmann::json argument = nullptr);
nlohmann::json ok_reply(nlohmann::json fields = nlohmann::json::object());
nlohmann::json error_reply(std::string_view code, std::string_view message);

nlohmann::json to_json(const ClassifierRecord& record);
ClassifierRecord record_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const QueueStatus& status);
nlohmann::json profile_to_json(const RadialProfile& profile);

nlohmann::json result_event(const FrameResult& result);
nlohmann::json failure_event(const FailureRecord& failure);
nlohmann::json state_event(std::string_view state);

/// Sends sealed requests to a server's control port and opens its replies.
class ControlClient {
 public:
  ControlClient(Endpoint endpoint, std::string secret) : client_(std::move(endpoint)), secret_(std::move(secret)) {}

  /// Returns the reply payload. Throws AuthError when the server rejects the
  /// secret or its reply fails verification, IoError when unreachable.
  nlohmann::json call(const nlohmann::json& payload, std::chrono::milliseconds timeout = std::chrono::seconds(30));
  nlohmann::json call(std::string_view command, nlohmann::json argument = nullptr,
                      std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    return call(make_request(command, std::move(argument)), timeout);
  }

 private:
  RequestClient client_;
  std::string secret_;
};

}  // namespace radpipe::net
