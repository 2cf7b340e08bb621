#include "radpipe/net/protocol.hpp"

#include "radpipe/errors.hpp"
#include "radpipe/frame.hpp"
#include "radpipe/net/envelope.hpp"

namespace radpipe::net {

using nlohmann::json;

const std::vector<std::string>& control_commands() {
  static const std::vector<std::string> names{
      std::string(command::kSetCalibration), std::string(command::kNewQueue),     std::string(command::kAbort),
      std::string(command::kReintegrate),    std::string(command::kQueryHistory), std::string(command::kQueryStatus),
      std::string(command::kSubscribeResults)};
  return names;
}

bool is_mutating(std::string_view c) {
  return c == command::kSetCalibration || c == command::kNewQueue || c == command::kAbort ||
         c == command::kReintegrate;
}

std::string EventMessage::to_wire() const {
  nlohmann::ordered_json doc;
  doc["command"] = command;
  doc["argument"] = argument;
  return doc.dump();
}

EventMessage EventMessage::parse(std::string_view wire) {
  json doc;
  try {
    doc = json::parse(wire);
  } catch (const json::parse_error&) {
    throw ProtocolError("event is not JSON");
  }
  if (!doc.is_object() || !doc.contains("command") || !doc["command"].is_string() || !doc.contains("argument") ||
      !doc["argument"].is_string()) {
    throw ProtocolError("event needs string fields \"command\" and \"argument\"");
  }
  return {doc["command"].get<std::string>(), doc["argument"].get<std::string>()};
}

EventMessage new_file_event(const std::string& path) { return {std::string(kNewFile), path}; }

json make_request(std::string_view c, json argument) {
  json doc{{"command", std::string(c)}};
  if (!argument.is_null()) doc["argument"] = std::move(argument);
  return doc;
}

json ok_reply(json fields) {
  json doc = fields.is_object() ? std::move(fields) : json::object();
  doc["ok"] = true;
  return doc;
}

json error_reply(std::string_view code, std::string_view message) {
  return json{{"ok", false}, {"code", std::string(code)}, {"error", std::string(message)}};
}

json to_json(const ClassifierRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"source", r.source_path},
              {"dataset", r.dataset},
              {"acquired_at", r.acquired_at},
              {"acquired_at_iso", format_timestamp(r.acquired_at)},
              {"time_source", std::string(to_string(r.time_source))},
              {"total_intensity", opt(r.total_intensity)},
              {"invariant", opt(r.invariant)},
              {"correlation_length", opt(r.correlation_length)}};
}

ClassifierRecord record_from_json(const json& doc) {
  try {
    ClassifierRecord r;
    r.source_path = doc.at("source").get<std::string>();
    r.dataset = doc.at("dataset").get<std::string>();
    r.acquired_at = doc.at("acquired_at").get<double>();
    r.time_source = doc.at("time_source").get<std::string>() == "header" ? TimeSource::Header : TimeSource::FileTime;
    auto opt = [&](const char* key) -> std::optional<double> {
      const json& v = doc.at(key);
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    r.total_intensity = opt("total_intensity");
    r.invariant = opt("invariant");
    r.correlation_length = opt("correlation_length");
    return r;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed classifier record: ") + e.what());
  }
}

json to_json(const QueueStatus& s) {
  return json{{"active", s.active},       {"workers", s.workers},     {"pending", s.pending},
              {"in_flight", s.in_flight}, {"processed", s.processed}, {"failed", s.failed},
              {"discarded", s.discarded}, {"total", s.total_enqueued}, {"rate_fps", s.rate_fps},
              {"elapsed_s", s.elapsed_s}, {"generation", s.generation}};
}

json profile_to_json(const RadialProfile& p) {
  return json{{"q", p.q}, {"I", p.intensity}, {"E", p.error}};
}

json result_event(const FrameResult& result) {
  return json{{"event", "result"},
              {"record", to_json(result.record)},
              {"profile", profile_to_json(result.profile)},
              {"output", result.output.generic_string()}};
}

json failure_event(const FailureRecord& failure) {
  return json{{"event", "failure"}, {"path", failure.path}, {"error", failure.error}};
}

json state_event(std::string_view state) { return json{{"event", "state"}, {"state", std::string(state)}}; }

json ControlClient::call(const json& payload, std::chrono::milliseconds timeout) {
  const ControlEnvelope request = seal(payload, secret_);
  const std::string wire = client_.request(request.to_json().dump(), timeout);
  json reply;
  try {
    reply = json::parse(wire);
  } catch (const json::parse_error&) {
    throw ProtocolError("server reply is not JSON");
  }
  if (!is_envelope(reply)) {
    // Only rejections of the envelope itself come back in plaintext.
    if (reply.is_object() && reply.value("code", "") == "auth") throw AuthError(reply.value("error", "rejected"));
    throw ProtocolError("unauthenticated reply: " + wire);
  }
  return open(ControlEnvelope::from_json(reply), secret_, request.nonce);
}

}  // namespace radpipe::net
