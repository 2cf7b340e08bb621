#include "radpipe/net/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "radpipe/chi.hpp"
#include "radpipe/errors.hpp"

namespace radpipe::net {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void read_endpoint(const json& doc, const char* key, Endpoint& e, std::uint16_t* extra_port = nullptr) {
  if (!doc.contains(key)) return;
  const json& node = doc[key];
  const std::string base = std::string("/") + key;
  if (node.is_string()) {
    e = parse_endpoint(node.get<std::string>());
    return;
  }
  if (!node.is_object()) throw SchemaError(base, "expected an object or \"host:port\" string");
  if (node.contains("host")) {
    if (!node["host"].is_string()) throw SchemaError(base + "/host", "expected a string");
    e.host = node["host"].get<std::string>();
  }
  auto port = [&](const char* name, std::uint16_t& out) {
    if (!node.contains(name)) return;
    const json& p = node[name];
    if (!p.is_number_integer() || p.get<long long>() < 0 || p.get<long long>() > 65535) {
      throw SchemaError(base + "/" + name, "expected an integer port in [0, 65535]");
    }
    out = static_cast<std::uint16_t>(p.get<long long>());
  };
  port("port", e.port);
  if (extra_port) port("results_port", *extra_port);
}

}  // namespace

fs::path default_network_config_path() {
  const char* home = std::getenv("HOME");
  return fs::path(home && *home ? home : ".") / ".radpipe-network";
}

NetworkConfig network_config_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "network config must be a JSON object");
  NetworkConfig c;
  read_endpoint(doc, "feeder", c.feeder);
  read_endpoint(doc, "server", c.server, &c.results_port);
  read_endpoint(doc, "gateway", c.gateway);
  if (doc.contains("secret")) {
    if (!doc["secret"].is_string()) throw SchemaError("/secret", "expected a string");
    c.secret = doc["secret"].get<std::string>();
  }
  return c;
}

json to_json(const NetworkConfig& c) {
  return json{{"feeder", {{"host", c.feeder.host}, {"port", c.feeder.port}}},
              {"server", {{"host", c.server.host}, {"port", c.server.port}, {"results_port", c.results_port}}},
              {"gateway", {{"host", c.gateway.host}, {"port", c.gateway.port}}},
              {"secret", c.secret}};
}

NetworkConfig load_network_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    if (!fs::exists(path)) return {};
    throw IoError("cannot read " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw SchemaError("/", std::string("invalid JSON in ") + path.string() + ": " + e.what());
  }
  return network_config_from_json(doc);
}

void save_network_config(const NetworkConfig& config, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text_atomic(path, to_json(config).dump(2) + "\n");
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
}

void require_secret(const NetworkConfig& config) {
  if (config.secret.empty()) throw AuthError("no shared secret configured (set \"secret\" in the network dotfile)");
}

}  // namespace radpipe::net
