#pragma once

// Network settings from the user's ~/.radpipe-network dotfile:
//   {"feeder":  {"host": "127.0.0.1", "port": 5555},
//    "server":  {"host": "127.0.0.1", "port": 5556, "results_port": 5557},
//    "gateway": {"host": "127.0.0.1", "port": 8080},
//    "secret":  "..."}
// Every key is optional; missing ones take the defaults above.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "radpipe/net/transport.hpp"

namespace radpipe::net {

inline constexpr std::uint16_t kFeederPort = 5555;
inline constexpr std::uint16_t kControlPort = 5556;
inline constexpr std::uint16_t kResultsPort = 5557;
inline constexpr std::uint16_t kGatewayPort = 8080;

struct NetworkConfig {
  Endpoint feeder{"127.0.0.1", kFeederPort};
  Endpoint server{"127.0.0.1", kControlPort};
  std::uint16_t results_port = kResultsPort;
  Endpoint gateway{"127.0.0.1", kGatewayPort};
  std::string secret;

  Endpoint results() const { return {server.host, results_port}; }
  bool operator==(const NetworkConfig&) const = default;
};

/// $HOME/.radpipe-network
std::filesystem::path default_network_config_path();

NetworkConfig network_config_from_json(const nlohmann::json& doc);  // throws SchemaError
nlohmann::json to_json(const NetworkConfig& config);

/// A missing file yields the defaults (with an empty secret).
NetworkConfig load_network_config(const std::filesystem::path& path);
/// Writes the file readable by the owner only.
void save_network_config(const NetworkConfig& config, const std::filesystem::path& path);

/// Throws AuthError if the secret is empty (remote operation needs one).
void require_secret(const NetworkConfig& config);

}  // namespace radpipe::net
