#pragma once

// Authenticated encryption of control messages with a shared secret.
// Key = SHA-256(secret); cipher = XChaCha20-Poly1305 with a random 24-byte
// nonce per message. Wire form: {"n": b64 nonce, "c": b64 ciphertext, "t": b64 tag}.

#include <cstddef>
#include <deque>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_set>

#include "json.hpp"

namespace radpipe::net {

struct ControlEnvelope {
  std::string nonce;       // raw bytes
  std::string ciphertext;  // raw bytes
  std::string tag;         // raw bytes

  nlohmann::json to_json() const;
  static ControlEnvelope from_json(const nlohmann::json& doc);  // throws ProtocolError
  bool operator==(const ControlEnvelope&) const = default;
};

/// Encrypts a JSON payload. `context` is authenticated but not sent; replies
/// use the request nonce as context so they cannot be swapped between requests.
ControlEnvelope seal(const nlohmann::json& payload, std::string_view secret, std::string_view context = {});
/// Verifies and decrypts. Throws AuthError on any verification failure.
nlohmann::json open(const ControlEnvelope& envelope, std::string_view secret, std::string_view context = {});

/// seal/open plus the JSON wire wrapper.
std::string encode_control(const nlohmann::json& payload, std::string_view secret, std::string_view context = {});
nlohmann::json decode_control(std::string_view wire, std::string_view secret, std::string_view context = {});

/// True if the text looks like an envelope rather than a plaintext reply.
bool is_envelope(const nlohmann::json& doc);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);  // throws ProtocolError

/// Remembers nonces already accepted in this session.
class ReplayGuard {
 public:
  explicit ReplayGuard(std::size_t capacity = 1u << 20) : capacity_(capacity) {}
  /// False if the nonce was seen before; otherwise records it.
  bool accept(const std::string& nonce);
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::unordered_set<std::string> seen_;
  std::deque<std::string> order_;
};

}  // namespace radpipe::net
