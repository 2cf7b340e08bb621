#include "radpipe/net/envelope.hpp"

#include <sodium.h>

#include <array>

#include "radpipe/errors.hpp"

namespace radpipe::net {

using nlohmann::json;

namespace {

using Key = std::array<unsigned char, crypto_aead_xchacha20poly1305_ietf_KEYBYTES>;

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium initialization failed");
}

Key derive_key(std::string_view secret) {
  if (secret.empty()) throw AuthError("empty shared secret");
  static_assert(crypto_hash_sha256_BYTES == crypto_aead_xchacha20poly1305_ietf_KEYBYTES);
  Key key;
  crypto_hash_sha256(key.data(), reinterpret_cast<const unsigned char*>(secret.data()), secret.size());
  return key;
}

const unsigned char* bytes(std::string_view s) { return reinterpret_cast<const unsigned char*>(s.data()); }

}  // namespace

std::string base64_encode(std::string_view in) {
  ensure_sodium();
  constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(in.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes(in), in.size(), variant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

std::string base64_decode(std::string_view text) {
  ensure_sodium();
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                        &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw ProtocolError("invalid base64");
  }
  out.resize(len);
  return out;
}

json ControlEnvelope::to_json() const {
  return json{{"n", base64_encode(nonce)}, {"c", base64_encode(ciphertext)}, {"t", base64_encode(tag)}};
}

ControlEnvelope ControlEnvelope::from_json(const json& doc) {
  if (!is_envelope(doc)) throw ProtocolError("not a control envelope");
  ControlEnvelope e;
  e.nonce = base64_decode(doc["n"].get<std::string>());
  e.ciphertext = base64_decode(doc["c"].get<std::string>());
  e.tag = base64_decode(doc["t"].get<std::string>());
  return e;
}

bool is_envelope(const json& doc) {
  return doc.is_object() && doc.size() == 3 && doc.contains("n") && doc.contains("c") && doc.contains("t") &&
         doc["n"].is_string() && doc["c"].is_string() && doc["t"].is_string();
}

ControlEnvelope seal(const json& payload, std::string_view secret, std::string_view context) {
  ensure_sodium();
  const Key key = derive_key(secret);
  const std::string plain = payload.dump();
  ControlEnvelope e;
  e.nonce.resize(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
  randombytes_buf(e.nonce.data(), e.nonce.size());
  e.ciphertext.resize(plain.size());
  e.tag.resize(crypto_aead_xchacha20poly1305_ietf_ABYTES);
  unsigned long long tag_len = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt_detached(
      reinterpret_cast<unsigned char*>(e.ciphertext.data()), reinterpret_cast<unsigned char*>(e.tag.data()), &tag_len,
      bytes(plain), plain.size(), bytes(context), context.size(), nullptr, bytes(e.nonce), key.data());
  return e;
}

json open(const ControlEnvelope& e, std::string_view secret, std::string_view context) {
  ensure_sodium();
  const Key key = derive_key(secret);
  if (e.nonce.size() != crypto_aead_xchacha20poly1305_ietf_NPUBBYTES ||
      e.tag.size() != crypto_aead_xchacha20poly1305_ietf_ABYTES) {
    throw AuthError("malformed envelope");
  }
  std::string plain(e.ciphertext.size(), '\0');
  if (crypto_aead_xchacha20poly1305_ietf_decrypt_detached(reinterpret_cast<unsigned char*>(plain.data()), nullptr,
                                                         bytes(e.ciphertext), e.ciphertext.size(), bytes(e.tag),
                                                         bytes(context), context.size(), bytes(e.nonce),
                                                         key.data()) != 0) {
    throw AuthError("message authentication failed");
  }
  try {
    return json::parse(plain);
  } catch (const json::parse_error&) {
    throw AuthError("authenticated payload is not JSON");
  }
}

std::string encode_control(const json& payload, std::string_view secret, std::string_view context) {
  return seal(payload, secret, context).to_json().dump();
}

json decode_control(std::string_view wire, std::string_view secret, std::string_view context) {
  json doc;
  try {
    doc = json::parse(wire);
  } catch (const json::parse_error&) {
    throw AuthError("control message is not JSON");
  }
  ControlEnvelope e;
  try {
    e = ControlEnvelope::from_json(doc);
  } catch (const ProtocolError& err) {
    throw AuthError(std::string("not an authenticated message: ") + err.what());
  }
  return open(e, secret, context);
}

bool ReplayGuard::accept(const std::string& nonce) {
  std::lock_guard lock(mutex_);
  if (!seen_.insert(nonce).second) return false;
  order_.push_back(nonce);
  if (order_.size() > capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  return true;
}

std::size_t ReplayGuard::size() const {
  std::lock_guard lock(mutex_);
  return seen_.size();
}

}  // namespace radpipe::net
