#include "radpipe/net/gateway.hpp"

#include <httplib.h>
#include <sodium.h>
#include <spdlog/spdlog.h>

#include <condition_variable>
#include <deque>
#include <list>

#include "radpipe/errors.hpp"
#include "radpipe/net/protocol.hpp"

namespace radpipe::net {

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

constexpr std::size_t kClientBacklog = 4096;

struct Channel {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::string> messages;
  bool closed = false;
};

std::string random_token() {
  unsigned char raw[32];
  randombytes_buf(raw, sizeof raw);
  char hex[65];
  sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
  return hex;
}

bool same_secret(std::string_view a, std::string_view b) {
  unsigned char ha[crypto_hash_sha256_BYTES], hb[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(ha, reinterpret_cast<const unsigned char*>(a.data()), a.size());
  crypto_hash_sha256(hb, reinterpret_cast<const unsigned char*>(b.data()), b.size());
  return sodium_memcmp(ha, hb, sizeof ha) == 0;
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Gateway::Impl {
  GatewayOptions options;
  httplib::Server http;
  std::thread http_thread;
  ControlClient control;
  ControlClient ping_client;  // separate connection so a long command never delays a ping

  mutable std::mutex token_mutex;
  std::set<std::string> tokens;

  mutable std::mutex status_mutex;
  bool connected = false;
  std::optional<std::chrono::steady_clock::time_point> last_ok;
  json last_status = nullptr;
  std::string last_error = "not yet contacted";

  mutable std::mutex channel_mutex;
  std::list<std::shared_ptr<Channel>> channels;
  std::atomic<bool> running{false};

  std::unique_ptr<Subscriber> results;
  std::jthread pinger;

  explicit Impl(GatewayOptions o)
      : options(std::move(o)), control(options.server, options.secret), ping_client(options.server, options.secret) {}

  bool authorized(const httplib::Request& req) const {
    std::string token;
    const std::string auth = req.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0) token = auth.substr(7);
    if (token.empty()) token = req.get_param_value("token");
    std::lock_guard lock(token_mutex);
    return !token.empty() && tokens.count(token) > 0;
  }

  void broadcast(const std::string& message) {
    std::lock_guard lock(channel_mutex);
    for (auto& ch : channels) {
      {
        std::lock_guard cl(ch->mutex);
        if (ch->messages.size() >= kClientBacklog) ch->messages.pop_front();
        ch->messages.push_back(message);
      }
      ch->cv.notify_one();
    }
  }

  void ping_loop(std::stop_token stop) {
    while (!stop.stop_requested()) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        json reply = ping_client.call(command::kQueryStatus, nullptr, options.ping_timeout);
        std::lock_guard lock(status_mutex);
        connected = true;
        last_ok = std::chrono::steady_clock::now();
        last_status = std::move(reply);
        last_error.clear();
      } catch (const std::exception& e) {
        std::lock_guard lock(status_mutex);
        connected = false;
        last_error = e.what();
      }
      const auto next = t0 + options.ping_interval;
      while (!stop.stop_requested() && std::chrono::steady_clock::now() < next) std::this_thread::sleep_for(10ms);
    }
  }

  json status() const {
    std::lock_guard lock(status_mutex);
    json s{{"connected", connected}, {"server", options.server.to_string()}};
    s["last_seen_ms"] =
        last_ok ? json(std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - *last_ok)
                           .count())
                : json(nullptr);
    if (connected && last_status.is_object()) {
      s["state"] = last_status.value("state", "");
      s["queue"] = last_status.value("queue", json(nullptr));
    } else {
      s["state"] = "DISCONNECTED";
      s["error"] = last_error;
    }
    s["results_stream"] = results && results->connected();
    {
      std::lock_guard cl(channel_mutex);
      s["event_clients"] = channels.size();
    }
    return s;
  }

  void routes() {
    http.Post("/api/login", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        return reply_json(res, 400, error_reply("protocol", "body is not JSON"));
      }
      if (!body.is_object() || !body.contains("secret") || !body["secret"].is_string() ||
          !same_secret(body["secret"].get<std::string>(), options.secret)) {
        return reply_json(res, 401, error_reply("auth", "wrong secret"));
      }
      const std::string token = random_token();
      {
        std::lock_guard lock(token_mutex);
        tokens.insert(token);
      }
      reply_json(res, 200, ok_reply({{"token", token}}));
    });

    http.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) return reply_json(res, 401, error_reply("auth", "missing or unknown token"));
      json payload;
      try {
        payload = json::parse(req.body);
      } catch (const json::parse_error&) {
        return reply_json(res, 400, error_reply("protocol", "body is not JSON"));
      }
      try {
        const json reply = control.call(payload, std::chrono::minutes(5));
        reply_json(res, 200, reply);
      } catch (const AuthError& e) {
        reply_json(res, 502, error_reply("auth", e.what()));
      } catch (const std::exception& e) {
        reply_json(res, 503, error_reply("unreachable", std::string("server unreachable: ") + e.what()));
      }
    });

    http.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, status()); });

    http.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) return reply_json(res, 401, error_reply("auth", "missing or unknown token"));
      auto ch = std::make_shared<Channel>();
      {
        std::lock_guard lock(channel_mutex);
        channels.push_back(ch);
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, ch](std::size_t, httplib::DataSink& sink) {
            std::unique_lock lock(ch->mutex);
            ch->cv.wait_for(lock, 1s, [&] { return !ch->messages.empty() || ch->closed || !running; });
            if (ch->closed || !running) return false;
            if (ch->messages.empty()) {
              static constexpr char keepalive[] = ": keepalive\n\n";
              lock.unlock();
              return sink.write(keepalive, sizeof keepalive - 1);
            }
            std::deque<std::string> batch;
            batch.swap(ch->messages);
            lock.unlock();
            for (const auto& m : batch) {
              const std::string frame = "data: " + m + "\n\n";
              if (!sink.write(frame.data(), frame.size())) return false;
            }
            return true;
          },
          [this, ch](bool) {
            std::lock_guard lock(channel_mutex);
            channels.remove(ch);
          });
    });

    if (!options.static_dir.empty() && !http.set_mount_point("/", options.static_dir)) {
      spdlog::warn("gateway: cannot serve static files from {}", options.static_dir);
    }
  }

  void close_channels() {
    std::lock_guard lock(channel_mutex);
    for (auto& ch : channels) {
      {
        std::lock_guard cl(ch->mutex);
        ch->closed = true;
      }
      ch->cv.notify_all();
    }
  }
};

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (options_.secret.empty()) throw AuthError("the gateway needs the shared secret");
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  if (impl_) return;
  impl_ = std::make_unique<Impl>(options_);
  impl_->routes();
  const std::string host = options_.listen.host == "*" ? "0.0.0.0" : options_.listen.host;
  if (options_.listen.port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    if (p <= 0) throw IoError("gateway cannot bind " + host);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!impl_->http.bind_to_port(host, options_.listen.port)) {
      throw IoError("gateway cannot bind " + options_.listen.to_string());
    }
    port_ = options_.listen.port;
  }
  impl_->running = true;
  impl_->http_thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->results = std::make_unique<Subscriber>(options_.results, [impl = impl_.get()](const std::string& m) {
    impl->broadcast(m);
  });
  impl_->pinger = std::jthread([impl = impl_.get()](std::stop_token stop) { impl->ping_loop(stop); });
  impl_->http.wait_until_ready();
  spdlog::info("gateway listening on port {}", port_);
}

void Gateway::stop() {
  if (!impl_) return;
  impl_->running = false;
  impl_->close_channels();
  impl_->pinger = {};
  impl_->results.reset();
  impl_->http.stop();
  if (impl_->http_thread.joinable()) impl_->http_thread.join();
  impl_.reset();
}

json Gateway::status() const { return impl_ ? impl_->status() : json{{"connected", false}, {"state", "STOPPED"}}; }

std::size_t Gateway::event_clients() const {
  if (!impl_) return 0;
  std::lock_guard lock(impl_->channel_mutex);
  return impl_->channels.size();
}

}  // namespace radpipe::net
