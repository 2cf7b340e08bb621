#pragma once

// Thin TCP transport carrying newline-delimited UTF-8 JSON messages.
//   Publisher/Subscriber: one-to-many event stream (late joiners miss earlier messages).
//   ReplyServer/RequestClient: request-reply, one reply line per request line.
// Port 0 binds an ephemeral port; port() reports the bound one.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace radpipe::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const;
  bool operator==(const Endpoint&) const = default;
};

/// Accepts "tcp://host:port", "host:port" or ":port" ("*" binds every interface).
Endpoint parse_endpoint(const std::string& text);

/// Owns a socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    const int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() noexcept;

 private:
  int fd_ = -1;
};

Socket listen_tcp(const Endpoint& endpoint);
std::uint16_t local_port(const Socket& socket);
/// Throws IoError when the connection cannot be made within the timeout.
Socket connect_tcp(const Endpoint& endpoint, std::chrono::milliseconds timeout);
/// Sends the whole buffer; false when the peer is gone or the send timed out.
bool send_all(const Socket& socket, std::string_view data);

/// Splits an incoming byte stream into lines.
class LineReader {
 public:
  enum class Status { Line, Timeout, Closed };
  /// Waits up to `timeout` for a full line.
  Status read_line(const Socket& socket, std::string& line, std::chrono::milliseconds timeout);
  /// Appends received bytes and extracts complete lines.
  bool feed(const Socket& socket, std::vector<std::string>& lines);

 private:
  bool take(std::string& line);
  std::string buffer_;
};

class Publisher {
 public:
  explicit Publisher(const Endpoint& bind);
  ~Publisher();
  Publisher(const Publisher&) = delete;
  Publisher& operator=(const Publisher&) = delete;

  /// Sends one message to every connected subscriber; returns how many got it.
  std::size_t publish(const std::string& message);
  std::uint16_t port() const noexcept { return port_; }
  std::size_t subscriber_count() const;
  bool wait_for_subscribers(std::size_t n, std::chrono::milliseconds timeout) const;

 private:
  void accept_loop(std::stop_token stop);

  Socket listener_;
  std::uint16_t port_ = 0;
  mutable std::mutex mutex_;
  std::vector<Socket> subscribers_;
  std::jthread thread_;
};

class Subscriber {
 public:
  using Handler = std::function<void(const std::string&)>;
  /// Connects in the background and reconnects after failures.
  Subscriber(const Endpoint& endpoint, Handler handler,
             std::chrono::milliseconds retry = std::chrono::milliseconds(100));
  ~Subscriber();
  Subscriber(const Subscriber&) = delete;
  Subscriber& operator=(const Subscriber&) = delete;

  bool connected() const noexcept { return connected_; }
  bool wait_connected(std::chrono::milliseconds timeout) const;

 private:
  void run(std::stop_token stop);

  Endpoint endpoint_;
  Handler handler_;
  std::chrono::milliseconds retry_;
  std::atomic<bool> connected_{false};
  std::jthread thread_;
};

class ReplyServer {
 public:
  using Handler = std::function<std::string(const std::string&)>;
  /// Handles every request on a single thread, in arrival order.
  ReplyServer(const Endpoint& bind, Handler handler);
  ~ReplyServer();
  ReplyServer(const ReplyServer&) = delete;
  ReplyServer& operator=(const ReplyServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }

 private:
  void run(std::stop_token stop);

  Socket listener_;
  std::uint16_t port_ = 0;
  Handler handler_;
  std::jthread thread_;
};

class RequestClient {
 public:
  explicit RequestClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

  /// Sends one line and waits for one reply line. Reconnects once if the
  /// cached connection went stale. Throws IoError on failure or timeout.
  std::string request(const std::string& message, std::chrono::milliseconds timeout = std::chrono::seconds(5));
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::mutex mutex_;
  Socket socket_;
  LineReader reader_;
};

}  // namespace radpipe::net
