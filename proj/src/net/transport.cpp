#include "radpipe/net/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "radpipe/errors.hpp"

namespace radpipe::net {

namespace {

using namespace std::chrono_literals;

constexpr auto kPollSlice = 50ms;
constexpr std::size_t kMaxLine = 64u << 20;

int poll_ms(std::chrono::milliseconds d) { return static_cast<int>(std::max<std::int64_t>(0, d.count())); }

std::string errno_text() { return std::strerror(errno); }

sockaddr_in resolve(const Endpoint& e) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  if (e.host.empty() || e.host == "*" || e.host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw IoError("cannot resolve host " + e.host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

void set_send_timeout(int fd, std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

// Waits for the fd to become readable; false on timeout.
bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  const int rc = ::poll(&p, 1, poll_ms(timeout));
  return rc > 0;
}

Socket accept_one(const Socket& listener) {
  const int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return Socket();
  set_nodelay(fd);
  set_send_timeout(fd, 2s);
  return Socket(fd);
}

}  // namespace

std::string Endpoint::to_string() const { return "tcp://" + host + ":" + std::to_string(port); }

Endpoint parse_endpoint(const std::string& text) {
  std::string s = text;
  if (s.rfind("tcp://", 0) == 0) s = s.substr(6);
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ValidationError("endpoint needs a port: " + text);
  Endpoint e;
  e.host = s.substr(0, colon);
  if (e.host.empty()) e.host = "*";
  const std::string port = s.substr(colon + 1);
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc() || ptr != port.data() + port.size() || value > 65535) {
    throw ValidationError("bad port in endpoint: " + text);
  }
  e.port = static_cast<std::uint16_t>(value);
  return e;
}

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

Socket listen_tcp(const Endpoint& endpoint) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError("socket: " + errno_text());
  int one = 1;
  setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const sockaddr_in addr = resolve(endpoint);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    throw IoError("cannot bind " + endpoint.to_string() + ": " + errno_text());
  }
  if (::listen(s.fd(), 64) != 0) throw IoError("listen: " + errno_text());
  return s;
}

std::uint16_t local_port(const Socket& socket) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(socket.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return 0;
  return ntohs(addr.sin_port);
}

Socket connect_tcp(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  Endpoint target = endpoint;
  if (target.host == "*" || target.host.empty() || target.host == "0.0.0.0") target.host = "127.0.0.1";
  const sockaddr_in addr = resolve(target);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw IoError("socket: " + errno_text());
  const int flags = fcntl(s.fd(), F_GETFL, 0);
  fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) throw IoError("cannot connect to " + target.to_string() + ": " + errno_text());
  if (rc != 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    if (::poll(&p, 1, poll_ms(timeout)) <= 0) throw IoError("timed out connecting to " + target.to_string());
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw IoError("cannot connect to " + target.to_string() + ": " + std::strerror(err));
  }
  fcntl(s.fd(), F_SETFL, flags);
  set_nodelay(s.fd());
  set_send_timeout(s.fd(), 2s);
  return s;
}

bool send_all(const Socket& socket, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(socket.fd(), data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

bool LineReader::take(std::string& line) {
  const auto nl = buffer_.find('\n');
  if (nl == std::string::npos) return false;
  line.assign(buffer_, 0, nl);
  buffer_.erase(0, nl + 1);
  return true;
}

bool LineReader::feed(const Socket& socket, std::vector<std::string>& lines) {
  char chunk[65536];
  const ssize_t n = ::recv(socket.fd(), chunk, sizeof chunk, 0);
  if (n <= 0) return n < 0 && (errno == EINTR || errno == EAGAIN);
  buffer_.append(chunk, static_cast<std::size_t>(n));
  if (buffer_.size() > kMaxLine) return false;
  std::string line;
  while (take(line)) lines.push_back(std::move(line));
  return true;
}

LineReader::Status LineReader::read_line(const Socket& socket, std::string& line, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    if (take(line)) return Status::Line;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return Status::Timeout;
    if (!wait_readable(socket.fd(), left)) continue;
    char chunk[65536];
    const ssize_t n = ::recv(socket.fd(), chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return Status::Closed;
    buffer_.append(chunk, static_cast<std::size_t>(n));
    if (buffer_.size() > kMaxLine) return Status::Closed;
  }
}

Publisher::Publisher(const Endpoint& bind) : listener_(listen_tcp(bind)), port_(local_port(listener_)) {
  thread_ = std::jthread([this](std::stop_token stop) { accept_loop(stop); });
}

Publisher::~Publisher() {
  thread_.request_stop();
  if (thread_.joinable()) thread_.join();
}

void Publisher::accept_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    if (!wait_readable(listener_.fd(), kPollSlice)) {
      // Drop subscribers that hung up so the count stays meaningful.
      std::lock_guard lock(mutex_);
      std::erase_if(subscribers_, [](const Socket& s) {
        pollfd p{s.fd(), POLLIN, 0};
        if (::poll(&p, 1, 0) <= 0) return false;
        char c;
        return ::recv(s.fd(), &c, 1, MSG_PEEK | MSG_DONTWAIT) == 0;
      });
      continue;
    }
    Socket s = accept_one(listener_);
    if (!s.valid()) continue;
    std::lock_guard lock(mutex_);
    subscribers_.push_back(std::move(s));
  }
}

std::size_t Publisher::publish(const std::string& message) {
  const std::string line = message + '\n';
  std::lock_guard lock(mutex_);
  std::size_t delivered = 0;
  std::erase_if(subscribers_, [&](const Socket& s) {
    if (send_all(s, line)) {
      ++delivered;
      return false;
    }
    return true;
  });
  return delivered;
}

std::size_t Publisher::subscriber_count() const {
  std::lock_guard lock(mutex_);
  return subscribers_.size();
}

bool Publisher::wait_for_subscribers(std::size_t n, std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (subscriber_count() < n) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(5ms);
  }
  return true;
}

Subscriber::Subscriber(const Endpoint& endpoint, Handler handler, std::chrono::milliseconds retry)
    : endpoint_(endpoint), handler_(std::move(handler)), retry_(retry) {
  thread_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

Subscriber::~Subscriber() {
  thread_.request_stop();
  if (thread_.joinable()) thread_.join();
}

bool Subscriber::wait_connected(std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!connected_) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(5ms);
  }
  return true;
}

void Subscriber::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    Socket s;
    try {
      s = connect_tcp(endpoint_, 500ms);
    } catch (const IoError&) {
      std::this_thread::sleep_for(retry_);
      continue;
    }
    connected_ = true;
    LineReader reader;
    std::string line;
    while (!stop.stop_requested()) {
      const auto st = reader.read_line(s, line, kPollSlice);
      if (st == LineReader::Status::Closed) break;
      if (st != LineReader::Status::Line) continue;
      try {
        handler_(line);
      } catch (const std::exception& e) {
        spdlog::warn("subscriber handler failed: {}", e.what());
      }
    }
    connected_ = false;
  }
}

ReplyServer::ReplyServer(const Endpoint& bind, Handler handler)
    : listener_(listen_tcp(bind)), port_(local_port(listener_)), handler_(std::move(handler)) {
  thread_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

ReplyServer::~ReplyServer() {
  thread_.request_stop();
  if (thread_.joinable()) thread_.join();
}

void ReplyServer::run(std::stop_token stop) {
  struct Client {
    Socket socket;
    LineReader reader;
  };
  std::vector<Client> clients;
  std::vector<pollfd> fds;
  while (!stop.stop_requested()) {
    fds.clear();
    fds.push_back({listener_.fd(), POLLIN, 0});
    for (const auto& c : clients) fds.push_back({c.socket.fd(), POLLIN, 0});
    if (::poll(fds.data(), fds.size(), poll_ms(kPollSlice)) <= 0) continue;

    std::vector<bool> drop(clients.size(), false);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      if (!(fds[k + 1].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      std::vector<std::string> lines;
      if (!clients[k].reader.feed(clients[k].socket, lines)) drop[k] = true;
      for (const auto& line : lines) {
        std::string reply;
        try {
          reply = handler_(line);
        } catch (const std::exception& e) {
          spdlog::error("request handler threw: {}", e.what());
          reply = R"({"ok":false,"code":"internal","error":"internal error"})";
        }
        if (!send_all(clients[k].socket, reply + '\n')) {
          drop[k] = true;
          break;
        }
      }
    }
    for (std::size_t k = clients.size(); k-- > 0;) {
      if (drop[k]) clients.erase(clients.begin() + static_cast<std::ptrdiff_t>(k));
    }
    if (fds[0].revents & POLLIN) {
      Socket s = accept_one(listener_);
      if (s.valid()) clients.push_back({std::move(s), {}});
    }
  }
}

std::string RequestClient::request(const std::string& message, std::chrono::milliseconds timeout) {
  std::lock_guard lock(mutex_);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const bool fresh = !socket_.valid();
    if (fresh) {
      socket_ = connect_tcp(endpoint_, std::min(timeout, std::chrono::milliseconds(2000)));
      reader_ = LineReader();
    }
    if (!send_all(socket_, message + '\n')) {
      socket_.close();
      if (fresh) throw IoError("send to " + endpoint_.to_string() + " failed");
      continue;
    }
    std::string reply;
    const auto st = reader_.read_line(socket_, reply, timeout);
    if (st == LineReader::Status::Line) return reply;
    socket_.close();
    if (st == LineReader::Status::Timeout) throw IoError("no reply from " + endpoint_.to_string());
    if (fresh) throw IoError("connection to " + endpoint_.to_string() + " closed");
  }
  throw IoError("request to " + endpoint_.to_string() + " failed");
}

}  // namespace radpipe::net
