#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "bspft/clock.hpp"
#include "bspft/error.hpp"
#include "bspft/heartbeat.hpp"

namespace bspft {

// "host:port", IPv4 only. Port 0 asks the kernel for an ephemeral port.
inline sockaddr_in parse_endpoint(std::string_view endpoint) {
  auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos)
    throw Error(ErrorCode::ConfigError, "endpoint must be host:port, got '" + std::string(endpoint) + "'");
  std::string host(endpoint.substr(0, colon));
  std::string_view port_text = endpoint.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535)
    throw Error(ErrorCode::ConfigError, "bad port in endpoint '" + std::string(endpoint) + "'");

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty() || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
      throw Error(ErrorCode::ConfigError, "cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

inline std::string format_endpoint(const sockaddr_in& addr) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(ntohs(addr.sin_port));
}

// Binds a UDP socket and, on its own thread, timestamps and queues every
// well-formed heartbeat. Malformed datagrams are counted and dropped.
class HeartbeatReceiver {
 public:
  explicit HeartbeatReceiver(std::string_view listen_endpoint) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw Error(ErrorCode::IoFailure, std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr = parse_endpoint(listen_endpoint);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      int err = errno;
      ::close(fd_);
      throw Error(ErrorCode::IoFailure, "bind " + std::string(listen_endpoint) + ": " + std::strerror(err));
    }
    socklen_t len = sizeof bound_;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound_), &len);
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
  }

  ~HeartbeatReceiver() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
    ::close(fd_);
  }

  HeartbeatReceiver(const HeartbeatReceiver&) = delete;
  HeartbeatReceiver& operator=(const HeartbeatReceiver&) = delete;

  // Where senders should aim; a wildcard bind is reported as loopback.
  std::string endpoint() const {
    sockaddr_in a = bound_;
    if (a.sin_addr.s_addr == htonl(INADDR_ANY)) a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    return format_endpoint(a);
  }

  std::vector<Arrival> drain() {
    std::lock_guard lock(mu_);
    return std::exchange(queue_, {});
  }

  std::uint64_t malformed_count() const noexcept { return malformed_.load(); }

 private:
  void loop(std::stop_token st) {
    std::uint8_t buf[64];
    while (!st.stop_requested()) {
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, 10);
      if (rc <= 0) continue;
      ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      std::int64_t now = monotonic_now_ns();
      if (n < 0) continue;
      try {
        HeartbeatMessage m = decode_heartbeat(ByteView(buf, static_cast<std::size_t>(n)));
        std::lock_guard lock(mu_);
        queue_.push_back(Arrival{m, now});
      } catch (const Error&) {
        ++malformed_;
      }
    }
  }

  int fd_ = -1;
  sockaddr_in bound_{};
  std::mutex mu_;
  std::vector<Arrival> queue_;
  std::atomic<std::uint64_t> malformed_{0};
  std::jthread thread_;
};

// Sends one heartbeat per period on its own thread until stopped or destroyed.
class HeartbeatSender {
 public:
  HeartbeatSender(std::string_view target_endpoint, std::uint16_t node_id, std::uint32_t incarnation,
                  std::chrono::milliseconds period)
      : target_(parse_endpoint(target_endpoint)), node_id_(node_id), incarnation_(incarnation), period_(period) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw Error(ErrorCode::IoFailure, std::string("socket: ") + std::strerror(errno));
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
  }

  ~HeartbeatSender() {
    stop();
    ::close(fd_);
  }

  HeartbeatSender(const HeartbeatSender&) = delete;
  HeartbeatSender& operator=(const HeartbeatSender&) = delete;

  void stop() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
  }

  std::uint64_t sent() const noexcept { return sequence_.load(); }

 private:
  void loop(std::stop_token st) {
    auto next = std::chrono::steady_clock::now();
    std::mutex m;
    std::condition_variable_any cv;
    while (!st.stop_requested()) {
      HeartbeatMessage msg{node_id_, incarnation_, sequence_.load(), wall_now_us()};
      auto dgram = encode_heartbeat(msg);
      ::sendto(fd_, dgram.data(), dgram.size(), 0, reinterpret_cast<const sockaddr*>(&target_), sizeof target_);
      ++sequence_;
      next += period_;
      std::unique_lock lock(m);
      cv.wait_until(lock, st, next, [] { return false; });
    }
  }

  sockaddr_in target_;
  std::uint16_t node_id_;
  std::uint32_t incarnation_;
  std::chrono::milliseconds period_;
  int fd_ = -1;
  std::atomic<std::uint64_t> sequence_{0};
  std::jthread thread_;
};

}  // namespace bspft
