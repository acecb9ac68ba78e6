#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bspft/apps.hpp"
#include "bspft/bytes.hpp"
#include "bspft/clock.hpp"
#include "bspft/error.hpp"
#include "bspft/heartbeat.hpp"
#include "bspft/udp.hpp"

namespace bspft {

// ---------------------------------------------------------------------------
// Coordinator <-> worker protocol

struct WorkerCommand {
  enum class Type : std::uint8_t { Step = 1, SetLocal = 2, Shutdown = 3 };

  Type type = Type::Step;
  std::uint64_t round = 0;  // dispatch generation; replies from older rounds are discarded
  std::uint64_t step = 0;
  bool want_local = false;
  Bytes global;
  Bytes local;
};

struct WorkerReply {
  std::uint64_t round = 0;
  std::uint64_t step = 0;
  Bytes contribution;
  std::optional<Bytes> local;
};

inline Bytes encode_command(const WorkerCommand& c) {
  Bytes b;
  ByteWriter w(b);
  w.u8(static_cast<std::uint8_t>(c.type));
  w.u64(c.round);
  w.u64(c.step);
  w.u8(c.want_local ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.global.size()));
  w.raw(c.global);
  w.u32(static_cast<std::uint32_t>(c.local.size()));
  w.raw(c.local);
  return b;
}

inline WorkerCommand decode_command(ByteView in) {
  ByteReader r(in);
  WorkerCommand c;
  auto bad = [] { return Error(ErrorCode::ParseError, "malformed worker command"); };
  auto type = r.u8();
  auto round = r.u64();
  auto step = r.u64();
  auto want = r.u8();
  if (!type || !round || !step || !want) throw bad();
  c.type = static_cast<WorkerCommand::Type>(*type);
  c.round = *round;
  c.step = *step;
  c.want_local = *want != 0;
  auto glen = r.u32();
  if (!glen) throw bad();
  auto g = r.raw(*glen);
  if (!g) throw bad();
  c.global.assign(g->begin(), g->end());
  auto llen = r.u32();
  if (!llen) throw bad();
  auto l = r.raw(*llen);
  if (!l) throw bad();
  c.local.assign(l->begin(), l->end());
  return c;
}

inline Bytes encode_reply(const WorkerReply& rep) {
  Bytes b;
  ByteWriter w(b);
  w.u64(rep.round);
  w.u64(rep.step);
  w.u32(static_cast<std::uint32_t>(rep.contribution.size()));
  w.raw(rep.contribution);
  w.u8(rep.local ? 1 : 0);
  w.u32(rep.local ? static_cast<std::uint32_t>(rep.local->size()) : 0);
  if (rep.local) w.raw(*rep.local);
  return b;
}

inline WorkerReply decode_reply(ByteView in) {
  ByteReader r(in);
  auto bad = [] { return Error(ErrorCode::ParseError, "malformed worker reply"); };
  WorkerReply rep;
  auto round = r.u64();
  auto step = r.u64();
  auto clen = r.u32();
  if (!round || !step || !clen) throw bad();
  rep.round = *round;
  rep.step = *step;
  auto c = r.raw(*clen);
  if (!c) throw bad();
  rep.contribution.assign(c->begin(), c->end());
  auto has = r.u8();
  auto llen = r.u32();
  if (!has || !llen) throw bad();
  auto l = r.raw(*llen);
  if (!l) throw bad();
  if (*has) rep.local = Bytes(l->begin(), l->end());
  return rep;
}

// The worker side of the protocol: owns one slot's local state.
class WorkerRuntime {
 public:
  WorkerRuntime(const BspApp& app, WorkerSlot slot, Bytes local) : app_(app), slot_(slot), local_(std::move(local)) {}

  std::optional<WorkerReply> handle(const WorkerCommand& cmd) {
    switch (cmd.type) {
      case WorkerCommand::Type::Step: {
        StepOutput out = app_.superstep(cmd.global, local_, cmd.step, slot_);
        local_ = std::move(out.local);
        WorkerReply rep{cmd.round, cmd.step, std::move(out.contribution), std::nullopt};
        if (cmd.want_local) rep.local = local_;
        return rep;
      }
      case WorkerCommand::Type::SetLocal:
        local_ = cmd.local;
        return std::nullopt;
      case WorkerCommand::Type::Shutdown:
        return std::nullopt;
    }
    return std::nullopt;
  }

 private:
  const BspApp& app_;
  WorkerSlot slot_;
  Bytes local_;
};

// ---------------------------------------------------------------------------
// Worker groups. The coordinator only talks to workers through this
// interface and learns about deaths only through the heartbeat channel.

class WorkerGroup {
 public:
  virtual ~WorkerGroup() = default;

  virtual void spawn(std::uint32_t worker, std::uint32_t incarnation, Bytes local) = 0;
  // Fail-stop: the worker halts at once and its local state is lost.
  virtual void kill(std::uint32_t worker) = 0;
  virtual void send(std::uint32_t worker, const WorkerCommand& cmd) = 0;
  // Replies that arrived within roughly `budget`.
  virtual std::vector<std::pair<std::uint32_t, WorkerReply>> poll(std::chrono::milliseconds budget) = 0;
  virtual std::vector<Arrival> drain_heartbeats() = 0;
  // Clock that heartbeat arrivals are stamped with.
  virtual std::int64_t detector_now_ns() = 0;
  virtual void shutdown() = 0;
};

// Workers as in-memory runtimes driven by the coordinator's thread, with a
// simulated heartbeat channel on a virtual clock: every poll advances the
// clock by one period and each live worker emits one heartbeat. A killed
// worker goes silent, so detection takes misses_k + 1 polls and no wall time.
class InProcessGroup final : public WorkerGroup {
 public:
  InProcessGroup(const BspApp& app, std::uint32_t workers, DetectorConfig detector, bool parallel = true)
      : app_(app), detector_(std::move(detector)), slots_(workers), parallel_(parallel) {}

  void spawn(std::uint32_t worker, std::uint32_t incarnation, Bytes local) override {
    auto& s = slots_.at(worker);
    s.runtime.emplace(app_, WorkerSlot{worker, static_cast<std::uint32_t>(slots_.size())}, std::move(local));
    s.incarnation = incarnation;
    s.sequence = 0;
    s.inbox.clear();
  }

  void kill(std::uint32_t worker) override {
    auto& s = slots_.at(worker);
    s.runtime.reset();
    s.inbox.clear();
  }

  void send(std::uint32_t worker, const WorkerCommand& cmd) override {
    auto& s = slots_.at(worker);
    if (s.runtime) s.inbox.push_back(cmd);
  }

  std::vector<std::pair<std::uint32_t, WorkerReply>> poll(std::chrono::milliseconds) override {
    std::vector<std::pair<std::uint32_t, WorkerReply>> replies;
    auto run_inbox = [this](std::uint32_t w) {
      std::vector<WorkerReply> out;
      auto& s = slots_[w];
      while (!s.inbox.empty()) {
        WorkerCommand cmd = std::move(s.inbox.front());
        s.inbox.pop_front();
        if (auto rep = s.runtime->handle(cmd)) out.push_back(std::move(*rep));
      }
      return out;
    };
    std::vector<std::uint32_t> busy;
    for (std::uint32_t w = 0; w < slots_.size(); ++w)
      if (slots_[w].runtime && !slots_[w].inbox.empty()) busy.push_back(w);
    if (parallel_ && busy.size() > 1) {
      std::vector<std::future<std::vector<WorkerReply>>> futures;
      for (auto w : busy) futures.push_back(std::async(std::launch::async, run_inbox, w));
      for (std::size_t i = 0; i < busy.size(); ++i)
        for (auto& r : futures[i].get()) replies.emplace_back(busy[i], std::move(r));
    } else {
      for (auto w : busy)
        for (auto& r : run_inbox(w)) replies.emplace_back(w, std::move(r));
    }

    virtual_now_ns_ += static_cast<std::int64_t>(detector_.period_ms) * 1'000'000;
    for (std::uint32_t w = 0; w < slots_.size(); ++w) {
      auto& s = slots_[w];
      if (!s.runtime) continue;
      HeartbeatMessage m{static_cast<std::uint16_t>(w), s.incarnation, s.sequence++, 0};
      heartbeats_.push_back(Arrival{m, virtual_now_ns_});
    }
    return replies;
  }

  std::vector<Arrival> drain_heartbeats() override { return std::exchange(heartbeats_, {}); }
  std::int64_t detector_now_ns() override { return virtual_now_ns_; }
  void shutdown() override {
    for (auto& s : slots_) s.runtime.reset();
  }

 private:
  struct Slot {
    std::optional<WorkerRuntime> runtime;
    std::uint32_t incarnation = 0;
    std::uint64_t sequence = 0;
    std::deque<WorkerCommand> inbox;
  };

  const BspApp& app_;
  DetectorConfig detector_;
  std::vector<Slot> slots_;
  bool parallel_;
  std::int64_t virtual_now_ns_ = 0;
  std::vector<Arrival> heartbeats_;
};

namespace detail {

inline bool send_all(int fd, ByteView data) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    done += static_cast<std::size_t>(n);
  }
  return true;
}

inline bool recv_all(int fd, std::uint8_t* out, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    ssize_t got = ::recv(fd, out + done, n - done, 0);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) return false;
    done += static_cast<std::size_t>(got);
  }
  return true;
}

inline bool send_frame(int fd, ByteView body) {
  Bytes header;
  ByteWriter(header).u32(static_cast<std::uint32_t>(body.size()));
  return send_all(fd, header) && send_all(fd, body);
}

inline std::optional<Bytes> recv_frame(int fd) {
  std::uint8_t hdr[4];
  if (!recv_all(fd, hdr, 4)) return std::nullopt;
  std::uint32_t len = *ByteReader(ByteView(hdr, 4)).u32();
  Bytes body(len);
  if (len > 0 && !recv_all(fd, body.data(), len)) return std::nullopt;
  return body;
}

}  // namespace detail

// Workers as forked OS processes. Commands and replies travel over a
// socketpair per worker; each child runs a HeartbeatSender towards the
// coordinator's UDP receiver. kill() is SIGKILL.
class ProcessGroup final : public WorkerGroup {
 public:
  ProcessGroup(const BspApp& app, std::uint32_t workers, DetectorConfig detector, bool heartbeats = true)
      : app_(app), detector_(std::move(detector)), slots_(workers) {
    if (heartbeats) receiver_ = std::make_unique<HeartbeatReceiver>(detector_.listen_endpoint);
  }

  ~ProcessGroup() override { shutdown(); }

  void spawn(std::uint32_t worker, std::uint32_t incarnation, Bytes local) override {
    kill(worker);
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw Error(ErrorCode::IoFailure, std::string("socketpair: ") + std::strerror(errno));
    const std::string target = receiver_ ? receiver_->endpoint() : std::string();
    pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw Error(ErrorCode::IoFailure, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::close(sv[0]);
      for (auto& s : slots_)
        if (s.fd >= 0) ::close(s.fd);
      child_main(sv[1], worker, incarnation, std::move(local), target);
    }
    ::close(sv[1]);
    slots_[worker].pid = pid;
    slots_[worker].fd = sv[0];
  }

  void kill(std::uint32_t worker) override {
    auto& s = slots_.at(worker);
    if (s.pid > 0) {
      ::kill(s.pid, SIGKILL);
      ::waitpid(s.pid, nullptr, 0);
      s.pid = -1;
    }
    if (s.fd >= 0) {
      ::close(s.fd);
      s.fd = -1;
    }
  }

  void send(std::uint32_t worker, const WorkerCommand& cmd) override {
    auto& s = slots_.at(worker);
    if (s.fd >= 0) detail::send_frame(s.fd, encode_command(cmd));
  }

  std::vector<std::pair<std::uint32_t, WorkerReply>> poll(std::chrono::milliseconds budget) override {
    std::vector<pollfd> fds;
    std::vector<std::uint32_t> owners;
    for (std::uint32_t w = 0; w < slots_.size(); ++w) {
      if (slots_[w].fd >= 0 && !slots_[w].eof) {
        fds.push_back(pollfd{slots_[w].fd, POLLIN, 0});
        owners.push_back(w);
      }
    }
    std::vector<std::pair<std::uint32_t, WorkerReply>> replies;
    if (fds.empty()) {
      std::this_thread::sleep_for(budget);
      return replies;
    }
    int rc = ::poll(fds.data(), fds.size(), static_cast<int>(budget.count()));
    if (rc <= 0) return replies;
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      auto frame = detail::recv_frame(fds[i].fd);
      // A dead peer is only a hint; failure is declared by the heartbeat monitor.
      if (!frame) {
        slots_[owners[i]].eof = true;
        continue;
      }
      replies.emplace_back(owners[i], decode_reply(*frame));
    }
    return replies;
  }

  std::vector<Arrival> drain_heartbeats() override { return receiver_ ? receiver_->drain() : std::vector<Arrival>{}; }
  std::int64_t detector_now_ns() override { return monotonic_now_ns(); }

  void shutdown() override {
    WorkerCommand bye;
    bye.type = WorkerCommand::Type::Shutdown;
    for (auto& s : slots_)
      if (s.fd >= 0) detail::send_frame(s.fd, encode_command(bye));
    for (std::uint32_t w = 0; w < slots_.size(); ++w) {
      auto& s = slots_[w];
      if (s.pid > 0) {
        // Give the child a moment to exit cleanly before forcing it.
        for (int i = 0; i < 50; ++i) {
          if (::waitpid(s.pid, nullptr, WNOHANG) == s.pid) {
            s.pid = -1;
            break;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
      }
      kill(w);
    }
  }

  pid_t pid_of(std::uint32_t worker) const { return slots_.at(worker).pid; }

 private:
  [[noreturn]] void child_main(int fd, std::uint32_t worker, std::uint32_t incarnation, Bytes local,
                               const std::string& target) {
    ::signal(SIGTERM, SIG_DFL);
    ::signal(SIGINT, SIG_DFL);
    int status = 0;
    try {
      std::optional<HeartbeatSender> sender;
      if (!target.empty())
        sender.emplace(target, static_cast<std::uint16_t>(worker), incarnation,
                       std::chrono::milliseconds(detector_.period_ms));
      WorkerRuntime runtime(app_, WorkerSlot{worker, static_cast<std::uint32_t>(slots_.size())}, std::move(local));
      for (;;) {
        auto frame = detail::recv_frame(fd);
        if (!frame) break;
        WorkerCommand cmd = decode_command(*frame);
        if (cmd.type == WorkerCommand::Type::Shutdown) break;
        if (auto rep = runtime.handle(cmd)) {
          if (!detail::send_frame(fd, encode_reply(*rep))) break;
        }
      }
      if (sender) sender->stop();
    } catch (...) {
      status = 2;
    }
    ::_exit(status);
  }

  struct Slot {
    pid_t pid = -1;
    int fd = -1;
    bool eof = false;
  };

  const BspApp& app_;
  DetectorConfig detector_;
  std::vector<Slot> slots_;
  std::unique_ptr<HeartbeatReceiver> receiver_;
};

}  // namespace bspft
