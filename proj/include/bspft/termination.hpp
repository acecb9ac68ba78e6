#pragma once

#include <csignal>

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "bspft/error.hpp"

namespace bspft {

enum class NoticeSource { OsSignal, Injected };

struct TerminationNotice {
  NoticeSource source = NoticeSource::Injected;
  std::optional<std::uint32_t> deadline_hint_ms;

  friend bool operator==(const TerminationNotice&, const TerminationNotice&) = default;
};

// "TERM", "SIGTERM", "INT", ... -> signal number.
inline int parse_signal_name(std::string_view name) {
  if (name.starts_with("SIG")) name.remove_prefix(3);
  if (name == "TERM") return SIGTERM;
  if (name == "INT") return SIGINT;
  if (name == "HUP") return SIGHUP;
  if (name == "USR1") return SIGUSR1;
  if (name == "USR2") return SIGUSR2;
  if (name == "QUIT") return SIGQUIT;
  if (name == "XCPU") return SIGXCPU;
  throw Error(ErrorCode::ConfigError, "unsupported termination signal '" + std::string(name) + "'");
}

namespace detail {

inline std::atomic<bool> g_signal_bound{false};
inline std::atomic<int> g_signal_pending{0};
static_assert(std::atomic<int>::is_always_lock_free);

extern "C" inline void termination_signal_handler(int) { g_signal_pending.store(1); }

}  // namespace detail

// Latches termination notices from a bound OS signal or from injection.
// Once latched, a notice is reported on every poll until acknowledged.
// A hold gate (typically "any protected section open") suppresses delivery
// without dropping the notice.
class TerminationWatcher {
 public:
  TerminationWatcher() = default;
  ~TerminationWatcher() { unbind(); }

  TerminationWatcher(const TerminationWatcher&) = delete;
  TerminationWatcher& operator=(const TerminationWatcher&) = delete;

  // At most one OS-signal binding per process.
  void bind_os_signal(int signo = SIGTERM) {
    bool expected = false;
    if (!detail::g_signal_bound.compare_exchange_strong(expected, true))
      throw Error(ErrorCode::AlreadyBound, "a termination signal is already bound in this process");
    detail::g_signal_pending.store(0);
    struct sigaction sa {};
    sa.sa_handler = detail::termination_signal_handler;
    sigemptyset(&sa.sa_mask);
    if (::sigaction(signo, &sa, &previous_) != 0) {
      detail::g_signal_bound.store(false);
      throw Error(ErrorCode::IoFailure, "sigaction failed for signal " + std::to_string(signo));
    }
    bound_signal_ = signo;
  }

  void unbind() {
    if (!bound_signal_) return;
    ::sigaction(*bound_signal_, &previous_, nullptr);
    bound_signal_.reset();
    detail::g_signal_pending.store(0);
    detail::g_signal_bound.store(false);
  }

  bool bound() const noexcept { return bound_signal_.has_value(); }

  void inject(std::optional<std::uint32_t> deadline_hint_ms = std::nullopt) {
    std::lock_guard lock(mu_);
    if (!latched_) latched_ = TerminationNotice{NoticeSource::Injected, deadline_hint_ms};
  }

  void set_hold_gate(std::function<bool()> gate) {
    std::lock_guard lock(mu_);
    hold_ = std::move(gate);
  }

  std::optional<TerminationNotice> poll() {
    std::lock_guard lock(mu_);
    if (bound_signal_ && detail::g_signal_pending.load() && !latched_)
      latched_ = TerminationNotice{NoticeSource::OsSignal, std::nullopt};
    if (!latched_ || (hold_ && hold_())) return std::nullopt;
    return latched_;
  }

  void acknowledge() {
    std::lock_guard lock(mu_);
    latched_.reset();
    if (bound_signal_) detail::g_signal_pending.store(0);
  }

 private:
  std::mutex mu_;
  std::optional<TerminationNotice> latched_;
  std::function<bool()> hold_;
  std::optional<int> bound_signal_;
  struct sigaction previous_ {};
};

}  // namespace bspft
