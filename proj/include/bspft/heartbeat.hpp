#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bspft/bytes.hpp"
#include "bspft/error.hpp"

namespace bspft {

// 28-byte heartbeat datagram, little-endian:
//   magic u32 (0x44454C41) | version u8 (1) | flags u8 (0) | node_id u16 |
//   incarnation u32 | sequence u64 | timestamp_us u64
struct HeartbeatMessage {
  std::uint16_t node_id = 0;
  std::uint32_t incarnation = 0;
  std::uint64_t sequence = 0;
  std::uint64_t timestamp_us = 0;  // wall clock, informational only

  friend bool operator==(const HeartbeatMessage&, const HeartbeatMessage&) = default;
};

inline constexpr std::size_t kHeartbeatBytes = 28;
inline constexpr std::uint32_t kHeartbeatMagic = 0x44454C41;
inline constexpr std::uint8_t kHeartbeatVersion = 1;

using HeartbeatDatagram = std::array<std::uint8_t, kHeartbeatBytes>;

inline HeartbeatDatagram encode_heartbeat(const HeartbeatMessage& m) {
  Bytes buf;
  buf.reserve(kHeartbeatBytes);
  ByteWriter w(buf);
  w.u32(kHeartbeatMagic);
  w.u8(kHeartbeatVersion);
  w.u8(0);
  w.u16(m.node_id);
  w.u32(m.incarnation);
  w.u64(m.sequence);
  w.u64(m.timestamp_us);
  HeartbeatDatagram out;
  std::copy(buf.begin(), buf.end(), out.begin());
  return out;
}

inline HeartbeatMessage decode_heartbeat(ByteView datagram) {
  if (datagram.size() != kHeartbeatBytes)
    throw Error(ErrorCode::BadLength, "heartbeat datagram is " + std::to_string(datagram.size()) + " bytes, expected 28");
  ByteReader r(datagram);
  if (*r.u32() != kHeartbeatMagic) throw Error(ErrorCode::BadMagic, "heartbeat magic mismatch");
  if (auto v = *r.u8(); v != kHeartbeatVersion)
    throw Error(ErrorCode::BadVersion, "heartbeat version " + std::to_string(v));
  if (auto f = *r.u8(); f != 0) throw Error(ErrorCode::BadFlags, "heartbeat flags " + std::to_string(f));
  HeartbeatMessage m;
  m.node_id = *r.u16();
  m.incarnation = *r.u32();
  m.sequence = *r.u64();
  m.timestamp_us = *r.u64();
  return m;
}

struct DetectorConfig {
  std::uint32_t period_ms = 50;
  std::uint32_t misses_k = 3;
  std::string listen_endpoint = "127.0.0.1:0";

  std::int64_t timeout_ns() const noexcept {
    return static_cast<std::int64_t>(period_ms) * misses_k * 1'000'000;
  }

  void validate() const {
    if (period_ms == 0) throw Error(ErrorCode::ConfigError, "period_ms must be positive");
    if (misses_k == 0) throw Error(ErrorCode::ConfigError, "misses_k must be positive");
  }
};

enum class FailureKind { HeartbeatTimeout, TerminationNotice };

struct FailureEvent {
  std::uint16_t node_id = 0;
  FailureKind kind = FailureKind::HeartbeatTimeout;
  std::int64_t detected_at_ns = 0;  // monotonic
  std::uint32_t incarnation = 0;

  friend bool operator==(const FailureEvent&, const FailureEvent&) = default;
};

// A decoded datagram plus the monotonic time the receiver saw it.
struct Arrival {
  HeartbeatMessage message;
  std::int64_t received_ns = 0;
};

// Pure failure-detection state machine. The network side only timestamps and
// queues arrivals; every liveness decision happens in observe().
//
// A node is declared failed once its last accepted message is older than
// misses_k * period_ms. Messages are accepted only if (incarnation, sequence)
// is newer than the last accepted pair; a higher incarnation clears a failed
// status. Nodes that have never been heard from are in incarnation 0 and
// time out relative to the monitor's start time.
class HeartbeatMonitor {
 public:
  struct NodeStatus {
    std::uint32_t incarnation = 0;
    std::optional<std::uint64_t> last_sequence;
    std::int64_t last_seen_ns = 0;
    bool failed = false;
  };

  HeartbeatMonitor(DetectorConfig config, std::span<const std::uint16_t> nodes, std::int64_t start_ns)
      : config_(std::move(config)) {
    config_.validate();
    for (auto n : nodes) nodes_[n] = NodeStatus{0, std::nullopt, start_ns, false};
  }

  std::vector<FailureEvent> observe(std::int64_t now_ns, std::span<const Arrival> arrivals) {
    for (const auto& a : arrivals) accept(a);
    std::vector<FailureEvent> events;
    for (auto& [id, st] : nodes_) {
      if (!st.failed && now_ns - st.last_seen_ns > config_.timeout_ns()) {
        st.failed = true;
        events.push_back(FailureEvent{id, FailureKind::HeartbeatTimeout, now_ns, st.incarnation});
      }
    }
    return events;
  }

  // The coordinator respawned `node` as `incarnation`: forget the failure,
  // restart the silence timer, and ignore anything older from now on.
  void expect_incarnation(std::uint16_t node, std::uint32_t incarnation, std::int64_t now_ns) {
    auto& st = nodes_.at(node);
    st.incarnation = incarnation;
    st.last_sequence.reset();
    st.last_seen_ns = now_ns;
    st.failed = false;
  }

  const NodeStatus& status(std::uint16_t node) const { return nodes_.at(node); }
  std::uint64_t unknown_sender_count() const noexcept { return unknown_senders_; }
  std::uint64_t stale_count() const noexcept { return stale_; }
  const DetectorConfig& config() const noexcept { return config_; }

 private:
  void accept(const Arrival& a) {
    auto it = nodes_.find(a.message.node_id);
    if (it == nodes_.end()) {
      ++unknown_senders_;
      return;
    }
    NodeStatus& st = it->second;
    const auto& m = a.message;
    bool newer = m.incarnation > st.incarnation ||
                 (m.incarnation == st.incarnation && (!st.last_sequence || m.sequence > *st.last_sequence));
    if (!newer) {
      ++stale_;
      return;
    }
    if (m.incarnation > st.incarnation) st.failed = false;
    st.incarnation = m.incarnation;
    st.last_sequence = m.sequence;
    st.last_seen_ns = std::max(st.last_seen_ns, a.received_ns);
  }

  DetectorConfig config_;
  std::map<std::uint16_t, NodeStatus> nodes_;
  std::uint64_t unknown_senders_ = 0;
  std::uint64_t stale_ = 0;
};

}  // namespace bspft
