#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bspft/bytes.hpp"
#include "bspft/error.hpp"

namespace bspft {

// Global state is shared by the whole application; local state belongs to
// exactly one worker.
class SegmentScope {
 public:
  static constexpr SegmentScope global() noexcept { return SegmentScope{}; }
  static constexpr SegmentScope local(std::uint32_t worker) noexcept { return SegmentScope{worker}; }

  constexpr bool is_global() const noexcept { return !worker_.has_value(); }
  constexpr std::optional<std::uint32_t> worker() const noexcept { return worker_; }

  std::string to_string() const {
    return worker_ ? "local:" + std::to_string(*worker_) : std::string("global");
  }

  friend constexpr bool operator==(const SegmentScope&, const SegmentScope&) = default;

 private:
  constexpr SegmentScope() = default;
  constexpr explicit SegmentScope(std::uint32_t worker) : worker_(worker) {}

  std::optional<std::uint32_t> worker_;
};

class ScopeFilter {
 public:
  static constexpr ScopeFilter all() noexcept { return ScopeFilter{Kind::All, 0}; }
  static constexpr ScopeFilter global_only() noexcept { return ScopeFilter{Kind::GlobalOnly, 0}; }
  static constexpr ScopeFilter local(std::uint32_t worker) noexcept { return ScopeFilter{Kind::Local, worker}; }

  constexpr bool matches(const SegmentScope& scope) const noexcept {
    switch (kind_) {
      case Kind::All: return true;
      case Kind::GlobalOnly: return scope.is_global();
      case Kind::Local: return scope.worker() == worker_;
    }
    return false;
  }

  // Global segments may be written by any worker, so a global-only snapshot
  // is blocked by any open protected section; a local filter only by its own.
  constexpr bool blocked_by(std::uint32_t protected_worker) const noexcept {
    return kind_ != Kind::Local || protected_worker == worker_;
  }

 private:
  enum class Kind { All, GlobalOnly, Local };
  constexpr ScopeFilter(Kind k, std::uint32_t w) : kind_(k), worker_(w) {}

  Kind kind_;
  std::uint32_t worker_;
};

struct SnapshotEntry {
  std::string id;
  SegmentScope scope = SegmentScope::global();
  std::uint64_t version = 0;
  Bytes payload;

  friend bool operator==(const SnapshotEntry&, const SnapshotEntry&) = default;
};

using Snapshot = std::vector<SnapshotEntry>;

class SegmentHandle {
 public:
  const std::string& id() const noexcept { return id_; }

 private:
  friend class StateRegistry;
  SegmentHandle(std::string id, std::uint64_t generation) : id_(std::move(id)), generation_(generation) {}

  std::string id_;
  std::uint64_t generation_;
};

enum class ProtectionMode {
  Reject,  // snapshot throws ProtectedSectionOpen
  Defer,   // snapshot blocks until the covering sections close
};

inline constexpr std::size_t kMaxSegmentIdBytes = 255;
inline constexpr std::size_t kMaxSegmentBytes = 0x7FFFFFFF;

// Ids starting with this prefix are reserved for the runtime (e.g. "__meta").
inline constexpr std::string_view kReservedPrefix = "__";

inline void validate_segment_id(std::string_view id) {
  if (id.empty()) throw Error(ErrorCode::InvalidId, "segment id is empty");
  if (id.size() > kMaxSegmentIdBytes)
    throw Error(ErrorCode::IdTooLong, "segment id is " + std::to_string(id.size()) + " bytes (max 255)");
  if (id.find('\0') != std::string_view::npos) throw Error(ErrorCode::InvalidId, "segment id contains NUL");
}

inline void validate_payload_size(std::size_t size) {
  if (size > kMaxSegmentBytes)
    throw Error(ErrorCode::SegmentTooLarge, std::to_string(size) + " bytes exceeds 2^31-1");
}

// Thread-safe registry of the application state that makes up a checkpoint.
// All operations serialize on one mutex, so a snapshot reflects a single
// point in the sequence of registrations and updates.
class StateRegistry {
 public:
  explicit StateRegistry(ProtectionMode mode = ProtectionMode::Reject) : mode_(mode) {}

  StateRegistry(const StateRegistry&) = delete;
  StateRegistry& operator=(const StateRegistry&) = delete;

  SegmentHandle register_segment(std::string id, SegmentScope scope, Bytes initial_payload) {
    if (id.starts_with(kReservedPrefix))
      throw Error(ErrorCode::ReservedId, "ids starting with \"__\" are reserved: " + id);
    return insert(std::move(id), scope, std::move(initial_payload));
  }

  // Runtime-owned segments such as "__meta"; always global.
  SegmentHandle register_reserved_segment(std::string id, Bytes initial_payload) {
    if (!id.starts_with(kReservedPrefix))
      throw Error(ErrorCode::InvalidId, "reserved ids must start with \"__\": " + id);
    return insert(std::move(id), SegmentScope::global(), std::move(initial_payload));
  }

  std::uint64_t update_segment(const SegmentHandle& handle, Bytes payload) {
    validate_payload_size(payload.size());
    std::lock_guard lock(mu_);
    Segment& seg = lookup(handle);
    seg.payload = std::move(payload);
    return ++seg.version;
  }

  Bytes read_segment(const SegmentHandle& handle) const {
    std::lock_guard lock(mu_);
    return lookup(handle).payload;
  }

  std::uint64_t version(const SegmentHandle& handle) const {
    std::lock_guard lock(mu_);
    return lookup(handle).version;
  }

  // Entries ascend by id bytes; payloads are deep copies.
  Snapshot snapshot(ScopeFilter filter = ScopeFilter::all()) const {
    std::unique_lock lock(mu_);
    if (blocked(filter)) {
      if (mode_ == ProtectionMode::Reject)
        throw Error(ErrorCode::ProtectedSectionOpen, "snapshot requested inside a protected section");
      cv_.wait(lock, [&] { return !blocked(filter); });
    }
    Snapshot out;
    for (const auto& [id, seg] : segments_) {
      if (filter.matches(seg.scope)) out.push_back(SnapshotEntry{id, seg.scope, seg.version, seg.payload});
    }
    return out;
  }

  void enter_protected(std::uint32_t worker = 0) {
    std::lock_guard lock(mu_);
    ++depth_[worker];
  }

  void exit_protected(std::uint32_t worker = 0) {
    {
      std::lock_guard lock(mu_);
      auto it = depth_.find(worker);
      if (it == depth_.end())
        throw Error(ErrorCode::UnbalancedExit, "exit_protected without matching enter (worker " +
                                                   std::to_string(worker) + ")");
      if (--it->second == 0) depth_.erase(it);
    }
    cv_.notify_all();
  }

  std::uint32_t protected_depth(std::uint32_t worker = 0) const {
    std::lock_guard lock(mu_);
    auto it = depth_.find(worker);
    return it == depth_.end() ? 0 : it->second;
  }

  bool any_protected() const {
    std::lock_guard lock(mu_);
    return !depth_.empty();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return segments_.size();
  }

  // Drops every segment; outstanding handles become stale.
  void reset() {
    std::lock_guard lock(mu_);
    segments_.clear();
    ++generation_;
  }

  ProtectionMode mode() const noexcept { return mode_; }

 private:
  struct Segment {
    SegmentScope scope = SegmentScope::global();
    std::uint64_t version = 0;
    Bytes payload;
  };

  SegmentHandle insert(std::string id, SegmentScope scope, Bytes payload) {
    validate_segment_id(id);
    validate_payload_size(payload.size());
    std::lock_guard lock(mu_);
    if (segments_.contains(id)) throw Error(ErrorCode::DuplicateId, "segment already registered: " + id);
    segments_.emplace(id, Segment{scope, 0, std::move(payload)});
    return SegmentHandle(std::move(id), generation_);
  }

  Segment& lookup(const SegmentHandle& h) {
    return const_cast<Segment&>(std::as_const(*this).lookup(h));
  }

  const Segment& lookup(const SegmentHandle& h) const {
    if (h.generation_ != generation_) throw Error(ErrorCode::StaleHandle, "registry was reset: " + h.id_);
    auto it = segments_.find(h.id_);
    if (it == segments_.end()) throw Error(ErrorCode::StaleHandle, "unknown segment: " + h.id_);
    return it->second;
  }

  bool blocked(const ScopeFilter& filter) const {
    for (const auto& [worker, depth] : depth_) {
      if (depth > 0 && filter.blocked_by(worker)) return true;
    }
    return false;
  }

  const ProtectionMode mode_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, Segment> segments_;  // std::string orders by unsigned bytes
  std::map<std::uint32_t, std::uint32_t> depth_;
  std::uint64_t generation_ = 0;
};

// RAII protected section.
class ProtectedSection {
 public:
  explicit ProtectedSection(StateRegistry& registry, std::uint32_t worker = 0)
      : registry_(registry), worker_(worker) {
    registry_.enter_protected(worker_);
  }
  ~ProtectedSection() { registry_.exit_protected(worker_); }

  ProtectedSection(const ProtectedSection&) = delete;
  ProtectedSection& operator=(const ProtectedSection&) = delete;

 private:
  StateRegistry& registry_;
  std::uint32_t worker_;
};

}  // namespace bspft
