#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include "bspft/error.hpp"

namespace bspft {

enum class FaultKind {
  FailStop,           // the worker halts silently; peers must detect it
  TerminationNotice,  // advance warning of shutdown (e.g. scheduler preemption)
};

struct AtSuperstep {
  std::uint64_t superstep = 0;
  friend bool operator==(const AtSuperstep&, const AtSuperstep&) = default;
};

struct AtElapsedMs {
  std::uint64_t ms = 0;
  friend bool operator==(const AtElapsedMs&, const AtElapsedMs&) = default;
};

using FaultTrigger = std::variant<AtSuperstep, AtElapsedMs>;

struct Injection {
  std::uint32_t target_worker = 0;
  FaultTrigger trigger = AtSuperstep{1};
  FaultKind kind = FaultKind::FailStop;
  std::optional<std::uint32_t> deadline_hint_ms;  // TerminationNotice only

  friend bool operator==(const Injection&, const Injection&) = default;
};

// Declarative schedule of injected failures. Each injection fires once; a
// superstep trigger fires when the coordinator starts that superstep, an
// elapsed trigger once the run has been going for that long.
struct FaultPlan {
  std::vector<Injection> injections;

  bool empty() const noexcept { return injections.empty(); }

  void validate(std::uint32_t workers) const {
    std::set<std::tuple<std::uint32_t, std::size_t, std::uint64_t>> fail_stops;
    for (const auto& inj : injections) {
      if (inj.target_worker >= workers)
        throw Error(ErrorCode::ConfigError, "fault targets worker " + std::to_string(inj.target_worker) + " but only " +
                                                std::to_string(workers) + " workers exist");
      if (const auto* s = std::get_if<AtSuperstep>(&inj.trigger); s && s->superstep == 0)
        throw Error(ErrorCode::ConfigError, "superstep triggers are 1-based");
      if (inj.kind == FaultKind::FailStop) {
        std::uint64_t at = std::visit([](const auto& t) -> std::uint64_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(t)>, AtSuperstep>) return t.superstep;
          else return t.ms;
        }, inj.trigger);
        if (!fail_stops.emplace(inj.target_worker, inj.trigger.index(), at).second)
          throw Error(ErrorCode::ConfigError, "duplicate fail-stop for worker " + std::to_string(inj.target_worker) +
                                                  " at the same trigger");
      }
    }
  }
};

}  // namespace bspft
