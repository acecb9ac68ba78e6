#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "bspft/error.hpp"

namespace bspft {

// Failure and cost parameters for the optimal checkpoint period, all in seconds.
struct CostModel {
  double mu_s = 0.0;               // mean time between failures
  double downtime_s = 0.0;         // D
  double recovery_s = 0.0;         // R
  double checkpoint_cost_s = 0.0;  // C
};

// Young/Daly period sqrt(2 (mu - (D + R)) C). The boundary mu == D + R
// yields 0; below it the model is degenerate.
inline double young_daly_interval(const CostModel& m) {
  if (m.checkpoint_cost_s < 0.0 || m.downtime_s < 0.0 || m.recovery_s < 0.0)
    throw Error(ErrorCode::ConfigError, "cost model times must be non-negative");
  const double available = m.mu_s - (m.downtime_s + m.recovery_s);
  if (available < 0.0)
    throw Error(ErrorCode::MtbfTooSmall, "mu (" + std::to_string(m.mu_s) + " s) is below D + R (" +
                                             std::to_string(m.downtime_s + m.recovery_s) + " s)");
  return std::sqrt(2.0 * available * m.checkpoint_cost_s);
}

struct EveryKSupersteps {
  std::uint64_t k = 1;
};
struct TimeInterval {
  double seconds = 0.0;
};
struct YoungDaly {
  CostModel model;
};
struct Never {};

using CheckpointStrategy = std::variant<EveryKSupersteps, TimeInterval, YoungDaly, Never>;

// YoungDaly becomes a TimeInterval at activation; other strategies pass through.
inline CheckpointStrategy resolve(const CheckpointStrategy& s) {
  if (const auto* yd = std::get_if<YoungDaly>(&s)) return TimeInterval{young_daly_interval(yd->model)};
  return s;
}

inline bool should_checkpoint(const CheckpointStrategy& strategy, std::uint64_t superstep, std::int64_t now_ns,
                              std::int64_t last_checkpoint_ns) {
  struct Visitor {
    std::uint64_t step;
    std::int64_t elapsed_ns;
    bool operator()(const EveryKSupersteps& s) const { return step > 0 && s.k > 0 && step % s.k == 0; }
    bool operator()(const TimeInterval& s) const { return static_cast<double>(elapsed_ns) >= s.seconds * 1e9; }
    bool operator()(const YoungDaly& s) const { return (*this)(TimeInterval{young_daly_interval(s.model)}); }
    bool operator()(const Never&) const { return false; }
  };
  return std::visit(Visitor{superstep, now_ns - last_checkpoint_ns}, strategy);
}

inline bool is_never(const CheckpointStrategy& s) { return std::holds_alternative<Never>(s); }

// "every_k:<k>" | "interval:<seconds>" | "young_daly" | "never"
inline CheckpointStrategy parse_strategy(std::string_view text, const CostModel& model = {}) {
  auto bad = [&] { return Error(ErrorCode::ConfigError, "unknown checkpoint strategy '" + std::string(text) + "'"); };
  if (text == "never") return Never{};
  if (text == "young_daly") {
    young_daly_interval(model);  // reject degenerate models up front
    return YoungDaly{model};
  }
  if (text.starts_with("every_k:")) {
    auto arg = text.substr(8);
    std::uint64_t k = 0;
    auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
    if (ec != std::errc{} || p != arg.data() + arg.size() || k == 0) throw bad();
    return EveryKSupersteps{k};
  }
  if (text.starts_with("interval:")) {
    auto arg = text.substr(9);
    double s = 0;
    auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), s);
    if (ec != std::errc{} || p != arg.data() + arg.size() || !(s > 0.0)) throw bad();
    return TimeInterval{s};
  }
  throw bad();
}

inline std::string to_string(const CheckpointStrategy& s) {
  struct Visitor {
    std::string operator()(const EveryKSupersteps& v) const { return "every_k:" + std::to_string(v.k); }
    std::string operator()(const TimeInterval& v) const {
      char buf[64];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v.seconds);
      return "interval:" + std::string(buf, p);
    }
    std::string operator()(const YoungDaly&) const { return "young_daly"; }
    std::string operator()(const Never&) const { return "never"; }
  };
  return std::visit(Visitor{}, s);
}

}  // namespace bspft
