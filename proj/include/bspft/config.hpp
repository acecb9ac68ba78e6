#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bspft/apps.hpp"
#include "bspft/error.hpp"
#include "bspft/fault_plan.hpp"
#include "bspft/harness.hpp"
#include "bspft/policy.hpp"
#include "bspft/termination.hpp"

namespace bspft {

// Everything one configuration file describes.
//
// Format: a small TOML subset. `key = value` lines with quoted strings,
// integers, floats, or true/false; `#` comments; and any number of
// `[[fault]]` tables, each holding worker, at_superstep or at_elapsed_ms,
// kind ("fail_stop" or "termination_notice") and optional deadline_hint_ms.
struct Config {
  AppSpec app;
  RunConfig run;
  FaultPlan plan;
  std::string strategy_text = "every_k:1";
  CostModel cost;
  std::filesystem::path records = "records.json";
  std::optional<std::filesystem::path> final_state;
  std::uint32_t repetitions = 10;

  Config() {
    run.detector.period_ms = 500;
    run.detector.misses_k = 3;
    run.termination_signal = SIGTERM;
  }

  // Resolves the strategy against the cost model and checks cross-field rules.
  void finalize() {
    run.strategy = parse_strategy(strategy_text, cost);
    if (run.detector.misses_k < 2)
      throw Error(ErrorCode::ConfigError, "misses_k must be at least 2 so one lost datagram is never a failure");
    if (repetitions == 0) throw Error(ErrorCode::ConfigError, "repetitions must be at least 1");
    run.validate();
    plan.validate(run.workers);
    BspApp check(app);
    (void)check;
  }
};

namespace detail {

using ConfigValue = std::variant<std::string, std::int64_t, double, bool>;

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment, ignoring '#' inside a quoted string.
inline std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::optional<ConfigValue> parse_scalar(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') return std::nullopt;
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      char c = text[i];
      if (c == '\\') {
        if (i + 2 >= text.size()) return std::nullopt;
        char n = text[++i];
        if (n == 'n') out += '\n';
        else if (n == 't') out += '\t';
        else if (n == '"' || n == '\\') out += n;
        else return std::nullopt;
      } else if (c == '"') {
        return std::nullopt;
      } else {
        out += c;
      }
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  std::string digits;
  for (char c : text)
    if (c != '_') digits += c;
  std::int64_t i = 0;
  auto [pi, ei] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
  if (ei == std::errc{} && pi == digits.data() + digits.size()) return i;
  double d = 0;
  auto [pd, ed] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
  if (ed == std::errc{} && pd == digits.data() + digits.size()) return d;
  return std::nullopt;
}

inline std::string describe(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "integer";
    case 2: return "float";
    default: return "boolean";
  }
}

class KeyContext {
 public:
  KeyContext(std::string where, std::string key, ConfigValue value)
      : where_(std::move(where)), key_(std::move(key)), value_(std::move(value)) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::ConfigError, where_ + key_ + ": " + why);
  }

  const std::string& key() const { return key_; }

  std::string text() const {
    if (const auto* s = std::get_if<std::string>(&value_)) return *s;
    fail("expected a string, got " + describe(value_));
  }

  bool boolean() const {
    if (const auto* b = std::get_if<bool>(&value_)) return *b;
    fail("expected true or false, got " + describe(value_));
  }

  template <typename T>
  T integer(T min = std::numeric_limits<T>::min()) const {
    const auto* i = std::get_if<std::int64_t>(&value_);
    if (!i) fail("expected an integer, got " + describe(value_));
    if (*i < static_cast<std::int64_t>(min) ||
        (std::numeric_limits<T>::max() < std::numeric_limits<std::int64_t>::max() &&
         *i > static_cast<std::int64_t>(std::numeric_limits<T>::max())))
      fail("value " + std::to_string(*i) + " is out of range");
    return static_cast<T>(*i);
  }

  double number() const {
    if (const auto* d = std::get_if<double>(&value_)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&value_)) return static_cast<double>(*i);
    fail("expected a number, got " + describe(value_));
  }

 private:
  std::string where_;
  std::string key_;
  ConfigValue value_;
};

inline void apply_top_level(Config& cfg, const KeyContext& kv) {
  const std::string& k = kv.key();
  if (k == "app") cfg.app.kind = parse_app_kind(kv.text());
  else if (k == "dimension") cfg.app.dimension = kv.integer<std::uint32_t>(1);
  else if (k == "population") cfg.app.population = kv.integer<std::uint32_t>(1);
  else if (k == "seed") cfg.app.seed = kv.integer<std::uint64_t>(0);
  else if (k == "workers") cfg.run.workers = kv.integer<std::uint32_t>(1);
  else if (k == "supersteps") cfg.run.supersteps = kv.integer<std::uint64_t>(1);
  else if (k == "strategy") cfg.strategy_text = kv.text();
  else if (k == "mu") cfg.cost.mu_s = kv.number();
  else if (k == "downtime") cfg.cost.downtime_s = kv.number();
  else if (k == "recovery") cfg.cost.recovery_s = kv.number();
  else if (k == "ckpt_cost") cfg.cost.checkpoint_cost_s = kv.number();
  else if (k == "checkpoint_dir") cfg.run.checkpoint_dir = kv.text();
  else if (k == "local_checkpointing") cfg.run.local_checkpointing = kv.boolean();
  else if (k == "retention") cfg.run.retention = kv.integer<std::uint32_t>(0);
  else if (k == "mode") cfg.run.mode = parse_worker_mode(kv.text());
  else if (k == "period_ms") cfg.run.detector.period_ms = kv.integer<std::uint32_t>(1);
  else if (k == "misses_k") cfg.run.detector.misses_k = kv.integer<std::uint32_t>(1);
  else if (k == "listen") cfg.run.detector.listen_endpoint = kv.text();
  else if (k == "termination_signal") cfg.run.termination_signal = parse_signal_name(kv.text());
  else if (k == "allow_cold_restart") cfg.run.allow_cold_restart = kv.boolean();
  else if (k == "overwrite_checkpoints") cfg.run.overwrite_checkpoints = kv.boolean();
  else if (k == "records") cfg.records = kv.text();
  else if (k == "final_state") cfg.final_state = kv.text();
  else if (k == "repetitions") cfg.repetitions = kv.integer<std::uint32_t>(1);
  else if (k == "run_id") cfg.run.run_id = kv.text();
  else if (k == "created_at_us") cfg.run.pinned_created_at_us = kv.integer<std::uint64_t>(0);
  else kv.fail("unknown key");
}

inline FaultKind parse_fault_kind(std::string_view s) {
  if (s == "fail_stop") return FaultKind::FailStop;
  if (s == "termination_notice") return FaultKind::TerminationNotice;
  throw Error(ErrorCode::ConfigError, "unknown fault kind '" + std::string(s) +
                                          "' (expected fail_stop or termination_notice)");
}

struct FaultDraft {
  std::string where;
  std::optional<std::uint32_t> worker;
  std::optional<FaultTrigger> trigger;
  FaultKind kind = FaultKind::FailStop;
  std::optional<std::uint32_t> deadline_hint_ms;

  void apply(const KeyContext& kv) {
    const std::string& k = kv.key();
    if (k == "worker") worker = kv.integer<std::uint32_t>(0);
    else if (k == "at_superstep" || k == "at_elapsed_ms") {
      if (trigger) kv.fail("a fault has exactly one trigger");
      if (k == "at_superstep") trigger = AtSuperstep{kv.integer<std::uint64_t>(1)};
      else trigger = AtElapsedMs{kv.integer<std::uint64_t>(0)};
    } else if (k == "kind") {
      try {
        kind = parse_fault_kind(kv.text());
      } catch (const Error& e) {
        kv.fail(e.what());
      }
    } else if (k == "deadline_hint_ms") deadline_hint_ms = kv.integer<std::uint32_t>(0);
    else kv.fail("unknown key in [[fault]]");
  }

  Injection finish() const {
    if (!worker) throw Error(ErrorCode::ConfigError, where + "[[fault]] needs a worker");
    if (!trigger) throw Error(ErrorCode::ConfigError, where + "[[fault]] needs at_superstep or at_elapsed_ms");
    return Injection{*worker, *trigger, kind, deadline_hint_ms};
  }
};

}  // namespace detail

// `origin` prefixes error messages (typically the file path).
inline Config parse_config(std::string_view text, const std::string& origin = "config") {
  Config cfg;
  std::optional<detail::FaultDraft> fault;
  std::size_t line_no = 0;
  std::istringstream is{std::string(text)};
  std::string raw;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    std::string_view line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[[fault]]")
        throw Error(ErrorCode::ConfigError, where + "unknown table " + std::string(line) + " (only [[fault]] is supported)");
      if (fault) cfg.plan.injections.push_back(fault->finish());
      fault.emplace();
      fault->where = where;
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigError, where + "expected key = value");
    std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorCode::ConfigError, where + "missing key");
    auto value = detail::parse_scalar(line.substr(eq + 1));
    if (!value) throw Error(ErrorCode::ConfigError, where + key + ": unparseable value");
    detail::KeyContext kv(where, key, std::move(*value));
    if (fault) fault->apply(kv);
    else detail::apply_top_level(cfg, kv);
  }
  if (fault) cfg.plan.injections.push_back(fault->finish());
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

// "fault=kind,worker,superstep|elapsed_ms,N"
inline Injection parse_fault_override(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto c = text.find(',', start);
    parts.push_back(detail::trim(text.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start)));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  const std::string usage = "fault override must be kind,worker,superstep|elapsed_ms,N: " + std::string(text);
  if (parts.size() != 4) throw Error(ErrorCode::ConfigError, usage);
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw Error(ErrorCode::ConfigError, usage);
    return v;
  };
  Injection inj;
  inj.kind = detail::parse_fault_kind(parts[0]);
  inj.target_worker = static_cast<std::uint32_t>(number(parts[1]));
  if (parts[2] == "superstep") inj.trigger = AtSuperstep{number(parts[3])};
  else if (parts[2] == "elapsed_ms") inj.trigger = AtElapsedMs{number(parts[3])};
  else throw Error(ErrorCode::ConfigError, usage);
  return inj;
}

// Command-line "key=value". Unquoted text that is not a number or boolean
// is taken as a string, so `--set app=jacobi` works without shell quoting.
inline void apply_override(Config& cfg, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw Error(ErrorCode::ConfigError, "override must be key=value: " + std::string(assignment));
  std::string key(detail::trim(assignment.substr(0, eq)));
  std::string_view rhs = detail::trim(assignment.substr(eq + 1));
  if (key == "fault") {
    cfg.plan.injections.push_back(parse_fault_override(rhs));
    return;
  }
  auto value = detail::parse_scalar(rhs);
  if (!value) value = std::string(rhs);
  // A string key given a bare number ("run_id=7") still means the text.
  detail::ConfigValue v = *value;
  static const std::set<std::string> string_keys = {"app",  "strategy", "checkpoint_dir", "mode",   "listen",
                                                    "termination_signal", "records",        "final_state", "run_id"};
  if (string_keys.contains(key) && !std::holds_alternative<std::string>(v)) v = std::string(rhs);
  detail::apply_top_level(cfg, detail::KeyContext("--set ", key, std::move(v)));
}

}  // namespace bspft
