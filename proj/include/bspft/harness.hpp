#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bspft/apps.hpp"
#include "bspft/checkpoint_store.hpp"
#include "bspft/clock.hpp"
#include "bspft/error.hpp"
#include "bspft/fault_plan.hpp"
#include "bspft/heartbeat.hpp"
#include "bspft/metrics.hpp"
#include "bspft/policy.hpp"
#include "bspft/state_registry.hpp"
#include "bspft/termination.hpp"
#include "bspft/worker_group.hpp"

namespace bspft {

enum class WorkerMode { InProcess, Process };

inline std::string_view to_string(WorkerMode m) { return m == WorkerMode::InProcess ? "in_process" : "process"; }

inline WorkerMode parse_worker_mode(std::string_view s) {
  if (s == "in_process" || s == "thread") return WorkerMode::InProcess;
  if (s == "process") return WorkerMode::Process;
  throw Error(ErrorCode::ConfigError, "unknown mode '" + std::string(s) + "' (expected process or in_process)");
}

struct RunConfig {
  std::uint32_t workers = 4;
  std::uint64_t supersteps = 20;
  CheckpointStrategy strategy = EveryKSupersteps{1};
  DetectorConfig detector;
  std::filesystem::path checkpoint_dir = "checkpoints";
  bool local_checkpointing = true;
  WorkerMode mode = WorkerMode::Process;
  std::uint32_t retention = 0;  // 0 keeps every checkpoint
  bool allow_cold_restart = false;
  bool overwrite_checkpoints = false;
  // false: no registry, detector, or commits (the benchmark baseline).
  bool dependability = true;
  std::optional<int> termination_signal;
  std::optional<std::uint64_t> pinned_created_at_us;
  std::string run_id = "run";
  // Give up on a superstep whose replies have not arrived after this long.
  std::chrono::milliseconds stall_timeout{60'000};

  void validate() const {
    if (workers == 0) throw Error(ErrorCode::ConfigError, "workers must be at least 1");
    if (workers > 0xFFFF) throw Error(ErrorCode::ConfigError, "at most 65535 workers");
    if (supersteps == 0) throw Error(ErrorCode::ConfigError, "supersteps must be at least 1");
    if (retention == 1) throw Error(ErrorCode::RetentionTooSmall, "retention must be 0 (keep all) or at least 2");
    detector.validate();
    (void)resolve(strategy);  // surfaces MtbfTooSmall early
  }
};

enum class RunStatus { Completed, Resumable };

struct Rollback {
  std::uint64_t failed_at_superstep = 0;
  std::uint64_t restored_epoch = 0;
  std::uint32_t worker = 0;
};

struct RunResult {
  Bytes final_global;
  RunRecord record;
  RunStatus status = RunStatus::Completed;
  std::vector<FailureEvent> events;
  std::vector<Rollback> rollbacks;
  std::vector<std::uint64_t> committed_epochs;
  std::uint64_t last_superstep = 0;
};

inline constexpr std::string_view kMetaSegment = "__meta";
inline constexpr std::string_view kGlobalSegment = "global";

inline std::string local_segment_id(std::uint32_t worker) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "local.%06u", worker);
  return buf;
}

// Identity of a run as stored in the "__meta" segment. Only the fields that
// change the computation are compared on resume; supersteps may be extended.
inline std::string encode_meta(const AppSpec& app, const RunConfig& cfg) {
  std::ostringstream os;
  os << "app=" << to_string(app.kind) << "\n"
     << "dimension=" << app.dimension << "\n"
     << "population=" << app.population << "\n"
     << "seed=" << app.seed << "\n"
     << "workers=" << cfg.workers << "\n"
     << "local_checkpointing=" << (cfg.local_checkpointing ? 1 : 0) << "\n"
     << "supersteps=" << cfg.supersteps << "\n";
  return os.str();
}

inline std::map<std::string, std::string> decode_meta(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline void check_meta(ByteView stored, const AppSpec& app, const RunConfig& cfg) {
  auto have = decode_meta(std::string_view(reinterpret_cast<const char*>(stored.data()), stored.size()));
  auto want = decode_meta(encode_meta(app, cfg));
  for (const char* key : {"app", "dimension", "population", "seed", "workers", "local_checkpointing"}) {
    auto it = have.find(key);
    const std::string got = it == have.end() ? "<missing>" : it->second;
    if (got != want[key])
      throw Error(ErrorCode::MetaMismatch, std::string("checkpoint has ") + key + "=" + got + ", config has " + key +
                                               "=" + want[key]);
  }
}

namespace detail {

class Coordinator {
 public:
  Coordinator(const BspApp& app, const RunConfig& cfg, const FaultPlan& plan)
      : app_(app), cfg_(cfg), plan_(plan), strategy_(resolve(cfg.strategy)), fired_(plan.injections.size(), false) {
    cfg_.validate();
    plan_.validate(cfg_.workers);
    instrumented_ = cfg_.dependability;
    record_.run_id = cfg_.run_id;
    record_.variant = instrumented_ ? Variant::Instrumented : Variant::Baseline;
  }

  RunResult start_fresh() {
    const auto t0 = monotonic_now_ns();
    run_start_ns_ = t0;
    global_ = app_.initial_global();
    std::vector<Bytes> locals;
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) locals.push_back(app_.initial_local(slot(w)));
    if (instrumented_) {
      prepare_fresh_directory();
      setup_registry(locals);
    }
    launch(locals);
    if (instrumented_ && !is_never(strategy_)) commit(0);
    return loop(1, t0);
  }

  RunResult start_resume() {
    const auto t0 = monotonic_now_ns();
    run_start_ns_ = t0;
    if (!instrumented_) throw Error(ErrorCode::ConfigError, "resume requires dependability features");
    std::error_code ec;
    if (!std::filesystem::is_directory(cfg_.checkpoint_dir, ec))
      throw Error(ErrorCode::NoCheckpoint, "no checkpoint directory at " + cfg_.checkpoint_dir.string());
    auto restored = restore_latest(cfg_.checkpoint_dir);
    if (!restored) throw Error(ErrorCode::NoCheckpoint, "no valid checkpoint in " + cfg_.checkpoint_dir.string());
    const CheckpointSegment* meta = restored->find(kMetaSegment);
    if (!meta) throw Error(ErrorCode::MetaMismatch, restored->path.string() + " has no __meta segment");
    check_meta(meta->payload, app_.spec(), cfg_);
    auto locals = adopt(*restored);
    setup_registry(locals);
    highest_on_disk_ = highest_epoch_on_disk();
    launch(locals);
    return loop(restored->epoch + 1, t0);
  }

 private:
  WorkerSlot slot(std::uint32_t w) const { return WorkerSlot{w, cfg_.workers}; }

  void prepare_fresh_directory() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg_.checkpoint_dir, ec);
    if (ec) throw Error(ErrorCode::ConfigError, "cannot create " + cfg_.checkpoint_dir.string() + ": " + ec.message());
    auto existing = list_checkpoints(cfg_.checkpoint_dir);
    if (!existing.empty()) {
      if (!cfg_.overwrite_checkpoints)
        throw Error(ErrorCode::ConfigError, cfg_.checkpoint_dir.string() +
                                                " already holds checkpoints; use resume or set overwrite_checkpoints");
      for (const auto& f : existing) fs::remove(f.path, ec);
    }
    for (const auto& entry : fs::directory_iterator(cfg_.checkpoint_dir, ec)) {
      if (entry.path().extension() == ".tmp") fs::remove(entry.path(), ec);
    }
  }

  std::optional<std::uint64_t> highest_epoch_on_disk() const {
    auto files = list_checkpoints(cfg_.checkpoint_dir);
    if (files.empty()) return std::nullopt;
    return files.back().epoch;
  }

  void setup_registry(const std::vector<Bytes>& locals) {
    meta_ = registry_.register_reserved_segment(std::string(kMetaSegment), to_bytes(encode_meta(app_.spec(), cfg_)));
    global_handle_ = registry_.register_segment(std::string(kGlobalSegment), SegmentScope::global(), global_);
    if (cfg_.local_checkpointing) {
      for (std::uint32_t w = 0; w < cfg_.workers; ++w)
        local_handles_.push_back(registry_.register_segment(local_segment_id(w), SegmentScope::local(w), locals[w]));
    }
  }

  void launch(const std::vector<Bytes>& locals) {
    if (cfg_.mode == WorkerMode::InProcess)
      group_ = std::make_unique<InProcessGroup>(app_, cfg_.workers, cfg_.detector);
    else
      group_ = std::make_unique<ProcessGroup>(app_, cfg_.workers, cfg_.detector, instrumented_);
    incarnation_.assign(cfg_.workers, 0);
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) group_->spawn(w, 0, locals[w]);
    if (instrumented_) {
      std::vector<std::uint16_t> nodes;
      for (std::uint32_t w = 0; w < cfg_.workers; ++w) nodes.push_back(static_cast<std::uint16_t>(w));
      monitor_.emplace(cfg_.detector, nodes, group_->detector_now_ns());
      watcher_.set_hold_gate([this] { return registry_.any_protected(); });
      if (cfg_.termination_signal) watcher_.bind_os_signal(*cfg_.termination_signal);
    }
    last_checkpoint_ns_ = monotonic_now_ns();
  }

  // Global state plus per-worker locals from a checkpoint; locals missing
  // from the file are rebuilt from the global state.
  std::vector<Bytes> adopt(const RestoredCheckpoint& ckpt) {
    const CheckpointSegment* g = ckpt.find(kGlobalSegment);
    if (!g) throw Error(ErrorCode::MetaMismatch, ckpt.path.string() + " has no global segment");
    global_ = g->payload;
    std::vector<Bytes> locals;
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) {
      const CheckpointSegment* l = ckpt.find(local_segment_id(w));
      locals.push_back(l ? l->payload : app_.rebuild_local(global_, slot(w)));
    }
    return locals;
  }

  void commit(std::uint64_t epoch) {
    // A higher epoch can survive on disk only as an unreadable file; committing
    // below it would break epoch monotonicity, so skip until we pass it.
    if (highest_on_disk_ && epoch <= *highest_on_disk_) return;
    const auto t0 = monotonic_now_ns();
    Snapshot snap = registry_.snapshot();
    CommitOptions opts;
    opts.created_at_us = cfg_.pinned_created_at_us;
    commit_checkpoint(cfg_.checkpoint_dir, epoch, snap, opts);
    highest_on_disk_ = epoch;
    committed_.push_back(epoch);
    if (cfg_.retention >= 2) prune_checkpoints(cfg_.checkpoint_dir, cfg_.retention);
    record_.checkpoint_cost_s.push_back(ns_to_seconds(monotonic_now_ns() - t0));
    last_checkpoint_ns_ = monotonic_now_ns();
  }

  void fire(const Injection& inj) {
    if (inj.kind == FaultKind::FailStop)
      group_->kill(inj.target_worker);
    else
      watcher_.inject(inj.deadline_hint_ms);
  }

  void fire_superstep_triggers(std::uint64_t s) {
    for (std::size_t i = 0; i < plan_.injections.size(); ++i) {
      const auto* at = std::get_if<AtSuperstep>(&plan_.injections[i].trigger);
      if (!fired_[i] && at && at->superstep == s) {
        fired_[i] = true;
        fire(plan_.injections[i]);
      }
    }
  }

  void fire_elapsed_triggers() {
    const auto elapsed_ms = static_cast<std::uint64_t>((monotonic_now_ns() - run_start_ns_) / 1'000'000);
    for (std::size_t i = 0; i < plan_.injections.size(); ++i) {
      const auto* at = std::get_if<AtElapsedMs>(&plan_.injections[i].trigger);
      if (!fired_[i] && at && elapsed_ms >= at->ms) {
        fired_[i] = true;
        fire(plan_.injections[i]);
      }
    }
  }

  // Runs superstep s on every worker. Returns contributions in worker order,
  // or nothing if the detector reported failures (then `failures` is filled).
  std::optional<std::vector<Bytes>> execute(std::uint64_t s, std::vector<FailureEvent>& failures) {
    const std::uint64_t round = ++round_;
    const bool want_local = instrumented_ && cfg_.local_checkpointing;
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) {
      WorkerCommand cmd;
      cmd.type = WorkerCommand::Type::Step;
      cmd.round = round;
      cmd.step = s;
      cmd.want_local = want_local;
      cmd.global = global_;
      group_->send(w, cmd);
    }
    std::vector<std::optional<WorkerReply>> replies(cfg_.workers);
    std::size_t pending = cfg_.workers;
    const auto budget = std::chrono::milliseconds(std::max<std::uint32_t>(1, cfg_.detector.period_ms / 5));
    auto last_progress = std::chrono::steady_clock::now();
    while (pending > 0) {
      for (auto& [w, rep] : group_->poll(budget)) {
        if (rep.round != round || replies[w]) continue;
        replies[w] = std::move(rep);
        --pending;
        last_progress = std::chrono::steady_clock::now();
      }
      fire_elapsed_triggers();
      if (monitor_) {
        auto arrivals = group_->drain_heartbeats();
        failures = monitor_->observe(group_->detector_now_ns(), arrivals);
        if (!failures.empty()) return std::nullopt;
      }
      if (pending > 0 && std::chrono::steady_clock::now() - last_progress > cfg_.stall_timeout)
        throw Error(ErrorCode::UnrecoverableFailure, "superstep " + std::to_string(s) + " stalled with " +
                                                         std::to_string(pending) + " replies missing");
    }
    std::vector<Bytes> contributions;
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) {
      contributions.push_back(std::move(replies[w]->contribution));
      if (want_local && replies[w]->local) registry_.update_segment(local_handles_[w], std::move(*replies[w]->local));
    }
    return contributions;
  }

  // Coordinated rollback: every worker returns to the latest valid epoch;
  // failed workers come back with a higher incarnation.
  std::uint64_t recover(std::uint64_t failed_at, const std::vector<FailureEvent>& failures) {
    const auto t0 = monotonic_now_ns();
    std::set<std::uint32_t> failed;
    for (const auto& ev : failures) {
      failed.insert(ev.node_id);
      events_.push_back(ev);
      group_->kill(ev.node_id);
    }
    std::uint64_t epoch = 0;
    std::vector<Bytes> locals;
    auto restored = restore_latest(cfg_.checkpoint_dir);
    if (restored) {
      epoch = restored->epoch;
      locals = adopt(*restored);
    } else if (cfg_.allow_cold_restart) {
      global_ = app_.initial_global();
      for (std::uint32_t w = 0; w < cfg_.workers; ++w) locals.push_back(app_.initial_local(slot(w)));
    } else {
      throw Error(ErrorCode::UnrecoverableFailure,
                  "worker " + std::to_string(*failed.begin()) + " failed at superstep " + std::to_string(failed_at) +
                      " and no valid checkpoint exists");
    }
    registry_.update_segment(*global_handle_, global_);
    if (cfg_.local_checkpointing)
      for (std::uint32_t w = 0; w < cfg_.workers; ++w) registry_.update_segment(local_handles_[w], locals[w]);
    for (std::uint32_t w = 0; w < cfg_.workers; ++w) {
      if (failed.contains(w)) {
        ++incarnation_[w];
        group_->spawn(w, incarnation_[w], locals[w]);
        monitor_->expect_incarnation(static_cast<std::uint16_t>(w), incarnation_[w], group_->detector_now_ns());
        rollbacks_.push_back(Rollback{failed_at, epoch, w});
      } else {
        WorkerCommand cmd;
        cmd.type = WorkerCommand::Type::SetLocal;
        cmd.round = round_;
        cmd.local = locals[w];
        group_->send(w, cmd);
      }
    }
    record_.fault_count += failed.size();
    record_.recovery_cost_s.push_back(ns_to_seconds(monotonic_now_ns() - t0));
    last_checkpoint_ns_ = monotonic_now_ns();
    return epoch;
  }

  RunResult finish(RunStatus status, std::uint64_t last, std::int64_t t0) {
    group_->shutdown();
    watcher_.unbind();
    record_.total_wall_s = ns_to_seconds(monotonic_now_ns() - t0);
    RunResult r;
    r.final_global = global_;
    r.record = record_;
    r.status = status;
    r.events = events_;
    r.rollbacks = rollbacks_;
    r.committed_epochs = committed_;
    r.last_superstep = last;
    return r;
  }

  RunResult loop(std::uint64_t first, std::int64_t t0) {
    std::uint64_t s = first;
    std::uint64_t completed = first - 1;
    while (s <= cfg_.supersteps) {
      const auto step_t0 = monotonic_now_ns();
      fire_superstep_triggers(s);
      std::vector<FailureEvent> failures;
      auto contributions = execute(s, failures);
      if (!contributions) {
        s = recover(s, failures) + 1;
        continue;
      }
      {
        std::optional<ProtectedSection> guard;
        if (instrumented_) guard.emplace(registry_);
        global_ = app_.reduce(global_, *contributions, s);
        if (instrumented_) registry_.update_segment(*global_handle_, global_);
      }
      completed = s;
      record_.superstep_wall_s.push_back(ns_to_seconds(monotonic_now_ns() - step_t0));
      if (instrumented_) {
        if (auto notice = watcher_.poll()) {
          commit(s);
          watcher_.acknowledge();
          return finish(s < cfg_.supersteps ? RunStatus::Resumable : RunStatus::Completed, completed, t0);
        }
        if (should_checkpoint(strategy_, s, monotonic_now_ns(), last_checkpoint_ns_)) commit(s);
      }
      ++s;
    }
    return finish(RunStatus::Completed, completed, t0);
  }

  const BspApp& app_;
  RunConfig cfg_;
  FaultPlan plan_;
  CheckpointStrategy strategy_;
  bool instrumented_ = true;
  std::vector<bool> fired_;
  StateRegistry registry_;
  std::optional<SegmentHandle> meta_, global_handle_;
  std::vector<SegmentHandle> local_handles_;
  std::unique_ptr<WorkerGroup> group_;
  std::optional<HeartbeatMonitor> monitor_;
  TerminationWatcher watcher_;
  std::vector<std::uint32_t> incarnation_;
  Bytes global_;
  std::uint64_t round_ = 0;
  std::optional<std::uint64_t> highest_on_disk_;
  std::int64_t run_start_ns_ = 0;
  std::int64_t last_checkpoint_ns_ = 0;
  RunRecord record_;
  std::vector<FailureEvent> events_;
  std::vector<Rollback> rollbacks_;
  std::vector<std::uint64_t> committed_;
};

}  // namespace detail

// Fresh run into an empty (or overwritable) checkpoint directory.
inline RunResult run(const BspApp& app, const RunConfig& cfg, const FaultPlan& plan = {}) {
  detail::Coordinator c(app, cfg, plan);
  return c.start_fresh();
}

// Continues from the latest valid checkpoint in cfg.checkpoint_dir.
inline RunResult resume(const BspApp& app, const RunConfig& cfg, const FaultPlan& plan = {}) {
  detail::Coordinator c(app, cfg, plan);
  return c.start_resume();
}

struct BenchResult {
  std::vector<RunRecord> instrumented;
  std::vector<RunRecord> baseline;

  std::vector<RunRecord> all() const {
    std::vector<RunRecord> out = instrumented;
    out.insert(out.end(), baseline.begin(), baseline.end());
    return out;
  }
};

// Alternates instrumented and baseline repetitions so drift in machine load
// hits both variants alike. The baseline never injects faults.
inline BenchResult bench(const BspApp& app, const RunConfig& cfg, std::uint32_t repetitions,
                         const FaultPlan& plan = {}) {
  if (repetitions == 0) throw Error(ErrorCode::ConfigError, "repetitions must be at least 1");
  BenchResult out;
  for (std::uint32_t rep = 0; rep < repetitions; ++rep) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "rep-%03u", rep);

    RunConfig with = cfg;
    with.checkpoint_dir = cfg.checkpoint_dir / tag;
    with.overwrite_checkpoints = true;
    with.termination_signal.reset();
    with.run_id = cfg.run_id + "-" + tag + "-instrumented";
    out.instrumented.push_back(run(app, with, plan).record);

    RunConfig without = cfg;
    without.dependability = false;
    without.termination_signal.reset();
    without.run_id = cfg.run_id + "-" + tag + "-baseline";
    out.baseline.push_back(run(app, without).record);
  }
  return out;
}

}  // namespace bspft
