#include <gtest/gtest.h>

#include "bspft/harness.hpp"
#include "reference_apps.hpp"
#include "test_support.hpp"

using namespace bspft;
using bspft::testing::TempDir;

namespace {

RunConfig in_process(const std::filesystem::path& dir, std::uint32_t workers = 4, std::uint64_t steps = 10) {
  RunConfig c;
  c.workers = workers;
  c.supersteps = steps;
  c.checkpoint_dir = dir;
  c.mode = WorkerMode::InProcess;
  c.detector.period_ms = 50;
  c.detector.misses_k = 3;
  return c;
}

FaultPlan fail_stop(std::uint32_t worker, std::uint64_t at) {
  return FaultPlan{{Injection{worker, AtSuperstep{at}, FaultKind::FailStop, std::nullopt}}};
}

Bytes pack(const std::vector<double>& v) {
  Bytes b;
  append_f64s(b, v);
  return b;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(Harness, JacobiMatchesSequentialReference) {
  TempDir dir;
  BspApp app({AppKind::JacobiSolver, 16, 50, 1});
  auto r = run(app, in_process(dir.path()));
  EXPECT_EQ(r.status, RunStatus::Completed);
  EXPECT_EQ(r.final_global, pack(ref::jacobi(16, 50, 1, 10)));
  EXPECT_EQ(r.record.superstep_wall_s.size(), 10u);
  EXPECT_EQ(r.committed_epochs.size(), 11u);
  EXPECT_EQ(r.record.checkpoint_cost_s.size(), 11u);
}

TEST(Harness, AllAppsMatchReferenceInParallel) {
  TempDir a, b;
  EXPECT_EQ(run(BspApp({AppKind::ParticleSwarm, 8, 20, 3}), in_process(a.path(), 3, 12)).final_global,
            pack(ref::pso(8, 20, 3, 12)));
  EXPECT_EQ(run(BspApp({AppKind::DifferentialEvolution, 8, 20, 3}), in_process(b.path(), 3, 12)).final_global,
            pack(ref::de(8, 20, 3, 12)));
}

TEST(Harness, KillAtSuperstepFiveRecoversBitIdentically) {
  for (auto kind : {AppKind::JacobiSolver, AppKind::ParticleSwarm, AppKind::DifferentialEvolution}) {
    TempDir clean, faulty;
    BspApp app({kind, 16, 50, 11});
    auto base = run(app, in_process(clean.path()));
    auto r = run(app, in_process(faulty.path()), fail_stop(2, 5));
    EXPECT_EQ(r.final_global, base.final_global) << to_string(kind);
    EXPECT_EQ(r.record.fault_count, 1u);
    ASSERT_EQ(r.rollbacks.size(), 1u);
    EXPECT_EQ(r.rollbacks[0].worker, 2u);
    EXPECT_EQ(r.rollbacks[0].failed_at_superstep, 5u);
    EXPECT_EQ(r.rollbacks[0].restored_epoch, 4u);
    ASSERT_EQ(r.events.size(), 1u);
    EXPECT_EQ(r.events[0].node_id, 2);
    EXPECT_EQ(r.events[0].kind, FailureKind::HeartbeatTimeout);
    EXPECT_EQ(r.record.recovery_cost_s.size(), 1u);
  }
}

TEST(Harness, SeveralFailuresIncludingSameSuperstep) {
  TempDir clean, faulty;
  BspApp app({AppKind::ParticleSwarm, 6, 30, 4});
  auto cfg = in_process(clean.path(), 5, 15);
  auto base = run(app, cfg);
  FaultPlan plan;
  plan.injections.push_back({1, AtSuperstep{3}, FaultKind::FailStop, std::nullopt});
  plan.injections.push_back({4, AtSuperstep{3}, FaultKind::FailStop, std::nullopt});
  plan.injections.push_back({1, AtSuperstep{9}, FaultKind::FailStop, std::nullopt});
  cfg.checkpoint_dir = faulty.path();
  cfg.strategy = EveryKSupersteps{4};
  auto r = run(app, cfg, plan);
  EXPECT_EQ(r.final_global, base.final_global);
  EXPECT_EQ(r.record.fault_count, 3u);
  for (const auto& rb : r.rollbacks) EXPECT_LE(rb.restored_epoch, rb.failed_at_superstep);
  for (auto e : r.committed_epochs) EXPECT_LE(e, cfg.supersteps);
}

TEST(Harness, NeverStrategyCannotRecover) {
  TempDir dir;
  auto cfg = in_process(dir.path());
  cfg.strategy = Never{};
  BspApp app({AppKind::JacobiSolver, 16, 50, 1});
  EXPECT_EQ(code_of([&] { run(app, cfg, fail_stop(2, 5)); }), ErrorCode::UnrecoverableFailure);
  EXPECT_TRUE(list_checkpoints(dir.path()).empty());
}

TEST(Harness, ColdRestartWhenAllowed) {
  TempDir clean, dir;
  BspApp app({AppKind::DifferentialEvolution, 6, 12, 2});
  auto base = run(app, in_process(clean.path()));
  auto cfg = in_process(dir.path());
  cfg.strategy = Never{};
  cfg.allow_cold_restart = true;
  auto r = run(app, cfg, fail_stop(0, 6));
  EXPECT_EQ(r.final_global, base.final_global);
  EXPECT_EQ(r.rollbacks.at(0).restored_epoch, 0u);
}

TEST(Harness, TerminateThenResumeMatchesStraightRun) {
  TempDir straight, split;
  BspApp app({AppKind::ParticleSwarm, 16, 50, 9});
  auto full = run(app, in_process(straight.path(), 4, 20));

  FaultPlan notice{{Injection{0, AtSuperstep{10}, FaultKind::TerminationNotice, 500}}};
  auto first = run(app, in_process(split.path(), 4, 20), notice);
  EXPECT_EQ(first.status, RunStatus::Resumable);
  EXPECT_EQ(first.last_superstep, 10u);
  EXPECT_EQ(list_checkpoints(split.path()).back().epoch, 10u);

  auto second = resume(app, in_process(split.path(), 4, 20));
  EXPECT_EQ(second.status, RunStatus::Completed);
  EXPECT_EQ(second.last_superstep, 20u);
  EXPECT_EQ(second.final_global, full.final_global);
}

TEST(Harness, ResumeGuards) {
  TempDir empty, dir;
  BspApp jacobi({AppKind::JacobiSolver, 16, 50, 1});
  EXPECT_EQ(code_of([&] { resume(jacobi, in_process(empty.path())); }), ErrorCode::NoCheckpoint);
  EXPECT_EQ(code_of([&] { resume(jacobi, in_process(empty / "nope")); }), ErrorCode::NoCheckpoint);

  run(jacobi, in_process(dir.path()));
  BspApp pso({AppKind::ParticleSwarm, 16, 50, 1});
  EXPECT_EQ(code_of([&] { resume(pso, in_process(dir.path())); }), ErrorCode::MetaMismatch);
  EXPECT_EQ(code_of([&] { resume(jacobi, in_process(dir.path(), 3)); }), ErrorCode::MetaMismatch);
  // Nothing left to do: the latest epoch already covers every superstep.
  auto again = resume(jacobi, in_process(dir.path()));
  EXPECT_EQ(again.final_global, pack(ref::jacobi(16, 50, 1, 10)));
}

TEST(Harness, ResumeExtendsRun) {
  TempDir a, b;
  BspApp app({AppKind::JacobiSolver, 8, 8, 5});
  run(app, in_process(a.path(), 2, 6));
  auto extended = resume(app, in_process(a.path(), 2, 14));
  EXPECT_EQ(extended.final_global, pack(ref::jacobi(8, 8, 5, 14)));
}

TEST(Harness, LocalCheckpointingToggle) {
  TempDir on, off;
  BspApp app({AppKind::ParticleSwarm, 4, 12, 1});
  run(app, in_process(on.path(), 3, 3));
  auto cfg = in_process(off.path(), 3, 3);
  cfg.local_checkpointing = false;
  run(app, cfg);

  auto ids = [](const std::filesystem::path& dir) {
    auto r = restore_latest(dir);
    std::vector<std::string> out;
    for (auto& s : r->segments) out.push_back(s.id);
    return out;
  };
  EXPECT_EQ(ids(on.path()),
            (std::vector<std::string>{"__meta", "global", "local.000000", "local.000001", "local.000002"}));
  EXPECT_EQ(ids(off.path()), (std::vector<std::string>{"__meta", "global"}));
}

TEST(Harness, WithoutLocalStateGlobalOnlyAppsStillRecover) {
  TempDir clean, faulty;
  BspApp app({AppKind::JacobiSolver, 10, 10, 2});
  auto base = run(app, in_process(clean.path()));
  auto cfg = in_process(faulty.path());
  cfg.local_checkpointing = false;
  EXPECT_EQ(run(app, cfg, fail_stop(1, 7)).final_global, base.final_global);
}

TEST(Harness, RefusesToClobberCheckpoints) {
  TempDir dir;
  BspApp app({AppKind::JacobiSolver, 4, 4, 1});
  run(app, in_process(dir.path(), 2, 2));
  EXPECT_EQ(code_of([&] { run(app, in_process(dir.path(), 2, 2)); }), ErrorCode::ConfigError);
  auto cfg = in_process(dir.path(), 2, 2);
  cfg.overwrite_checkpoints = true;
  EXPECT_NO_THROW(run(app, cfg));
}

TEST(Harness, RetentionPrunes) {
  TempDir dir;
  auto cfg = in_process(dir.path(), 2, 8);
  cfg.retention = 3;
  run(BspApp({AppKind::JacobiSolver, 4, 4, 1}), cfg);
  auto files = list_checkpoints(dir.path());
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files.front().epoch, 6u);
}

TEST(Harness, SkipsEpochsShadowedByCorruptFile) {
  TempDir dir;
  BspApp app({AppKind::JacobiSolver, 6, 6, 1});
  auto cfg = in_process(dir.path(), 2, 4);
  FaultPlan stop{{Injection{0, AtSuperstep{2}, FaultKind::TerminationNotice, std::nullopt}}};
  run(app, cfg, stop);
  bspft::testing::write_text(dir / checkpoint_file_name(3), "torn");
  auto r = resume(app, cfg);
  EXPECT_EQ(r.final_global, pack(ref::jacobi(6, 6, 1, 4)));
  EXPECT_EQ(r.committed_epochs, std::vector<std::uint64_t>{4});
}

TEST(Harness, ElapsedTriggerFires) {
  TempDir dir;
  auto cfg = in_process(dir.path(), 2, 100000);
  FaultPlan plan{{Injection{1, AtElapsedMs{30}, FaultKind::TerminationNotice, std::nullopt}}};
  auto r = run(BspApp({AppKind::JacobiSolver, 4, 4, 1}), cfg, plan);
  EXPECT_EQ(r.status, RunStatus::Resumable);
  EXPECT_LT(r.last_superstep, 100000u);
}

TEST(Harness, ProcessWorkersRecoverFromSigkill) {
  TempDir clean, faulty;
  BspApp app({AppKind::ParticleSwarm, 8, 24, 6});
  auto cfg = in_process(clean.path(), 3, 8);
  auto base = run(app, cfg);
  cfg.checkpoint_dir = faulty.path();
  cfg.mode = WorkerMode::Process;
  auto r = run(app, cfg, fail_stop(1, 4));
  EXPECT_EQ(r.final_global, base.final_global);
  EXPECT_EQ(r.record.fault_count, 1u);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].node_id, 1);
}

TEST(Harness, BenchPairsVariants) {
  TempDir dir;
  auto cfg = in_process(dir.path(), 2, 3);
  auto b = bench(BspApp({AppKind::JacobiSolver, 4, 4, 1}), cfg, 3);
  ASSERT_EQ(b.instrumented.size(), 3u);
  ASSERT_EQ(b.baseline.size(), 3u);
  for (auto& r : b.baseline) {
    EXPECT_EQ(r.variant, Variant::Baseline);
    EXPECT_TRUE(r.checkpoint_cost_s.empty());
    EXPECT_GT(r.total_wall_s, 0.0);
  }
  for (auto& r : b.instrumented) EXPECT_EQ(r.checkpoint_cost_s.size(), 4u);
  EXPECT_EQ(code_of([&] { bench(BspApp({AppKind::JacobiSolver, 4, 4, 1}), cfg, 0); }), ErrorCode::ConfigError);
}

TEST(Harness, ValidatesConfig) {
  TempDir dir;
  BspApp app({AppKind::JacobiSolver, 4, 4, 1});
  auto cfg = in_process(dir.path());
  cfg.workers = 0;
  EXPECT_EQ(code_of([&] { run(app, cfg); }), ErrorCode::ConfigError);
  cfg = in_process(dir.path());
  cfg.supersteps = 0;
  EXPECT_EQ(code_of([&] { run(app, cfg); }), ErrorCode::ConfigError);
  cfg = in_process(dir.path());
  EXPECT_EQ(code_of([&] { run(app, cfg, fail_stop(4, 1)); }), ErrorCode::ConfigError);
}
