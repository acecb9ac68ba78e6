#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <thread>

#include "bspft/state_registry.hpp"

using namespace bspft;

namespace {

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

TEST(StateRegistry, RegisterThenSnapshotIsIdentity) {
  StateRegistry reg;
  reg.register_segment("model", SegmentScope::global(), Bytes(8, 0));
  auto snap = reg.snapshot();
  ASSERT_EQ(snap.size(), 1u);
  EXPECT_EQ(snap[0].id, "model");
  EXPECT_EQ(snap[0].version, 0u);
  EXPECT_EQ(snap[0].payload, Bytes(8, 0));
  EXPECT_TRUE(snap[0].scope.is_global());
}

TEST(StateRegistry, RejectsDuplicateAndMalformedIds) {
  StateRegistry reg;
  reg.register_segment("model", SegmentScope::global(), {});
  EXPECT_EQ(code_of([&] { reg.register_segment("model", SegmentScope::local(1), {}); }), ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([&] { reg.register_segment("", SegmentScope::global(), {}); }), ErrorCode::InvalidId);
  EXPECT_EQ(code_of([&] { reg.register_segment(std::string(256, 'x'), SegmentScope::global(), {}); }),
            ErrorCode::IdTooLong);
  EXPECT_EQ(code_of([&] { reg.register_segment(std::string("a\0b", 3), SegmentScope::global(), {}); }),
            ErrorCode::InvalidId);
  EXPECT_EQ(code_of([&] { reg.register_segment("__meta", SegmentScope::global(), {}); }), ErrorCode::ReservedId);
  EXPECT_NO_THROW(reg.register_segment(std::string(255, 'y'), SegmentScope::global(), {}));
  EXPECT_NO_THROW(reg.register_reserved_segment("__meta", {}));
  EXPECT_EQ(code_of([] { validate_payload_size(std::size_t{0x80000000}); }), ErrorCode::SegmentTooLarge);
}

TEST(StateRegistry, VersionsCountUpdates) {
  StateRegistry reg;
  auto h = reg.register_segment("x", SegmentScope::global(), {1});
  EXPECT_EQ(reg.update_segment(h, {2}), 1u);
  for (int i = 0; i < 99; ++i) reg.update_segment(h, {3});
  EXPECT_EQ(reg.version(h), 100u);
  reg.update_segment(h, {});
  auto snap = reg.snapshot();
  EXPECT_EQ(snap[0].version, 101u);
  EXPECT_TRUE(snap[0].payload.empty());
}

TEST(StateRegistry, SnapshotOrderFilterAndCopy) {
  StateRegistry reg;
  auto b = reg.register_segment("b", SegmentScope::global(), {1});
  reg.register_segment("a", SegmentScope::global(), {2});
  reg.register_segment("c", SegmentScope::global(), {3});
  reg.register_segment("l0", SegmentScope::local(0), {4});
  reg.register_segment("l1", SegmentScope::local(1), {5});
  reg.register_segment("l2", SegmentScope::local(1), {6});

  auto all = reg.snapshot();
  std::vector<std::string> ids;
  for (auto& e : all) ids.push_back(e.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"a", "b", "c", "l0", "l1", "l2"}));

  auto global = reg.snapshot(ScopeFilter::global_only());
  ASSERT_EQ(global.size(), 3u);
  for (auto& e : global) EXPECT_TRUE(e.scope.is_global());

  auto w1 = reg.snapshot(ScopeFilter::local(1));
  ASSERT_EQ(w1.size(), 2u);
  EXPECT_EQ(w1[0].id, "l1");

  reg.update_segment(b, {9, 9});
  EXPECT_EQ(all[1].payload, Bytes{1});
}

TEST(StateRegistry, MatchesShadowMapUnderRandomOperations) {
  struct Shadow {
    std::optional<std::uint32_t> worker;
    std::uint64_t version = 0;
    Bytes payload;
  };
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 20; ++trial) {
    StateRegistry reg;
    std::map<std::string, Shadow> shadow;
    std::map<std::string, SegmentHandle> handles;
    const int ops = 1 + static_cast<int>(rng() % 1000);
    for (int op = 0; op < ops; ++op) {
      const int kind = static_cast<int>(rng() % 4);
      std::string id = "s" + std::to_string(rng() % 40);
      Bytes payload(rng() % 65);
      for (auto& byte : payload) byte = static_cast<std::uint8_t>(rng());
      if (kind == 0) {
        std::optional<std::uint32_t> worker;
        if (rng() % 2) worker = static_cast<std::uint32_t>(rng() % 4);
        auto scope = worker ? SegmentScope::local(*worker) : SegmentScope::global();
        if (shadow.contains(id)) {
          EXPECT_EQ(code_of([&] { reg.register_segment(id, scope, payload); }), ErrorCode::DuplicateId);
        } else {
          handles.emplace(id, reg.register_segment(id, scope, payload));
          shadow[id] = Shadow{worker, 0, payload};
        }
      } else if (kind == 1 && handles.contains(id)) {
        EXPECT_EQ(reg.update_segment(handles.at(id), payload), ++shadow[id].version);
        shadow[id].payload = payload;
      } else {
        auto filter = ScopeFilter::all();
        std::optional<std::uint32_t> only;
        if (kind == 2) filter = ScopeFilter::global_only();
        if (kind == 3) {
          only = static_cast<std::uint32_t>(rng() % 4);
          filter = ScopeFilter::local(*only);
        }
        auto snap = reg.snapshot(filter);
        std::vector<SnapshotEntry> expected;
        for (const auto& [sid, s] : shadow) {
          bool match = kind == 2 ? !s.worker : kind == 3 ? s.worker == only : true;
          if (match)
            expected.push_back(SnapshotEntry{sid, s.worker ? SegmentScope::local(*s.worker) : SegmentScope::global(),
                                             s.version, s.payload});
        }
        ASSERT_EQ(snap, expected);
      }
    }
    ASSERT_EQ(reg.snapshot().size(), shadow.size());
  }
}

TEST(StateRegistry, ResetMakesHandlesStale) {
  StateRegistry reg;
  auto h = reg.register_segment("x", SegmentScope::global(), {});
  reg.reset();
  EXPECT_EQ(reg.size(), 0u);
  EXPECT_EQ(code_of([&] { reg.update_segment(h, {}); }), ErrorCode::StaleHandle);
  auto h2 = reg.register_segment("x", SegmentScope::global(), {});
  EXPECT_EQ(code_of([&] { reg.read_segment(h); }), ErrorCode::StaleHandle);
  EXPECT_NO_THROW(reg.read_segment(h2));
}

TEST(ProtectedSections, RejectModeBlocksSnapshots) {
  StateRegistry reg;
  reg.register_segment("g", SegmentScope::global(), {});
  reg.register_segment("l", SegmentScope::local(2), {});
  reg.enter_protected(1);
  EXPECT_EQ(code_of([&] { reg.snapshot(); }), ErrorCode::ProtectedSectionOpen);
  EXPECT_EQ(code_of([&] { reg.snapshot(ScopeFilter::global_only()); }), ErrorCode::ProtectedSectionOpen);
  EXPECT_EQ(reg.snapshot(ScopeFilter::local(2)).size(), 1u);
  reg.exit_protected(1);
  EXPECT_EQ(reg.snapshot().size(), 2u);
}

TEST(ProtectedSections, NestingAndUnbalancedExit) {
  StateRegistry reg;
  reg.enter_protected();
  reg.enter_protected();
  reg.exit_protected();
  EXPECT_EQ(reg.protected_depth(), 1u);
  EXPECT_EQ(code_of([&] { reg.snapshot(); }), ErrorCode::ProtectedSectionOpen);
  reg.exit_protected();
  EXPECT_NO_THROW(reg.snapshot());
  EXPECT_EQ(code_of([&] { reg.exit_protected(); }), ErrorCode::UnbalancedExit);
  EXPECT_EQ(code_of([&] { reg.exit_protected(5); }), ErrorCode::UnbalancedExit);
}

TEST(ProtectedSections, DeferModeWaitsForExit) {
  StateRegistry reg(ProtectionMode::Defer);
  auto h = reg.register_segment("g", SegmentScope::global(), {0});
  std::atomic<bool> done{false};
  Snapshot taken;
  reg.enter_protected();
  reg.update_segment(h, {1});
  std::thread t([&] {
    taken = reg.snapshot();
    done = true;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  EXPECT_FALSE(done.load());
  reg.update_segment(h, {2});
  reg.exit_protected();
  t.join();
  EXPECT_TRUE(done.load());
  ASSERT_EQ(taken.size(), 1u);
  EXPECT_EQ(taken[0].payload, Bytes{2});
}

TEST(ProtectedSections, RaiiGuardBalances) {
  StateRegistry reg;
  {
    ProtectedSection guard(reg, 3);
    EXPECT_TRUE(reg.any_protected());
  }
  EXPECT_FALSE(reg.any_protected());
}
