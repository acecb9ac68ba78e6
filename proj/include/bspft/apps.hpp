#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "bspft/bytes.hpp"
#include "bspft/error.hpp"
#include "bspft/rng.hpp"

namespace bspft {

enum class AppKind { ParticleSwarm, DifferentialEvolution, JacobiSolver };

inline std::string_view to_string(AppKind k) {
  switch (k) {
    case AppKind::ParticleSwarm: return "particle_swarm";
    case AppKind::DifferentialEvolution: return "differential_evolution";
    case AppKind::JacobiSolver: return "jacobi";
  }
  return "unknown";
}

inline AppKind parse_app_kind(std::string_view s) {
  if (s == "particle_swarm" || s == "pso") return AppKind::ParticleSwarm;
  if (s == "differential_evolution" || s == "de") return AppKind::DifferentialEvolution;
  if (s == "jacobi") return AppKind::JacobiSolver;
  throw Error(ErrorCode::ConfigError, "unknown app '" + std::string(s) + "'");
}

struct AppSpec {
  AppKind kind = AppKind::JacobiSolver;
  std::uint32_t dimension = 16;   // search-space dimension, or grid columns for Jacobi
  std::uint32_t population = 50;  // particles / individuals, or grid rows for Jacobi
  std::uint64_t seed = 1;

  friend bool operator==(const AppSpec&, const AppSpec&) = default;
};

struct WorkerSlot {
  std::uint32_t worker = 0;
  std::uint32_t workers = 1;
};

struct StepOutput {
  Bytes local;
  Bytes contribution;
};

// Contiguous block of [0, n) owned by a worker; blocks tile [0, n) in worker order.
inline std::pair<std::size_t, std::size_t> block_range(std::size_t n, WorkerSlot s) {
  return {n * s.worker / s.workers, n * (s.worker + 1) / s.workers};
}

// A BSP kernel: workers run superstep() on their slice against the current
// global state, then the coordinator folds contributions in worker-id order
// with reduce(). Both must be bit-deterministic.
template <typename K>
concept BspKernel = requires(const K k, ByteView view, WorkerSlot slot, std::uint64_t step,
                             std::span<const Bytes> contributions) {
  { k.initial_global() } -> std::same_as<Bytes>;
  { k.initial_local(slot) } -> std::same_as<Bytes>;
  { k.rebuild_local(view, slot) } -> std::same_as<Bytes>;
  { k.superstep(view, view, step, slot) } -> std::same_as<StepOutput>;
  { k.reduce(view, contributions, step) } -> std::same_as<Bytes>;
};

inline double rastrigin(std::span<const double> x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (double v : x) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
  return s;
}

inline constexpr double kSearchBound = 5.12;

// Synchronous particle swarm on Rastrigin. Particles live in worker-local
// state; the global state is the swarm best [value, position...].
class ParticleSwarm {
 public:
  static constexpr double kInertia = 0.7298;
  static constexpr double kCognitive = 1.49618;
  static constexpr double kSocial = 1.49618;
  static constexpr double kMaxVelocity = 1.0;

  explicit ParticleSwarm(const AppSpec& spec) : dim_(spec.dimension), pop_(spec.population), seed_(spec.seed) {}

  Bytes initial_global() const {
    std::vector<double> best(dim_ + 1, 0.0);
    best[0] = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pop_; ++i) {
      auto p = initial_particle(i);
      if (p[3 * dim_] < best[0]) {
        best[0] = p[3 * dim_];
        std::copy_n(p.begin(), dim_, best.begin() + 1);
      }
    }
    return pack(best);
  }

  Bytes initial_local(WorkerSlot slot) const {
    auto [lo, hi] = block_range(pop_, slot);
    std::vector<double> out;
    for (std::size_t i = lo; i < hi; ++i) {
      auto p = initial_particle(i);
      out.insert(out.end(), p.begin(), p.end());
    }
    return pack(out);
  }

  // Particle state is not derivable from the swarm best; reseed the slice.
  Bytes rebuild_local(ByteView, WorkerSlot slot) const { return initial_local(slot); }

  StepOutput superstep(ByteView global, ByteView local, std::uint64_t step, WorkerSlot slot) const {
    auto g = read_f64s(global);
    auto particles = read_f64s(local);
    auto [lo, hi] = block_range(pop_, slot);
    const std::size_t stride = 3 * dim_ + 1;
    if (particles.size() != (hi - lo) * stride) throw Error(ErrorCode::MetaMismatch, "particle state size mismatch");

    std::vector<double> best(dim_ + 1, 0.0);
    best[0] = std::numeric_limits<double>::infinity();
    for (std::size_t i = lo; i < hi; ++i) {
      double* x = &particles[(i - lo) * stride];
      double* v = x + dim_;
      double* pbest = v + dim_;
      double& pbest_val = pbest[dim_];
      auto rng = SplitMix64::stream(seed_, i, step);
      for (std::size_t d = 0; d < dim_; ++d) {
        const double r1 = rng.uniform(), r2 = rng.uniform();
        double vel = kInertia * v[d] + kCognitive * r1 * (pbest[d] - x[d]) + kSocial * r2 * (g[1 + d] - x[d]);
        v[d] = std::clamp(vel, -kMaxVelocity, kMaxVelocity);
        x[d] = std::clamp(x[d] + v[d], -kSearchBound, kSearchBound);
      }
      const double f = rastrigin({x, dim_});
      if (f < pbest_val) {
        pbest_val = f;
        std::copy_n(x, dim_, pbest);
      }
      if (pbest_val < best[0]) {
        best[0] = pbest_val;
        std::copy_n(pbest, dim_, best.begin() + 1);
      }
    }
    return {pack(particles), pack(best)};
  }

  Bytes reduce(ByteView global, std::span<const Bytes> contributions, std::uint64_t) const {
    auto g = read_f64s(global);
    for (const auto& c : contributions) {
      auto b = read_f64s(c);
      if (b[0] < g[0]) g = std::move(b);
    }
    return pack(g);
  }

 private:
  // [x..., v..., pbest..., pbest_value]
  std::vector<double> initial_particle(std::size_t i) const {
    std::vector<double> p(3 * dim_ + 1);
    auto rng = SplitMix64::stream(seed_, i, 0);
    for (std::size_t d = 0; d < dim_; ++d) p[d] = rng.uniform(-kSearchBound, kSearchBound);
    for (std::size_t d = 0; d < dim_; ++d) p[dim_ + d] = rng.uniform(-kMaxVelocity, kMaxVelocity);
    std::copy_n(p.begin(), dim_, p.begin() + 2 * dim_);
    p[3 * dim_] = rastrigin({p.data(), dim_});
    return p;
  }

  static Bytes pack(std::span<const double> v) {
    Bytes b;
    append_f64s(b, v);
    return b;
  }

  std::size_t dim_, pop_;
  std::uint64_t seed_;
};

// DE/rand/1/bin on Rastrigin with the whole population in global state.
// Worker-local state is a pair of counters [accepted trials, supersteps run].
class DifferentialEvolution {
 public:
  static constexpr double kScale = 0.5;
  static constexpr double kCrossover = 0.9;

  explicit DifferentialEvolution(const AppSpec& spec) : dim_(spec.dimension), pop_(spec.population), seed_(spec.seed) {
    if (pop_ < 4) throw Error(ErrorCode::ConfigError, "differential evolution needs a population of at least 4");
  }

  Bytes initial_global() const {
    std::vector<double> g(pop_ * (dim_ + 1));
    for (std::size_t i = 0; i < pop_; ++i) {
      double* m = &g[i * (dim_ + 1)];
      auto rng = SplitMix64::stream(seed_, i, 0);
      for (std::size_t d = 0; d < dim_; ++d) m[d] = rng.uniform(-kSearchBound, kSearchBound);
      m[dim_] = rastrigin({m, dim_});
    }
    Bytes b;
    append_f64s(b, g);
    return b;
  }

  Bytes initial_local(WorkerSlot) const { return counters(0, 0); }
  Bytes rebuild_local(ByteView, WorkerSlot) const { return counters(0, 0); }

  StepOutput superstep(ByteView global, ByteView local, std::uint64_t step, WorkerSlot slot) const {
    auto g = read_f64s(global);
    ByteReader lr(local);
    std::uint64_t accepted = lr.u64().value_or(0), steps = lr.u64().value_or(0);
    auto [lo, hi] = block_range(pop_, slot);
    const std::size_t stride = dim_ + 1;
    std::vector<double> out((hi - lo) * stride);
    std::vector<double> trial(dim_);
    for (std::size_t i = lo; i < hi; ++i) {
      auto rng = SplitMix64::stream(seed_, i, step);
      std::size_t a, b, c;
      do a = rng.below(pop_); while (a == i);
      do b = rng.below(pop_); while (b == i || b == a);
      do c = rng.below(pop_); while (c == i || c == a || c == b);
      const std::size_t jrand = rng.below(dim_);
      const double* xi = &g[i * stride];
      const double* xa = &g[a * stride];
      const double* xb = &g[b * stride];
      const double* xc = &g[c * stride];
      for (std::size_t d = 0; d < dim_; ++d) {
        const double u = rng.uniform();
        trial[d] = (u < kCrossover || d == jrand) ? std::clamp(xa[d] + kScale * (xb[d] - xc[d]), -kSearchBound, kSearchBound)
                                                  : xi[d];
      }
      const double f = rastrigin(trial);
      double* dst = &out[(i - lo) * stride];
      if (f <= xi[dim_]) {
        std::copy(trial.begin(), trial.end(), dst);
        dst[dim_] = f;
        ++accepted;
      } else {
        std::copy_n(xi, stride, dst);
      }
    }
    Bytes contribution;
    append_f64s(contribution, out);
    return {counters(accepted, steps + 1), std::move(contribution)};
  }

  Bytes reduce(ByteView global, std::span<const Bytes> contributions, std::uint64_t) const {
    Bytes g(global.begin(), global.end());
    const auto workers = static_cast<std::uint32_t>(contributions.size());
    for (std::uint32_t w = 0; w < workers; ++w) {
      auto [lo, hi] = block_range(pop_, {w, workers});
      const std::size_t bytes = (hi - lo) * (dim_ + 1) * 8;
      if (contributions[w].size() != bytes) throw Error(ErrorCode::MetaMismatch, "population slice size mismatch");
      std::copy(contributions[w].begin(), contributions[w].end(), g.begin() + static_cast<std::ptrdiff_t>(lo * (dim_ + 1) * 8));
    }
    return g;
  }

 private:
  static Bytes counters(std::uint64_t accepted, std::uint64_t steps) {
    Bytes b;
    ByteWriter w(b);
    w.u64(accepted);
    w.u64(steps);
    return b;
  }

  std::size_t dim_, pop_;
  std::uint64_t seed_;
};

// Jacobi sweeps for the 5-point Poisson problem on a rows x cols grid with
// zero Dirichlet boundary and a seeded source term. Workers own row blocks;
// local state is [last squared update norm, cumulative squared update norm].
class JacobiSolver {
 public:
  explicit JacobiSolver(const AppSpec& spec) : cols_(spec.dimension), rows_(spec.population), source_(rows_ * cols_) {
    for (std::size_t r = 0; r < rows_; ++r) {
      auto rng = SplitMix64::stream(spec.seed, r, 0);
      for (std::size_t c = 0; c < cols_; ++c) source_[r * cols_ + c] = rng.uniform(-1.0, 1.0);
    }
  }

  Bytes initial_global() const { return Bytes(rows_ * cols_ * 8, 0); }
  Bytes initial_local(WorkerSlot) const { return norms(0.0, 0.0); }
  Bytes rebuild_local(ByteView, WorkerSlot) const { return norms(0.0, 0.0); }

  StepOutput superstep(ByteView global, ByteView local, std::uint64_t, WorkerSlot slot) const {
    auto u = read_f64s(global);
    ByteReader lr(local);
    lr.f64();
    double cumulative = lr.f64().value_or(0.0);
    auto [lo, hi] = block_range(rows_, slot);
    std::vector<double> out((hi - lo) * cols_);
    double sq = 0.0;
    auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
      if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(rows_) || c >= static_cast<std::ptrdiff_t>(cols_)) return 0.0;
      return u[static_cast<std::size_t>(r) * cols_ + static_cast<std::size_t>(c)];
    };
    for (std::size_t r = lo; r < hi; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        const auto ri = static_cast<std::ptrdiff_t>(r), ci = static_cast<std::ptrdiff_t>(c);
        const double next = 0.25 * (at(ri - 1, ci) + at(ri + 1, ci) + at(ri, ci - 1) + at(ri, ci + 1) + source_[r * cols_ + c]);
        const double delta = next - u[r * cols_ + c];
        sq += delta * delta;
        out[(r - lo) * cols_ + c] = next;
      }
    }
    Bytes contribution;
    append_f64s(contribution, out);
    return {norms(sq, cumulative + sq), std::move(contribution)};
  }

  Bytes reduce(ByteView, std::span<const Bytes> contributions, std::uint64_t) const {
    Bytes g;
    g.reserve(rows_ * cols_ * 8);
    for (const auto& c : contributions) g.insert(g.end(), c.begin(), c.end());
    if (g.size() != rows_ * cols_ * 8) throw Error(ErrorCode::MetaMismatch, "grid size mismatch after reduce");
    return g;
  }

 private:
  static Bytes norms(double last, double cumulative) {
    Bytes b;
    ByteWriter w(b);
    w.f64(last);
    w.f64(cumulative);
    return b;
  }

  std::size_t cols_, rows_;
  std::vector<double> source_;
};

static_assert(BspKernel<ParticleSwarm>);
static_assert(BspKernel<DifferentialEvolution>);
static_assert(BspKernel<JacobiSolver>);

// Type-erased front for the three kernels.
class BspApp {
 public:
  explicit BspApp(const AppSpec& spec) : spec_(spec), kernel_(make(spec)) {}

  const AppSpec& spec() const noexcept { return spec_; }
  std::string_view name() const { return to_string(spec_.kind); }

  Bytes initial_global() const {
    return std::visit([](const auto& k) { return k.initial_global(); }, kernel_);
  }
  Bytes initial_local(WorkerSlot slot) const {
    return std::visit([&](const auto& k) { return k.initial_local(slot); }, kernel_);
  }
  Bytes rebuild_local(ByteView global, WorkerSlot slot) const {
    return std::visit([&](const auto& k) { return k.rebuild_local(global, slot); }, kernel_);
  }
  StepOutput superstep(ByteView global, ByteView local, std::uint64_t step, WorkerSlot slot) const {
    return std::visit([&](const auto& k) { return k.superstep(global, local, step, slot); }, kernel_);
  }
  Bytes reduce(ByteView global, std::span<const Bytes> contributions, std::uint64_t step) const {
    return std::visit([&](const auto& k) { return k.reduce(global, contributions, step); }, kernel_);
  }

 private:
  using Kernel = std::variant<ParticleSwarm, DifferentialEvolution, JacobiSolver>;

  static Kernel make(const AppSpec& spec) {
    if (spec.dimension == 0 || spec.population == 0)
      throw Error(ErrorCode::ConfigError, "dimension and population must be positive");
    switch (spec.kind) {
      case AppKind::ParticleSwarm: return ParticleSwarm(spec);
      case AppKind::DifferentialEvolution: return DifferentialEvolution(spec);
      case AppKind::JacobiSolver: return JacobiSolver(spec);
    }
    throw Error(ErrorCode::ConfigError, "unknown app kind");
  }

  AppSpec spec_;
  Kernel kernel_;
};

}  // namespace bspft
