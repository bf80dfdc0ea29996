#include "tokroute/dispatch.h"

#include <atomic>

namespace tokroute {
namespace {

std::atomic<std::size_t> g_build_calls{0};
std::atomic<std::size_t> g_gather_calls{0};
std::atomic<std::size_t> g_scatter_calls{0};

}  // namespace

namespace detail {

void count_gather() { g_gather_calls.fetch_add(1, std::memory_order_relaxed); }
void count_scatter() { g_scatter_calls.fetch_add(1, std::memory_order_relaxed); }

void throw_row_index(std::size_t index, std::size_t rows) {
  throw IndexError("row index " + std::to_string(index) + " >= " + std::to_string(rows));
}

}  // namespace detail

DispatchCounters dispatch_counters() {
  return {g_build_calls.load(), g_gather_calls.load(), g_scatter_calls.load()};
}

void reset_dispatch_counters() {
  g_build_calls = 0;
  g_gather_calls = 0;
  g_scatter_calls = 0;
}

TileConfig select_tiles(std::size_t count) {
  TileConfig t{};
  t.block_m = count < 64 ? 16 : (count < 256 ? 32 : 64);
  t.block_n = count < 128 ? 32 : 64;
  return t;
}

std::size_t DispatchPlan::nonempty_groups() const noexcept {
  std::size_t n = 0;
  for (std::size_t h : histogram) n += h > 0 ? 1 : 0;
  return n;
}

DispatchPlan build_dispatch(const RoutingDecision& decision, DispatchMode mode) {
  g_build_calls.fetch_add(1, std::memory_order_relaxed);
  decision.validate();
  const std::size_t n = decision.size();
  const std::size_t c = decision.num_targets;

  DispatchPlan plan;
  plan.histogram.assign(c, 0);
  plan.groups.resize(c);

  if (mode == DispatchMode::deterministic) {
    for (std::uint32_t t : decision.targets) ++plan.histogram[t];
    for (std::size_t k = 0; k < c; ++k) plan.groups[k].reserve(plan.histogram[k]);
    for (std::size_t i = 0; i < n; ++i) plan.groups[decision.targets[i]].push_back(static_cast<std::uint32_t>(i));
  } else {
    const auto count = static_cast<std::ptrdiff_t>(n);
    std::size_t* hist = plan.histogram.data();
    const std::uint32_t* targets = decision.targets.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
#pragma omp atomic update
      ++hist[targets[i]];
    }
    for (std::size_t k = 0; k < c; ++k) plan.groups[k].resize(plan.histogram[k]);
    // pos <- atomicAdd(cursor[c], 1)
    std::vector<std::size_t> cursor(c, 0);
    std::size_t* cur = cursor.data();
    auto& groups = plan.groups;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const std::uint32_t t = targets[i];
      std::size_t pos;
#pragma omp atomic capture
      pos = cur[t]++;
      groups[t][pos] = static_cast<std::uint32_t>(i);
    }
  }

  plan.tiles.reserve(c);
  for (std::size_t h : plan.histogram) plan.tiles.push_back(select_tiles(h));
  return plan;
}

}  // namespace tokroute
