#pragma once

// Adapter residency simulation: a hot-set slot table (fixed slots, updates
// applied between steps) versus on-demand LRU paging, driven by synthetic
// access patterns and priced with an additive latency model.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <list>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tokroute {

class SlotTable {
 public:
  explicit SlotTable(std::size_t slots);

  // Slot s holds adapter s for s < min(slots, num_adapters).
  static SlotTable prefilled(std::size_t slots, std::size_t num_adapters);

  std::size_t slots() const noexcept { return slot_to_adapter_.size(); }

  // O(1) lookup; never mutates the table.
  std::optional<std::size_t> lookup(std::uint32_t adapter) const;
  std::optional<std::uint32_t> occupant(std::size_t slot) const;

  // Queued assignments take effect only at apply_pending().
  void queue_update(std::size_t slot, std::uint32_t adapter);
  std::size_t pending() const noexcept { return pending_.size(); }
  std::size_t apply_pending();

 private:
  std::vector<std::optional<std::uint32_t>> slot_to_adapter_;
  std::unordered_map<std::uint32_t, std::size_t> adapter_to_slot_;
  std::deque<std::pair<std::size_t, std::uint32_t>> pending_;
};

struct PagerOutcome {
  bool hit = false;
  std::optional<std::uint32_t> evicted;
};

class LruPager {
 public:
  explicit LruPager(std::size_t capacity);

  PagerOutcome access(std::uint32_t adapter);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }
  // Most recently used first.
  std::vector<std::uint32_t> resident() const { return {order_.begin(), order_.end()}; }

 private:
  std::size_t capacity_;
  std::list<std::uint32_t> order_;
  std::unordered_map<std::uint32_t, std::list<std::uint32_t>::iterator> where_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

enum class WorkloadKind { uniform, zipfian, bursty, adversarial };

inline constexpr WorkloadKind kAllWorkloads[] = {WorkloadKind::uniform, WorkloadKind::zipfian,
                                                 WorkloadKind::bursty, WorkloadKind::adversarial};

std::string_view to_string(WorkloadKind kind);
WorkloadKind parse_workload_kind(std::string_view name);

struct WorkloadParams {
  double zipf_s = 1.0;        // frequency of rank k proportional to k^-s
  double burst_mean = 32.0;   // mean run length (geometric)
  std::size_t capacity = 0;   // adversarial cycles over capacity + 1 adapters
};

std::vector<std::uint32_t> gen_workload(WorkloadKind kind, std::size_t num_adapters, std::size_t length,
                                        std::uint64_t seed, const WorkloadParams& params = {});

enum class ServingMode { per_seq_paging, per_seq_hotset, per_token_hotset, per_token_graph };

inline constexpr ServingMode kAllServingModes[] = {ServingMode::per_seq_paging, ServingMode::per_seq_hotset,
                                                   ServingMode::per_token_hotset, ServingMode::per_token_graph};

std::string_view to_string(ServingMode mode);

// Time units are arbitrary; the calibration below fits them to milliseconds.
struct CostModel {
  double pass_cost_per_token = 0.0;
  double paging_penalty = 0.0;       // per pager miss
  double launch_overhead = 0.0;      // per logical launch, eager execution
  double graph_step_overhead = 0.0;  // replaces all launch overhead under graph replay
};

struct BatchShape {
  std::size_t tokens_per_step = 2048;
  std::size_t targets_per_step = 4;     // K modalities interleaved in every sequence
  std::size_t requests_per_step = 32;   // adapter accesses consumed per step
};

struct ResidencyConfig {
  std::size_t num_adapters = 16;
  std::size_t pager_capacity = 8;
  std::size_t hot_slots = 8;
};

struct LatencyStats {
  double p50 = 0.0;
  double p99 = 0.0;
  double mean = 0.0;
  double miss_rate = 0.0;          // pager misses / accesses (0 for hot-set modes)
  double not_resident_rate = 0.0;  // hot-set lookups that found no slot
};

struct ServingResult {
  LatencyStats stats;
  std::vector<double> step_latency;
  std::size_t accesses = 0;
  std::size_t misses = 0;
  std::size_t not_resident = 0;
};

// Per step: passes * n * pass_cost + misses * paging_penalty + launch cost,
// where launch cost is launches * launch_overhead, or graph_step_overhead in
// graph mode. Hot-set modes never pay a miss penalty; slots for non-resident
// adapters are queued and applied after the step.
ServingResult simulate_serving(std::span<const std::uint32_t> workload, ServingMode mode, const CostModel& cost,
                               const BatchShape& shape, const ResidencyConfig& residency);

// Nearest-rank percentile, q in (0, 100].
double percentile(std::vector<double> values, double q);

struct LadderTargets {
  double per_seq_paging = 7.48;
  double per_seq_hotset = 5.88;
  double per_token_hotset = 1.43;
  double per_token_graph = 1.36;
};

// Solves the additive model for (pass cost, launch overhead, graph overhead,
// paging penalty) so that mean step latency hits each rung of the ladder,
// given the pager's measured mean misses per step. Throws ConfigError if the
// targets imply a negative constant.
CostModel calibrate_cost_model(const LadderTargets& targets, const BatchShape& shape, double misses_per_step);

}  // namespace tokroute
