#include "tokroute/memory.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>

#include "tokroute/compute.h"
#include "tokroute/errors.h"

namespace tokroute {

SlotTable::SlotTable(std::size_t slots) : slot_to_adapter_(slots) {
  if (slots == 0) throw ConfigError("slot table needs at least one slot");
}

SlotTable SlotTable::prefilled(std::size_t slots, std::size_t num_adapters) {
  SlotTable t(slots);
  for (std::size_t s = 0; s < std::min(slots, num_adapters); ++s) {
    t.slot_to_adapter_[s] = static_cast<std::uint32_t>(s);
    t.adapter_to_slot_[static_cast<std::uint32_t>(s)] = s;
  }
  return t;
}

std::optional<std::size_t> SlotTable::lookup(std::uint32_t adapter) const {
  auto it = adapter_to_slot_.find(adapter);
  if (it == adapter_to_slot_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> SlotTable::occupant(std::size_t slot) const {
  if (slot >= slot_to_adapter_.size()) throw IndexError("slot " + std::to_string(slot) + " out of range");
  return slot_to_adapter_[slot];
}

void SlotTable::queue_update(std::size_t slot, std::uint32_t adapter) {
  if (slot >= slot_to_adapter_.size()) throw IndexError("slot " + std::to_string(slot) + " out of range");
  pending_.emplace_back(slot, adapter);
}

std::size_t SlotTable::apply_pending() {
  const std::size_t applied = pending_.size();
  for (const auto& [slot, adapter] : pending_) {
    // Keep sigma injective: an adapter lives in at most one slot.
    if (auto prev = adapter_to_slot_.find(adapter); prev != adapter_to_slot_.end()) {
      slot_to_adapter_[prev->second].reset();
      adapter_to_slot_.erase(prev);
    }
    if (auto& old = slot_to_adapter_[slot]; old.has_value()) adapter_to_slot_.erase(*old);
    slot_to_adapter_[slot] = adapter;
    adapter_to_slot_[adapter] = slot;
  }
  pending_.clear();
  return applied;
}

LruPager::LruPager(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("pager capacity must be positive");
}

PagerOutcome LruPager::access(std::uint32_t adapter) {
  PagerOutcome out;
  if (auto it = where_.find(adapter); it != where_.end()) {
    order_.splice(order_.begin(), order_, it->second);
    ++hits_;
    out.hit = true;
    return out;
  }
  ++misses_;
  if (order_.size() == capacity_) {
    const std::uint32_t victim = order_.back();
    order_.pop_back();
    where_.erase(victim);
    out.evicted = victim;
  }
  order_.push_front(adapter);
  where_[adapter] = order_.begin();
  return out;
}

std::string_view to_string(WorkloadKind kind) {
  switch (kind) {
    case WorkloadKind::uniform: return "uniform";
    case WorkloadKind::zipfian: return "zipfian";
    case WorkloadKind::bursty: return "bursty";
    case WorkloadKind::adversarial: return "adversarial";
  }
  return "unknown";
}

WorkloadKind parse_workload_kind(std::string_view name) {
  for (WorkloadKind k : kAllWorkloads) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown workload kind \"" + std::string(name) + "\"");
}

std::string_view to_string(ServingMode mode) {
  switch (mode) {
    case ServingMode::per_seq_paging: return "per-seq+paging";
    case ServingMode::per_seq_hotset: return "per-seq+hotset";
    case ServingMode::per_token_hotset: return "per-token+hotset";
    case ServingMode::per_token_graph: return "per-token+graph";
  }
  return "unknown";
}

std::vector<std::uint32_t> gen_workload(WorkloadKind kind, std::size_t num_adapters, std::size_t length,
                                        std::uint64_t seed, const WorkloadParams& params) {
  if (length == 0) throw ConfigError("workload length must be positive");
  if (num_adapters == 0) throw ConfigError("workload needs at least one adapter");
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> out;
  out.reserve(length);
  const auto last = static_cast<std::uint32_t>(num_adapters - 1);

  switch (kind) {
    case WorkloadKind::uniform: {
      std::uniform_int_distribution<std::uint32_t> pick(0, last);
      for (std::size_t i = 0; i < length; ++i) out.push_back(pick(rng));
      break;
    }
    case WorkloadKind::zipfian: {
      if (!(params.zipf_s > 0.0) || !std::isfinite(params.zipf_s)) throw ConfigError("zipf_s must be positive");
      std::vector<double> weights(num_adapters);
      for (std::size_t k = 0; k < num_adapters; ++k) weights[k] = std::pow(static_cast<double>(k + 1), -params.zipf_s);
      std::discrete_distribution<std::uint32_t> pick(weights.begin(), weights.end());
      for (std::size_t i = 0; i < length; ++i) out.push_back(pick(rng));
      break;
    }
    case WorkloadKind::bursty: {
      if (!(params.burst_mean >= 1.0)) throw ConfigError("burst_mean must be >= 1");
      std::uniform_int_distribution<std::uint32_t> pick(0, last);
      // 1 + Geometric(p) has mean 1/p.
      std::geometric_distribution<std::size_t> extra(1.0 / params.burst_mean);
      while (out.size() < length) {
        const std::uint32_t adapter = pick(rng);
        const std::size_t run = 1 + extra(rng);
        for (std::size_t j = 0; j < run && out.size() < length; ++j) out.push_back(adapter);
      }
      break;
    }
    case WorkloadKind::adversarial: {
      const std::size_t period = params.capacity + 1;
      if (params.capacity == 0 || period > num_adapters) {
        throw ConfigError("adversarial workload needs 0 < capacity < num_adapters");
      }
      for (std::size_t i = 0; i < length; ++i) out.push_back(static_cast<std::uint32_t>(i % period));
      break;
    }
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

ServingResult simulate_serving(std::span<const std::uint32_t> workload, ServingMode mode, const CostModel& cost,
                               const BatchShape& shape, const ResidencyConfig& residency) {
  if (shape.requests_per_step == 0 || shape.tokens_per_step == 0 || shape.targets_per_step == 0) {
    throw ConfigError("batch shape counts must be positive");
  }
  const bool per_token = mode == ServingMode::per_token_hotset || mode == ServingMode::per_token_graph;
  const bool paging = mode == ServingMode::per_seq_paging;
  const bool graph = mode == ServingMode::per_token_graph;

  const std::size_t passes = per_token ? 1 : shape.targets_per_step;
  const std::size_t launches =
      per_token ? kPassLaunches : per_sequence_launches(passes, shape.targets_per_step > 1);
  const double compute = static_cast<double>(passes * shape.tokens_per_step) * cost.pass_cost_per_token;
  const double launch_cost = graph ? cost.graph_step_overhead : static_cast<double>(launches) * cost.launch_overhead;

  LruPager pager(residency.pager_capacity);
  SlotTable table = SlotTable::prefilled(residency.hot_slots, residency.num_adapters);
  std::size_t clock_hand = 0;

  ServingResult result;
  for (std::size_t begin = 0; begin < workload.size(); begin += shape.requests_per_step) {
    const std::size_t end = std::min(begin + shape.requests_per_step, workload.size());
    std::size_t step_misses = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t adapter = workload[i];
      ++result.accesses;
      if (paging) {
        if (!pager.access(adapter).hit) ++step_misses;
      } else if (!table.lookup(adapter).has_value()) {
        ++result.not_resident;
        table.queue_update(clock_hand, adapter);
        clock_hand = (clock_hand + 1) % table.slots();
      }
    }
    result.misses += step_misses;
    result.step_latency.push_back(compute + static_cast<double>(step_misses) * cost.paging_penalty + launch_cost);
    table.apply_pending();  // off the critical path, between steps
  }

  auto& s = result.stats;
  s.p50 = percentile(result.step_latency, 50.0);
  s.p99 = percentile(result.step_latency, 99.0);
  s.mean = result.step_latency.empty()
               ? 0.0
               : std::accumulate(result.step_latency.begin(), result.step_latency.end(), 0.0) /
                     static_cast<double>(result.step_latency.size());
  if (result.accesses > 0) {
    s.miss_rate = static_cast<double>(result.misses) / static_cast<double>(result.accesses);
    s.not_resident_rate = static_cast<double>(result.not_resident) / static_cast<double>(result.accesses);
  }
  return result;
}

CostModel calibrate_cost_model(const LadderTargets& targets, const BatchShape& shape, double misses_per_step) {
  const double k = static_cast<double>(shape.targets_per_step);
  const double n = static_cast<double>(shape.tokens_per_step);
  // per-token+hotset:  n*p + 3L            = T3
  // per-seq+hotset:    K*(n*p + 3L) + 2L   = T2
  // per-token+graph:   n*p + G             = T4
  // per-seq+paging:    T2 + misses*penalty = T1
  if (shape.targets_per_step < 2) throw ConfigError("calibration needs at least two targets per step");
  const double launch = (targets.per_seq_hotset - k * targets.per_token_hotset) /
                        static_cast<double>(kSplitMergeLaunches);
  CostModel m;
  m.launch_overhead = launch;
  m.pass_cost_per_token = (targets.per_token_hotset - static_cast<double>(kPassLaunches) * launch) / n;
  m.graph_step_overhead = targets.per_token_graph - m.pass_cost_per_token * n;
  if (!(misses_per_step > 0.0)) throw ConfigError("calibration needs a positive miss count per step");
  m.paging_penalty = (targets.per_seq_paging - targets.per_seq_hotset) / misses_per_step;
  if (m.launch_overhead < 0 || m.pass_cost_per_token < 0 || m.graph_step_overhead < 0 || m.paging_penalty < 0) {
    throw ConfigError("ladder targets imply a negative cost constant");
  }
  return m;
}

}  // namespace tokroute
