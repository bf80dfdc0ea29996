#pragma once

// Base + LoRA forward under a routing decision, the per-sequence K-pass
// baseline, and exact pass / token-pass / launch accounting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tokroute/catalog.h"
#include "tokroute/dispatch.h"
#include "tokroute/routing.h"

namespace tokroute {

struct WorkReport {
  std::size_t forward_passes = 0;
  std::size_t token_passes = 0;  // tokens x passes, in units of c_pass
  std::size_t launches = 0;      // logical kernel invocations

  bool operator==(const WorkReport&) const = default;
};

// Every adapter pass: dispatch (or mask) + grouped shrink + grouped expand.
inline constexpr std::size_t kPassLaunches = 3;
// Per-sequence routing splits mixed sequences before its passes and merges
// the pieces after; single-target sequences skip both.
inline constexpr std::size_t kSplitMergeLaunches = 2;

std::size_t per_sequence_launches(std::size_t passes, bool needs_split);

struct ForwardResult {
  Matrix output;
  WorkReport work;
};

// h_i = base(x_i) + x_i A_{r(i)} B_{r(i)}, where base(x) = x W when
// base_weight is non-null and x otherwise. Computed group-by-group through a
// dispatch plan; groups run in parallel (OpenMP) and write disjoint rows.
ForwardResult lora_forward_per_token(const TokenBatch& batch, const RoutingDecision& decision,
                                     const AdapterCatalog& catalog, const Matrix* base_weight = nullptr,
                                     DispatchMode mode = DispatchMode::deterministic);

// Token-by-token evaluation with no grouping. Ground truth for the above.
Matrix lora_forward_reference(const TokenBatch& batch, const RoutingDecision& decision,
                              const AdapterCatalog& catalog, const Matrix* base_weight = nullptr);

// One full-batch pass per distinct target in the union of the per-sequence
// needed sets; each pass keeps only the rows of tokens routed to that target.
// seq_needed[s] lists the targets sequence s requires.
ForwardResult per_sequence_simulate(const TokenBatch& batch, const RoutingDecision& decision,
                                    std::span<const std::vector<std::uint32_t>> seq_needed,
                                    const AdapterCatalog& catalog, const Matrix* base_weight = nullptr);

// Needed-target sets derived from a decision: the targets each sequence's
// tokens actually use.
std::vector<std::vector<std::uint32_t>> needed_targets(const RoutingDecision& decision,
                                                       std::span<const std::uint32_t> seq_ids);

// Per-token accounting: (1 pass, n token-passes).
WorkReport count_work(const RoutingDecision& decision);

enum class PerSequenceBatching {
  whole_batch,  // every pass streams the whole batch (masking)
  by_target,    // each pass streams only the sequences that need its target
};

WorkReport count_work_per_sequence(const RoutingDecision& decision, std::span<const std::uint32_t> seq_ids,
                                   PerSequenceBatching batching = PerSequenceBatching::whole_batch);

}  // namespace tokroute
