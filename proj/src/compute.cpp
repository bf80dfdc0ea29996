#include "tokroute/compute.h"

#include <algorithm>
#include <set>
#include <string>

namespace tokroute {
namespace {

void check_inputs(const TokenBatch& batch, const RoutingDecision& decision, const AdapterCatalog& catalog,
                  const Matrix* base_weight) {
  if (batch.features.rows() != decision.size()) throw ShapeError("decision length != token count");
  if (batch.features.cols() != catalog.dim()) {
    throw ShapeError("feature dim " + std::to_string(batch.features.cols()) + " != adapter dim " +
                     std::to_string(catalog.dim()));
  }
  if (decision.num_targets > catalog.num_targets()) {
    throw IndexError("decision has more targets than the catalog");
  }
  decision.validate();
  if (base_weight != nullptr &&
      (base_weight->rows() != catalog.dim() || base_weight->cols() != catalog.dim())) {
    throw ShapeError("base weight must be d x d");
  }
}

Matrix base_term(const Matrix& features, const Matrix* base_weight) {
  return base_weight != nullptr ? matmul(features, *base_weight) : features;
}

void add_into(Matrix& dst, const Matrix& delta) {
  auto d = dst.data();
  auto s = delta.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

ForwardResult lora_forward_per_token(const TokenBatch& batch, const RoutingDecision& decision,
                                     const AdapterCatalog& catalog, const Matrix* base_weight,
                                     DispatchMode mode) {
  check_inputs(batch, decision, catalog, base_weight);
  const DispatchPlan plan = build_dispatch(decision, mode);

  Matrix delta(batch.features.rows(), batch.features.cols());
  const auto num_groups = static_cast<std::ptrdiff_t>(plan.num_targets());
  // Each group writes a disjoint row set of delta.
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < num_groups; ++c) {
    const auto& group = plan.groups[static_cast<std::size_t>(c)];
    if (group.empty()) continue;
    const LoraPair& lora = catalog.target(static_cast<std::uint32_t>(c));
    const Matrix x = gather(batch.features, std::span<const std::uint32_t>(group));
    const Matrix shrunk = serial::matmul(x, lora.a);
    const Matrix expanded = serial::matmul(shrunk, lora.b);
    scatter_into(expanded, std::span<const std::uint32_t>(group), delta);
  }

  Matrix out = base_term(batch.features, base_weight);
  add_into(out, delta);
  return {std::move(out), count_work(decision)};
}

Matrix lora_forward_reference(const TokenBatch& batch, const RoutingDecision& decision,
                              const AdapterCatalog& catalog, const Matrix* base_weight) {
  check_inputs(batch, decision, catalog, base_weight);
  const std::size_t d = batch.features.cols();
  Matrix out(batch.features.rows(), d);
  for (std::size_t i = 0; i < batch.features.rows(); ++i) {
    const auto xi_row = batch.features.row(i);
    const Matrix xi(1, d, std::vector<float>(xi_row.begin(), xi_row.end()));
    const LoraPair& lora = catalog.target(decision.targets[i]);
    const Matrix delta = serial::matmul(serial::matmul(xi, lora.a), lora.b);
    const Matrix base = base_weight != nullptr ? serial::matmul(xi, *base_weight) : xi;
    auto orow = out.row(i);
    for (std::size_t j = 0; j < d; ++j) orow[j] = base(0, j) + delta(0, j);
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> needed_targets(const RoutingDecision& decision,
                                                       std::span<const std::uint32_t> seq_ids) {
  if (seq_ids.size() != decision.size()) throw ShapeError("seq_ids length != decision length");
  std::size_t num_seqs = 0;
  for (std::uint32_t s : seq_ids) num_seqs = std::max<std::size_t>(num_seqs, s + 1);
  std::vector<std::set<std::uint32_t>> sets(num_seqs);
  for (std::size_t i = 0; i < seq_ids.size(); ++i) sets[seq_ids[i]].insert(decision.targets[i]);
  std::vector<std::vector<std::uint32_t>> out(num_seqs);
  for (std::size_t s = 0; s < num_seqs; ++s) out[s].assign(sets[s].begin(), sets[s].end());
  return out;
}

ForwardResult per_sequence_simulate(const TokenBatch& batch, const RoutingDecision& decision,
                                    std::span<const std::vector<std::uint32_t>> seq_needed,
                                    const AdapterCatalog& catalog, const Matrix* base_weight) {
  check_inputs(batch, decision, catalog, base_weight);
  if (batch.seq_ids.size() != decision.size()) throw ShapeError("seq_ids length != decision length");

  std::set<std::uint32_t> pass_targets;
  for (const auto& needed : seq_needed) pass_targets.insert(needed.begin(), needed.end());
  for (std::size_t i = 0; i < decision.size(); ++i) {
    const std::uint32_t s = batch.seq_ids[i];
    const bool declared = s < seq_needed.size() &&
                          std::find(seq_needed[s].begin(), seq_needed[s].end(), decision.targets[i]) !=
                              seq_needed[s].end();
    if (!declared) {
      throw ContractError("token " + std::to_string(i) + " routes to target " +
                          std::to_string(decision.targets[i]) + " not declared for sequence " +
                          std::to_string(s));
    }
  }

  const std::size_t n = batch.features.rows();
  Matrix delta(n, batch.features.cols());
  for (std::uint32_t t : pass_targets) {
    const LoraPair& lora = catalog.target(t);
    const Matrix full = matmul(matmul(batch.features, lora.a), lora.b);
    for (std::size_t i = 0; i < n; ++i) {
      if (decision.targets[i] != t) continue;
      auto src = full.row(i);
      std::copy(src.begin(), src.end(), delta.row(i).begin());
    }
  }

  Matrix out = base_term(batch.features, base_weight);
  add_into(out, delta);
  WorkReport work;
  work.forward_passes = pass_targets.size();
  work.token_passes = pass_targets.size() * n;
  const bool split = std::any_of(seq_needed.begin(), seq_needed.end(), [](const auto& s) { return s.size() > 1; });
  work.launches = per_sequence_launches(pass_targets.size(), split);
  return {std::move(out), work};
}

WorkReport count_work(const RoutingDecision& decision) {
  return {1, decision.size(), kPassLaunches};
}

std::size_t per_sequence_launches(std::size_t passes, bool needs_split) {
  return passes * kPassLaunches + (needs_split ? kSplitMergeLaunches : 0);
}

WorkReport count_work_per_sequence(const RoutingDecision& decision, std::span<const std::uint32_t> seq_ids,
                                   PerSequenceBatching batching) {
  const auto needed = needed_targets(decision, seq_ids);
  std::set<std::uint32_t> all;
  for (const auto& s : needed) all.insert(s.begin(), s.end());

  WorkReport work;
  work.forward_passes = all.size();
  const bool split = std::any_of(needed.begin(), needed.end(), [](const auto& s) { return s.size() > 1; });
  work.launches = per_sequence_launches(all.size(), split);
  if (batching == PerSequenceBatching::whole_batch) {
    work.token_passes = all.size() * decision.size();
  } else {
    std::vector<std::size_t> seq_len(needed.size(), 0);
    for (std::uint32_t s : seq_ids) ++seq_len[s];
    for (std::size_t s = 0; s < needed.size(); ++s) work.token_passes += needed[s].size() * seq_len[s];
  }
  return work;
}

}  // namespace tokroute
