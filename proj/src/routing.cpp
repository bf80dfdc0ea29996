#include "tokroute/routing.h"

#include <algorithm>
#include <exception>
#include <numeric>
#include <string>

#include "tokroute/catalog.h"

namespace tokroute {

void TokenBatch::validate(std::size_t vocab_size, std::size_t num_sequences,
                          std::size_t num_adapters) const {
  const std::size_t n = vocab_ids.size();
  if (seq_ids.size() != n || adapter_ids.size() != n || features.rows() != n) {
    throw ShapeError("token batch vectors disagree on token count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (vocab_ids[i] >= vocab_size) throw IndexError("vocab id out of range at token " + std::to_string(i));
    if (seq_ids[i] >= num_sequences) throw IndexError("sequence id out of range at token " + std::to_string(i));
    if (adapter_ids[i] >= num_adapters) throw IndexError("adapter id out of range at token " + std::to_string(i));
  }
}

VocabBreaks::VocabBreaks(std::vector<std::uint32_t> breaks) : breaks_(std::move(breaks)) {
  if (breaks_.size() < 2) throw ConfigError("vocab breaks need at least b_0 and b_M");
  if (breaks_.front() != 0) throw ConfigError("vocab breaks must start at 0");
  for (std::size_t i = 1; i < breaks_.size(); ++i) {
    if (breaks_[i] <= breaks_[i - 1]) {
      throw ConfigError("vocab breaks must be strictly increasing (contiguous, non-empty ranges)");
    }
  }
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::per_sequence: return "per-sequence";
    case Provenance::vocab: return "vocab";
    case Provenance::compositional: return "compositional";
    case Provenance::learned: return "learned";
  }
  return "unknown";
}

void RoutingDecision::validate() const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= num_targets) {
      throw IndexError("target " + std::to_string(targets[i]) + " at token " + std::to_string(i) +
                       " >= " + std::to_string(num_targets));
    }
  }
}

std::uint32_t route_vocab(std::uint32_t vocab_id, const VocabBreaks& breaks, std::size_t* comparisons) {
  const auto b = breaks.breaks();
  if (vocab_id >= b.back()) {
    throw IndexError("vocab id " + std::to_string(vocab_id) + " >= V=" + std::to_string(b.back()));
  }
  const std::size_t last = b.size() - 2;  // M - 1
  std::size_t count = 0;
  std::uint32_t m = 0;
  for (; m < last; ++m) {
    ++count;
    if (vocab_id < b[m + 1]) break;
  }
  if (comparisons != nullptr) *comparisons += count;
  return m;
}

namespace {

RoutingDecision make_decision(std::size_t n, std::size_t num_targets, Provenance p) {
  RoutingDecision d;
  d.targets.resize(n);
  d.num_targets = num_targets;
  d.provenance = p;
  return d;
}

void check_adapter_ids(const TokenBatch& batch, std::size_t num_adapters) {
  if (batch.adapter_ids.size() != batch.size()) throw ShapeError("adapter_ids length != token count");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.adapter_ids[i] >= num_adapters) {
      throw IndexError("adapter id " + std::to_string(batch.adapter_ids[i]) + " >= " +
                       std::to_string(num_adapters));
    }
  }
}

// Errors raised inside an OpenMP region must not escape it; the first one is
// captured and rethrown after the loop.
template <typename Body>
void parallel_tokens(std::size_t n, Body body) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(tokroute_route_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

RoutingDecision route_batch_vocab(const TokenBatch& batch, const VocabBreaks& breaks) {
  auto d = make_decision(batch.size(), breaks.num_modalities(), Provenance::vocab);
  parallel_tokens(batch.size(), [&](std::size_t i) { d.targets[i] = route_vocab(batch.vocab_ids[i], breaks); });
  return d;
}

RoutingDecision route_batch_compositional(const TokenBatch& batch, const VocabBreaks& breaks,
                                          std::size_t num_adapters) {
  check_adapter_ids(batch, num_adapters);
  const std::size_t modalities = breaks.num_modalities();
  auto d = make_decision(batch.size(), num_adapters * modalities, Provenance::compositional);
  parallel_tokens(batch.size(), [&](std::size_t i) {
    d.targets[i] = composite_index(batch.adapter_ids[i], route_vocab(batch.vocab_ids[i], breaks), modalities);
  });
  return d;
}

RoutingDecision route_batch_per_sequence(const TokenBatch& batch,
                                         const std::map<std::uint32_t, std::uint32_t>& seq_to_target,
                                         std::size_t num_targets) {
  if (batch.seq_ids.size() != batch.size()) throw ShapeError("seq_ids length != token count");
  auto d = make_decision(batch.size(), num_targets, Provenance::per_sequence);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto it = seq_to_target.find(batch.seq_ids[i]);
    if (it == seq_to_target.end()) {
      throw ConfigError("sequence " + std::to_string(batch.seq_ids[i]) + " has no adapter mapping");
    }
    d.targets[i] = it->second;
  }
  d.validate();
  return d;
}

namespace serial {

RoutingDecision route_batch_vocab(const TokenBatch& batch, const VocabBreaks& breaks) {
  auto d = make_decision(batch.size(), breaks.num_modalities(), Provenance::vocab);
  for (std::size_t i = 0; i < batch.size(); ++i) d.targets[i] = route_vocab(batch.vocab_ids[i], breaks);
  return d;
}

RoutingDecision route_batch_compositional(const TokenBatch& batch, const VocabBreaks& breaks,
                                          std::size_t num_adapters) {
  check_adapter_ids(batch, num_adapters);
  const std::size_t modalities = breaks.num_modalities();
  auto d = make_decision(batch.size(), num_adapters * modalities, Provenance::compositional);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    d.targets[i] = composite_index(batch.adapter_ids[i], route_vocab(batch.vocab_ids[i], breaks), modalities);
  }
  return d;
}

}  // namespace serial

TargetMask modality_mask(const RoutingDecision& decision) {
  const std::size_t n = decision.size();
  TargetMask mask(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) mask.set(i, j, decision.targets[i] == decision.targets[j]);
  return mask;
}

std::vector<std::uint32_t> stable_target_order(const RoutingDecision& decision) {
  std::vector<std::uint32_t> order(decision.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    return decision.targets[x] < decision.targets[y];
  });
  return order;
}

}  // namespace tokroute
