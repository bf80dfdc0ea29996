#pragma once

// Per-token routing decisions: per-sequence baseline, vocabulary routing,
// and compositional (adapter x modality) routing. Learned routing produces
// the same RoutingDecision type from molora.h.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "tokroute/linalg.h"

namespace tokroute {

struct TokenBatch {
  std::vector<std::uint32_t> vocab_ids;    // v_i
  std::vector<std::uint32_t> seq_ids;      // s_i
  std::vector<std::uint32_t> adapter_ids;  // a_i, from request metadata
  Matrix features;                         // n x d, row i is x_i

  std::size_t size() const noexcept { return vocab_ids.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  // Throws ShapeError on length mismatch and IndexError on out-of-range ids.
  void validate(std::size_t vocab_size, std::size_t num_sequences, std::size_t num_adapters) const;
};

// Strictly increasing b_0 = 0 < b_1 < ... < b_M = V. Modality m (0-based)
// owns the half-open range [b_m, b_{m+1}).
class VocabBreaks {
 public:
  explicit VocabBreaks(std::vector<std::uint32_t> breaks);

  std::size_t num_modalities() const noexcept { return breaks_.size() - 1; }
  std::uint32_t vocab_size() const noexcept { return breaks_.back(); }
  std::span<const std::uint32_t> breaks() const noexcept { return breaks_; }

 private:
  std::vector<std::uint32_t> breaks_;
};

enum class Provenance { per_sequence, vocab, compositional, learned };

std::string_view to_string(Provenance p);

struct RoutingDecision {
  std::vector<std::uint32_t> targets;
  std::size_t num_targets = 0;
  Provenance provenance = Provenance::vocab;

  std::size_t size() const noexcept { return targets.size(); }
  // Throws IndexError if any target >= num_targets.
  void validate() const;
};

// Ordered linear scan over the interior breaks: at most M-1 comparisons.
// When `comparisons` is non-null the number of break comparisons made is
// added to it. Throws IndexError for v >= V.
std::uint32_t route_vocab(std::uint32_t vocab_id, const VocabBreaks& breaks,
                          std::size_t* comparisons = nullptr);

// OpenMP-parallel over tokens.
RoutingDecision route_batch_vocab(const TokenBatch& batch, const VocabBreaks& breaks);
RoutingDecision route_batch_compositional(const TokenBatch& batch, const VocabBreaks& breaks,
                                          std::size_t num_adapters);

// seq_to_target must cover every sequence id present; ConfigError otherwise.
RoutingDecision route_batch_per_sequence(const TokenBatch& batch,
                                         const std::map<std::uint32_t, std::uint32_t>& seq_to_target,
                                         std::size_t num_targets);

namespace serial {
RoutingDecision route_batch_vocab(const TokenBatch& batch, const VocabBreaks& breaks);
RoutingDecision route_batch_compositional(const TokenBatch& batch, const VocabBreaks& breaks,
                                          std::size_t num_adapters);
}  // namespace serial

// n x n same-target indicator: mask(i, j) = targets[i] == targets[j].
class TargetMask {
 public:
  explicit TargetMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }

 private:
  std::size_t n_;
  std::vector<std::uint8_t> bits_;
};

TargetMask modality_mask(const RoutingDecision& decision);

// Token indices stably sorted by target; under this permutation the
// modality mask is block diagonal.
std::vector<std::uint32_t> stable_target_order(const RoutingDecision& decision);

}  // namespace tokroute
