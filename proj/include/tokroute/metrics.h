#pragma once

// Agreement between learned routing and ground-truth labels.

#include <cstdint>
#include <span>
#include <vector>

#include "tokroute/linalg.h"

namespace tokroute {

// Pair-counting adjusted Rand index. Returns 1.0 when the chance-corrected
// denominator vanishes (both partitions trivial).
double ari(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments);

// Mutual information normalized by the arithmetic mean of the two entropies.
// Two single-cluster partitions score 1.0.
double nmi(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments);

// Mean over rows of the Shannon entropy (nats) of each routing distribution.
double routing_entropy(const MatrixD& probs);

// rows = true class, cols = assignment; each non-empty row sums to 1.
MatrixD confusion(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments,
                  std::size_t num_classes, std::size_t num_clusters);

}  // namespace tokroute
