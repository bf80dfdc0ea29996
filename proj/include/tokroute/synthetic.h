#pragma once

// Seeded generators: token batches for the routing/compute scenarios and the
// labeled datasets used to train the MoLoRA router.

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "tokroute/molora.h"
#include "tokroute/routing.h"

namespace tokroute {

enum class Scenario {
  interleaved_balanced,   // every sequence mixes all K modalities evenly
  interleaved_text_heavy, // mixed, with modality 0 taking ~70% of tokens
  separated,              // each sequence is single-modality, K across the batch
  single_adapter,         // every token in modality 0
};

inline constexpr Scenario kAllScenarios[] = {Scenario::interleaved_balanced, Scenario::interleaved_text_heavy,
                                             Scenario::separated, Scenario::single_adapter};

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);

struct BatchParams {
  std::size_t tokens = 256;
  std::size_t dim = 32;
  std::size_t num_sequences = 8;
  std::size_t num_modalities = 4;       // K
  std::size_t vocab_per_modality = 1000;
  std::size_t num_adapters = 1;         // request-level adapters for compositional routing
  std::uint64_t seed = 0;
};

struct ScenarioBatch {
  TokenBatch batch;
  VocabBreaks breaks;
};

// Sequences are contiguous runs of near-equal length. Interleaved scenarios
// place every modality in every sequence long enough to hold them all.
ScenarioBatch make_scenario_batch(Scenario scenario, const BatchParams& params);

struct MultimodalParams {
  std::size_t samples = 1500;
  std::size_t dim = 32;
  std::size_t rank = 4;
  std::size_t num_modalities = 3;
  double mean_scale = 1.0;       // norm of each modality's mean
  double noise = 1.0;            // per-coordinate std of the features
  double transform_scale = 1.0;  // size of each modality's low-rank map
  double target_noise = 0.0;
  std::uint64_t seed = 0;
};

// x = mu_m + noise; target = x + x U_m V_m with U_m (d x r), V_m (r x d)
// drawn per modality, so each modality has its own best rank-r adapter.
Dataset make_multimodal_task(const MultimodalParams& params);

}  // namespace tokroute
