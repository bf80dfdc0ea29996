#pragma once

// Experiment runners behind the CLI. Each takes a JSON config (schema
// version 1, unknown keys rejected), writes CSV files into an output
// directory, and returns the human-readable summary plus any failed checks.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokroute/memory.h"
#include "tokroute/molora.h"
#include "tokroute/synthetic.h"

namespace tokroute {

inline constexpr int kConfigSchemaVersion = 1;

struct Report {
  std::vector<std::string> summary;   // lines for stdout
  std::vector<std::string> failures;  // empty on success
  std::vector<std::filesystem::path> files;

  bool ok() const noexcept { return failures.empty(); }
};

struct EquivalenceConfig {
  std::vector<std::uint64_t> seeds{0};
  std::vector<Scenario> scenarios{std::begin(kAllScenarios), std::end(kAllScenarios)};
  std::size_t tokens = 2048;
  std::size_t dim = 64;
  std::size_t rank = 8;
  std::size_t num_sequences = 16;
  std::size_t num_modalities = 4;
  std::size_t vocab_per_modality = 1000;
  std::size_t random_configs = 100;  // extra randomized shapes per seed
  double tolerance = 1e-5;
};

struct MemsimConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  ResidencyConfig residency;
  BatchShape shape;
  std::size_t steps = 200;
  WorkloadParams workload;  // capacity follows residency.pager_capacity
  LadderTargets ladder;
  bool calibrate = true;  // fit the cost model per seed on the uniform workload
  CostModel cost;         // used as given when calibrate is false
};

enum class MoloraTask { multimodal, semantic };

std::string_view to_string(MoloraTask t);

struct MoloraRunConfig {
  MoloraTask task = MoloraTask::multimodal;
  std::vector<std::uint64_t> seeds{0};
  MultimodalParams data;
  std::size_t num_adapters = 4;
  std::size_t top_k = 2;
  std::size_t hidden = 64;
  TrainConfig train;
  bool baselines = true;  // also train single-adapter and oracle-routed models
  bool save_router = true;
};

enum class TokenSplit { uniform, skewed, extreme };

inline constexpr TokenSplit kAllSplits[] = {TokenSplit::uniform, TokenSplit::skewed, TokenSplit::extreme};

std::string_view to_string(TokenSplit s);
std::vector<double> split_fractions(TokenSplit s);  // over four targets

// Largest-remainder rounding of fractions * total to integers summing to total.
std::vector<std::size_t> apportion(std::span<const double> fractions, std::size_t total);

struct DispatchBenchConfig {
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::size_t> token_counts{512};
  std::size_t dim = 4096;
  std::size_t fixed_block_m = 64;
  std::size_t fixed_block_n = 64;
  double tile_overhead = 0.0;  // fixed cost per tile on top of its block_m * block_n area
};

// Modeled cost of one group: ceil(h / block_m) * ceil(d / block_n) tiles,
// each costing tile_overhead + block_m * block_n.
double tile_cost(std::size_t count, std::size_t dim, std::size_t block_m, std::size_t block_n, double overhead);

// Parsers throw ConfigError on unknown keys, wrong types, a missing or
// unsupported schema_version, or non-positive counts.
EquivalenceConfig parse_equivalence_config(std::string_view json_text);
MemsimConfig parse_memsim_config(std::string_view json_text);
MoloraRunConfig parse_molora_config(std::string_view json_text);
DispatchBenchConfig parse_dispatch_config(std::string_view json_text);

Report run_equivalence(const EquivalenceConfig& config, const std::filesystem::path& out_dir);
Report run_memory_sim(const MemsimConfig& config, const std::filesystem::path& out_dir);
Report run_molora(const MoloraRunConfig& config, const std::filesystem::path& out_dir);
Report run_dispatch_bench(const DispatchBenchConfig& config, const std::filesystem::path& out_dir);

// ||a - b||_inf / ||b||_inf, or ||a - b||_inf when b is all zero.
double max_relative_error(const Matrix& a, const Matrix& b);

}  // namespace tokroute
