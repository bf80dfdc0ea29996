#include "tokroute/experiments.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "tokroute/catalog.h"
#include "tokroute/compute.h"
#include "tokroute/dispatch.h"
#include "tokroute/errors.h"
#include "tokroute/metrics.h"

namespace tokroute {
namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and rejects whatever is left.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], fmt::format("{}[{}]", path, i)));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_root(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  const auto version = Fields::convert<int>(j.at("schema_version"), "config.schema_version");
  if (version != kConfigSchemaVersion) {
    throw ConfigError(fmt::format("config: unsupported schema_version {}", version));
  }
  return j;
}

void require_positive(std::size_t value, const char* name) {
  if (value == 0) throw ConfigError(fmt::format("config: {} must be positive", name));
}

void require_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("config: seeds must list at least one seed");
}

void require_non_negative(double value, const char* name) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw ConfigError(fmt::format("config: {} must be a finite non-negative number", name));
  }
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header) : path_(path), out_(path) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
    columns_ = header.size();
    out_ << fmt::format("{}\n", fmt::join(header, ","));
  }

  template <typename... Args>
  void row(const Args&... values) {
    static_assert(sizeof...(Args) > 0);
    if (sizeof...(Args) != columns_) throw ContractError("csv row width does not match header");
    std::string line;
    ((line += fmt::format("{},", values)), ...);
    line.back() = '\n';
    out_ << line;
  }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_ = 0;
};

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string_view scenario_anchor(Scenario s) {
  return s == Scenario::interleaved_balanced ? "Table 4" : "Table 5";
}

struct EquivalenceRow {
  WorkReport per_token;
  WorkReport per_sequence;
  double err_per_token = 0.0;
  double err_per_sequence = 0.0;
  std::size_t targets_used = 0;
};

EquivalenceRow check_batch(const ScenarioBatch& sb, const AdapterCatalog& catalog, bool compositional) {
  const TokenBatch& batch = sb.batch;
  const RoutingDecision decision = compositional
                                       ? route_batch_compositional(batch, sb.breaks, catalog.num_adapters())
                                       : route_batch_vocab(batch, sb.breaks);
  const Matrix reference = lora_forward_reference(batch, decision, catalog);
  const ForwardResult per_token = lora_forward_per_token(batch, decision, catalog);
  const auto needed = needed_targets(decision, batch.seq_ids);
  const ForwardResult per_seq = per_sequence_simulate(batch, decision, needed, catalog);

  EquivalenceRow row;
  row.per_token = per_token.work;
  row.per_sequence = count_work_per_sequence(decision, batch.seq_ids, PerSequenceBatching::by_target);
  row.err_per_token = max_relative_error(per_token.output, reference);
  row.err_per_sequence = max_relative_error(per_seq.output, reference);
  row.targets_used = build_dispatch(decision).nonempty_groups();
  return row;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double max_relative_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_relative_error: shape mismatch");
  double diff = 0.0;
  double scale = 0.0;
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(ad[i]) - static_cast<double>(bd[i])));
    scale = std::max(scale, std::abs(static_cast<double>(bd[i])));
  }
  return scale > 0.0 ? diff / scale : diff;
}

std::string_view to_string(MoloraTask t) { return t == MoloraTask::multimodal ? "multimodal" : "semantic"; }

std::string_view to_string(TokenSplit s) {
  switch (s) {
    case TokenSplit::uniform: return "uniform";
    case TokenSplit::skewed: return "skewed";
    case TokenSplit::extreme: return "extreme";
  }
  return "unknown";
}

std::vector<double> split_fractions(TokenSplit s) {
  switch (s) {
    case TokenSplit::uniform: return {0.25, 0.25, 0.25, 0.25};
    case TokenSplit::skewed: return {0.80, 0.10, 0.05, 0.05};
    case TokenSplit::extreme: return {0.95, 0.02, 0.02, 0.01};
  }
  return {};
}

std::vector<std::size_t> apportion(std::span<const double> fractions, std::size_t total) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < fractions.size(); ++j) {
    const double exact = fractions[j] * static_cast<double>(total);
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[j];
    remainders.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

double tile_cost(std::size_t count, std::size_t dim, std::size_t block_m, std::size_t block_n, double overhead) {
  if (count == 0) return 0.0;
  const auto tiles = ((count + block_m - 1) / block_m) * ((dim + block_n - 1) / block_n);
  return static_cast<double>(tiles) * (overhead + static_cast<double>(block_m * block_n));
}

EquivalenceConfig parse_equivalence_config(std::string_view text) {
  const json root = parse_root(text);
  Fields f(root, "config");
  int version = 0;
  f.get("schema_version", version);
  EquivalenceConfig c;
  f.get("seeds", c.seeds);
  if (f.has("scenarios")) {
    c.scenarios.clear();
    for (const auto& name : Fields::convert<std::vector<std::string>>(f.raw("scenarios"), "config.scenarios")) {
      c.scenarios.push_back(parse_scenario(name));
    }
  }
  f.get("tokens", c.tokens);
  f.get("dim", c.dim);
  f.get("rank", c.rank);
  f.get("num_sequences", c.num_sequences);
  f.get("num_modalities", c.num_modalities);
  f.get("vocab_per_modality", c.vocab_per_modality);
  f.get("random_configs", c.random_configs);
  f.get("tolerance", c.tolerance);
  f.finish();

  require_seeds(c.seeds);
  require_positive(c.tokens, "tokens");
  require_positive(c.dim, "dim");
  require_positive(c.rank, "rank");
  require_positive(c.num_sequences, "num_sequences");
  require_positive(c.num_modalities, "num_modalities");
  require_positive(c.vocab_per_modality, "vocab_per_modality");
  if (c.rank > c.dim) throw ConfigError("config: rank must not exceed dim");
  if (c.num_sequences > c.tokens) throw ConfigError("config: more sequences than tokens");
  if (!(c.tolerance > 0.0)) throw ConfigError("config: tolerance must be positive");
  return c;
}

MemsimConfig parse_memsim_config(std::string_view text) {
  const json root = parse_root(text);
  Fields f(root, "config");
  int version = 0;
  f.get("schema_version", version);
  MemsimConfig c;
  f.get("seeds", c.seeds);
  f.get("num_adapters", c.residency.num_adapters);
  f.get("pager_capacity", c.residency.pager_capacity);
  f.get("hot_slots", c.residency.hot_slots);
  f.get("tokens_per_step", c.shape.tokens_per_step);
  f.get("targets_per_step", c.shape.targets_per_step);
  f.get("requests_per_step", c.shape.requests_per_step);
  f.get("steps", c.steps);
  f.get("zipf_s", c.workload.zipf_s);
  f.get("burst_mean", c.workload.burst_mean);
  f.get("calibrate", c.calibrate);
  if (f.has("ladder")) {
    Fields l(f.raw("ladder"), "config.ladder");
    l.get("per_seq_paging", c.ladder.per_seq_paging);
    l.get("per_seq_hotset", c.ladder.per_seq_hotset);
    l.get("per_token_hotset", c.ladder.per_token_hotset);
    l.get("per_token_graph", c.ladder.per_token_graph);
    l.finish();
  }
  if (f.has("cost")) {
    Fields k(f.raw("cost"), "config.cost");
    k.get("pass_cost_per_token", c.cost.pass_cost_per_token);
    k.get("paging_penalty", c.cost.paging_penalty);
    k.get("launch_overhead", c.cost.launch_overhead);
    k.get("graph_step_overhead", c.cost.graph_step_overhead);
    k.finish();
  }
  f.finish();

  require_seeds(c.seeds);
  require_positive(c.residency.num_adapters, "num_adapters");
  require_positive(c.residency.pager_capacity, "pager_capacity");
  require_positive(c.residency.hot_slots, "hot_slots");
  require_positive(c.shape.tokens_per_step, "tokens_per_step");
  require_positive(c.shape.targets_per_step, "targets_per_step");
  require_positive(c.shape.requests_per_step, "requests_per_step");
  require_positive(c.steps, "steps");
  require_non_negative(c.cost.pass_cost_per_token, "cost.pass_cost_per_token");
  require_non_negative(c.cost.paging_penalty, "cost.paging_penalty");
  require_non_negative(c.cost.launch_overhead, "cost.launch_overhead");
  require_non_negative(c.cost.graph_step_overhead, "cost.graph_step_overhead");
  if (!(c.workload.zipf_s > 0.0)) throw ConfigError("config: zipf_s must be positive");
  if (!(c.workload.burst_mean >= 1.0)) throw ConfigError("config: burst_mean must be at least 1");
  c.workload.capacity = c.residency.pager_capacity;
  return c;
}

MoloraRunConfig parse_molora_config(std::string_view text) {
  const json root = parse_root(text);
  Fields f(root, "config");
  int version = 0;
  f.get("schema_version", version);
  MoloraRunConfig c;
  if (f.has("task")) {
    const auto name = Fields::convert<std::string>(f.raw("task"), "config.task");
    if (name == "multimodal") {
      c.task = MoloraTask::multimodal;
    } else if (name == "semantic") {
      c.task = MoloraTask::semantic;
    } else {
      throw ConfigError("config.task: expected 'multimodal' or 'semantic', got '" + name + "'");
    }
  }
  // Task-dependent defaults, overridable below.
  c.data.target_noise = 0.1;
  c.data.mean_scale = 3.0;
  c.train.lr = 0.5;
  c.train.batch_size = 50;
  c.train.epochs = 100;
  if (c.task == MoloraTask::semantic) {
    c.data.samples = 600;
    c.data.mean_scale = 6.0;
    c.num_adapters = 3;
    c.train.lr = 0.3;
    c.train.epochs = 200;
    c.baselines = false;
  }

  f.get("seeds", c.seeds);
  f.get("samples", c.data.samples);
  f.get("dim", c.data.dim);
  f.get("rank", c.data.rank);
  f.get("num_modalities", c.data.num_modalities);
  f.get("mean_scale", c.data.mean_scale);
  f.get("noise", c.data.noise);
  f.get("transform_scale", c.data.transform_scale);
  f.get("target_noise", c.data.target_noise);
  f.get("num_adapters", c.num_adapters);
  f.get("top_k", c.top_k);
  f.get("hidden", c.hidden);
  f.get("epochs", c.train.epochs);
  f.get("lr", c.train.lr);
  f.get("aux_weight", c.train.aux_weight);
  f.get("batch_size", c.train.batch_size);
  f.get("baselines", c.baselines);
  f.get("save_router", c.save_router);
  f.finish();

  require_seeds(c.seeds);
  require_positive(c.data.samples, "samples");
  require_positive(c.data.dim, "dim");
  require_positive(c.data.rank, "rank");
  require_positive(c.data.num_modalities, "num_modalities");
  require_positive(c.num_adapters, "num_adapters");
  require_positive(c.hidden, "hidden");
  if (c.data.rank > c.data.dim) throw ConfigError("config: rank must not exceed dim");
  if (c.top_k < 1 || c.top_k > c.num_adapters) throw ConfigError("config: top_k must be in [1, num_adapters]");
  require_non_negative(c.train.lr, "lr");
  require_non_negative(c.train.aux_weight, "aux_weight");
  require_non_negative(c.data.mean_scale, "mean_scale");
  require_non_negative(c.data.noise, "noise");
  require_non_negative(c.data.transform_scale, "transform_scale");
  require_non_negative(c.data.target_noise, "target_noise");
  return c;
}

DispatchBenchConfig parse_dispatch_config(std::string_view text) {
  const json root = parse_root(text);
  Fields f(root, "config");
  int version = 0;
  f.get("schema_version", version);
  DispatchBenchConfig c;
  f.get("seeds", c.seeds);
  f.get("token_counts", c.token_counts);
  f.get("dim", c.dim);
  f.get("fixed_block_m", c.fixed_block_m);
  f.get("fixed_block_n", c.fixed_block_n);
  f.get("tile_overhead", c.tile_overhead);
  f.finish();

  require_seeds(c.seeds);
  if (c.token_counts.empty()) throw ConfigError("config: token_counts must not be empty");
  for (std::size_t n : c.token_counts) require_positive(n, "token_counts[]");
  require_positive(c.dim, "dim");
  require_positive(c.fixed_block_m, "fixed_block_m");
  require_positive(c.fixed_block_n, "fixed_block_n");
  require_non_negative(c.tile_overhead, "tile_overhead");
  return c;
}

Report run_equivalence(const EquivalenceConfig& config, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  Report report;
  CsvWriter csv(out_dir / "equivalence.csv",
                {"scenario", "seed", "tokens", "dim", "rank", "targets", "pt_forward_passes", "pt_token_passes",
                 "pt_launches", "ps_forward_passes", "ps_token_passes", "ps_launches", "forward_pass_ratio",
                 "token_pass_ratio", "err_per_token", "err_per_sequence", "paper_anchor"});

  double worst = 0.0;
  std::size_t batches = 0;
  for (std::uint64_t seed : config.seeds) {
    for (Scenario scenario : config.scenarios) {
      BatchParams bp{config.tokens, config.dim, config.num_sequences, config.num_modalities,
                     config.vocab_per_modality, 1, seed};
      const ScenarioBatch sb = make_scenario_batch(scenario, bp);
      const auto catalog = AdapterCatalog::random(1, config.num_modalities, config.dim, config.rank,
                                                  seed + 7919, BInit::gaussian);
      const EquivalenceRow r = check_batch(sb, catalog, false);
      ++batches;
      worst = std::max({worst, r.err_per_token, r.err_per_sequence});
      const double fwd = ratio(r.per_sequence.forward_passes, r.per_token.forward_passes);
      const double tok = ratio(r.per_sequence.token_passes, r.per_token.token_passes);
      csv.row(to_string(scenario), seed, config.tokens, config.dim, config.rank, r.targets_used,
              r.per_token.forward_passes, r.per_token.token_passes, r.per_token.launches,
              r.per_sequence.forward_passes, r.per_sequence.token_passes, r.per_sequence.launches, fwd, tok,
              r.err_per_token, r.err_per_sequence, scenario_anchor(scenario));

      const std::string tag = fmt::format("{} seed {}", to_string(scenario), seed);
      if (r.err_per_token > config.tolerance || r.err_per_sequence > config.tolerance) {
        report.failures.push_back(fmt::format("{}: outputs differ (per-token {:.3g}, per-sequence {:.3g})", tag,
                                              r.err_per_token, r.err_per_sequence));
      }
      if (scenario == Scenario::single_adapter && r.per_token != r.per_sequence) {
        report.failures.push_back(tag + ": single-adapter work reports differ");
      }
      if (scenario == Scenario::separated && tok != 1.0) {
        report.failures.push_back(fmt::format("{}: separated token-pass ratio {} != 1", tag, tok));
      }
      if ((scenario == Scenario::interleaved_balanced || scenario == Scenario::interleaved_text_heavy) &&
          config.tokens / config.num_sequences >= config.num_modalities &&
          (r.per_sequence.forward_passes != config.num_modalities ||
           tok != static_cast<double>(config.num_modalities))) {
        report.failures.push_back(tag + ": interleaved pass counts do not equal K");
      }
    }

    std::mt19937_64 rng(seed ^ 0x5eedULL);
    auto uniform = [&](std::size_t lo, std::size_t hi) {
      return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    for (std::size_t i = 0; i < config.random_configs; ++i) {
      const std::size_t n = uniform(1, 512);
      const std::size_t d = uniform(1, 128);
      const std::size_t r = uniform(1, std::min<std::size_t>(16, d));
      const std::size_t adapters = uniform(1, 4);
      const std::size_t modalities = uniform(1, 16 / adapters);
      const std::size_t sequences = uniform(1, std::min<std::size_t>(n, 8));
      const Scenario scenario = kAllScenarios[uniform(0, std::size(kAllScenarios) - 1)];
      const std::uint64_t sub_seed = rng();
      BatchParams bp{n, d, sequences, modalities, 64, adapters, sub_seed};
      const ScenarioBatch sb = make_scenario_batch(scenario, bp);
      const auto catalog = AdapterCatalog::random(adapters, modalities, d, r, sub_seed + 1, BInit::gaussian);
      const EquivalenceRow row = check_batch(sb, catalog, true);
      ++batches;
      worst = std::max({worst, row.err_per_token, row.err_per_sequence});
      csv.row(fmt::format("random_{:03}", i), seed, n, d, r, row.targets_used, row.per_token.forward_passes,
              row.per_token.token_passes, row.per_token.launches, row.per_sequence.forward_passes,
              row.per_sequence.token_passes, row.per_sequence.launches,
              ratio(row.per_sequence.forward_passes, row.per_token.forward_passes),
              ratio(row.per_sequence.token_passes, row.per_token.token_passes), row.err_per_token,
              row.err_per_sequence, "Table 5");
      if (row.err_per_token > config.tolerance || row.err_per_sequence > config.tolerance) {
        report.failures.push_back(fmt::format("random config {} seed {} (n={}, d={}, r={}, C={}): max deviation {:.3g}",
                                              i, seed, n, d, r, adapters * modalities,
                                              std::max(row.err_per_token, row.err_per_sequence)));
      }
    }
  }
  report.files.push_back(csv.path());
  report.summary.push_back(fmt::format("equivalence: {} batches, max relative deviation {:.3g} (tolerance {:.1g})",
                                       batches, worst, config.tolerance));
  return report;
}

Report run_memory_sim(const MemsimConfig& config, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  Report report;
  CsvWriter stats_csv(out_dir / "memsim.csv", {"workload", "mode", "seed", "p50", "p99", "mean", "miss_rate",
                                                "not_resident_rate", "paper_anchor"});
  CsvWriter ladder_csv(out_dir / "ladder.csv", {"mode", "seed", "mean_latency", "target_latency",
                                                 "speedup_vs_previous", "cumulative_speedup", "paper_anchor"});
  CsvWriter calib_csv(out_dir / "calibration.csv",
                      {"seed", "misses_per_step", "pass_cost_per_token", "launch_overhead", "graph_step_overhead",
                       "paging_penalty", "penalty_to_pass_ratio", "paper_anchor"});

  const std::size_t length = config.steps * config.shape.requests_per_step;
  const double targets[] = {config.ladder.per_seq_paging, config.ladder.per_seq_hotset,
                            config.ladder.per_token_hotset, config.ladder.per_token_graph};
  std::map<WorkloadKind, double> mean_miss;
  WorkloadParams workload = config.workload;
  workload.capacity = config.residency.pager_capacity;

  for (std::uint64_t seed : config.seeds) {
    std::map<WorkloadKind, std::vector<std::uint32_t>> loads;
    for (std::size_t w = 0; w < std::size(kAllWorkloads); ++w) {
      loads[kAllWorkloads[w]] = gen_workload(kAllWorkloads[w], config.residency.num_adapters, length,
                                             seed * 16 + w, workload);
    }

    CostModel cost = config.cost;
    if (config.calibrate) {
      const auto probe = simulate_serving(loads[WorkloadKind::uniform], ServingMode::per_seq_paging, CostModel{},
                                          config.shape, config.residency);
      const double misses_per_step =
          static_cast<double>(probe.misses) / static_cast<double>(probe.step_latency.size());
      cost = calibrate_cost_model(config.ladder, config.shape, misses_per_step);
      const double pass = cost.pass_cost_per_token * static_cast<double>(config.shape.tokens_per_step);
      calib_csv.row(seed, misses_per_step, cost.pass_cost_per_token, cost.launch_overhead,
                    cost.graph_step_overhead, cost.paging_penalty, pass > 0.0 ? cost.paging_penalty / pass : 0.0,
                    "Table 6");
    }

    std::map<std::pair<WorkloadKind, ServingMode>, LatencyStats> stats;
    for (WorkloadKind kind : kAllWorkloads) {
      for (ServingMode mode : kAllServingModes) {
        const auto res = simulate_serving(loads[kind], mode, cost, config.shape, config.residency);
        stats[{kind, mode}] = res.stats;
        stats_csv.row(to_string(kind), to_string(mode), seed, res.stats.p50, res.stats.p99, res.stats.mean,
                      res.stats.miss_rate, res.stats.not_resident_rate, "Fig. 6");
      }
      mean_miss[kind] += stats[{kind, ServingMode::per_seq_paging}].miss_rate /
                         static_cast<double>(config.seeds.size());
    }

    double first = 0.0, previous = 0.0;
    for (std::size_t i = 0; i < std::size(kAllServingModes); ++i) {
      const double mean = stats[{WorkloadKind::uniform, kAllServingModes[i]}].mean;
      if (i == 0) first = mean;
      ladder_csv.row(to_string(kAllServingModes[i]), seed, mean, targets[i],
                     i == 0 || mean == 0.0 ? 1.0 : previous / mean, mean == 0.0 ? 1.0 : first / mean, "Table 6");
      if (config.calibrate && std::abs(mean - targets[i]) > 0.02 * targets[i]) {
        report.failures.push_back(fmt::format("seed {}: {} mean latency {:.4g} misses ladder target {}", seed,
                                              to_string(kAllServingModes[i]), mean, targets[i]));
      }
      previous = mean;
    }

    for (ServingMode mode : {ServingMode::per_seq_hotset, ServingMode::per_token_hotset,
                             ServingMode::per_token_graph}) {
      const double p99 = stats[{WorkloadKind::uniform, mode}].p99;
      for (WorkloadKind kind : kAllWorkloads) {
        if (stats[{kind, mode}].p99 != p99) {
          report.failures.push_back(fmt::format("seed {}: {} P99 varies with workload", seed, to_string(mode)));
          break;
        }
      }
    }
    const auto miss = [&](WorkloadKind k) { return stats[{k, ServingMode::per_seq_paging}].miss_rate; };
    if (config.residency.pager_capacity < config.residency.num_adapters &&
        !(miss(WorkloadKind::adversarial) >= miss(WorkloadKind::uniform) &&
          miss(WorkloadKind::uniform) >= miss(WorkloadKind::zipfian) &&
          miss(WorkloadKind::zipfian) >= miss(WorkloadKind::bursty))) {
      report.failures.push_back(fmt::format("seed {}: paging miss-rate ordering violated", seed));
    }
  }

  report.files = {stats_csv.path(), ladder_csv.path()};
  if (config.calibrate) report.files.push_back(calib_csv.path());
  report.summary.push_back(fmt::format("memsim: {} seeds x {} workloads x {} modes, {} steps of {} requests",
                                       config.seeds.size(), std::size(kAllWorkloads), std::size(kAllServingModes),
                                       config.steps, config.shape.requests_per_step));
  for (WorkloadKind kind : kAllWorkloads) {
    report.summary.push_back(fmt::format("  paging miss rate {:<12} {:.4f}", to_string(kind), mean_miss[kind]));
  }
  return report;
}

Report run_molora(const MoloraRunConfig& config, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  Report report;
  const bool discovery = config.task == MoloraTask::multimodal;
  const std::string_view history_anchor = discovery ? "Table 14" : "Table 15";
  CsvWriter history(out_dir / "history.csv",
                    {"model", "seed", "epoch", "task_loss", "aux_loss", "ari", "nmi", "entropy", "paper_anchor"});
  CsvWriter confusion_csv(out_dir / "confusion.csv", {"seed", "label", "adapter", "fraction", "paper_anchor"});
  CsvWriter summary(out_dir / "summary.csv", {"model", "seed", "adapters", "top_k", "final_task_loss", "final_ari",
                                              "final_nmi", "paper_anchor"});

  for (std::uint64_t seed : config.seeds) {
    MultimodalParams dp = config.data;
    dp.seed = seed;
    const Dataset data = make_multimodal_task(dp);
    TrainConfig tc = config.train;
    tc.seed = seed;

    auto train = [&](std::string_view name, std::size_t adapters, std::size_t top_k, RoutingStrategy strategy) {
      MoloraModel model{RouterParams::init(dp.dim, adapters, seed * 3 + 1, config.hidden, top_k, tc.aux_weight),
                        init_adapters(adapters, dp.dim, dp.rank, seed * 3 + 2)};
      TrainConfig run = tc;
      run.strategy = strategy;
      TrainResult result = train_router(data, std::move(model), run);
      for (const auto& e : result.history) {
        history.row(name, seed, e.epoch, e.task_loss, e.aux_loss, e.ari, e.nmi, e.entropy,
                    name == "molora" ? history_anchor : std::string_view("Table 13"));
      }
      const auto& last = result.history.back();
      summary.row(name, seed, adapters, top_k, last.task_loss, last.ari, last.nmi,
                  discovery ? "Table 13" : "Table 15");
      return result;
    };

    const TrainResult learned = train("molora", config.num_adapters, config.top_k, RoutingStrategy::learned);
    const auto sel = select_adapters(learned.model, data, {}, RoutingStrategy::learned);
    const MatrixD conf = confusion(data.labels, sel.top1, dp.num_modalities, config.num_adapters);
    for (std::size_t m = 0; m < conf.rows(); ++m) {
      for (std::size_t a = 0; a < conf.cols(); ++a) {
        confusion_csv.row(seed, m, a, conf(m, a), discovery ? "Table 14" : "Table 15");
      }
    }
    if (config.save_router) {
      const auto path = out_dir / fmt::format("router_seed{}.ptrr", seed);
      save_router(learned.model.router, path);
      report.files.push_back(path);
    }
    const auto& fin = learned.history.back();
    report.summary.push_back(fmt::format("molora seed {}: task loss {:.4f} -> {:.4f}, ARI {:.3f} -> {:.3f}, NMI {:.3f}, "
                                         "entropy {:.3f} -> {:.3f}",
                                         seed, learned.history.front().task_loss, fin.task_loss,
                                         learned.history.front().ari, fin.ari, fin.nmi,
                                         learned.history.front().entropy, fin.entropy));

    if (config.baselines) {
      const double single = train("single", 1, 1, RoutingStrategy::learned).history.back().task_loss;
      const double oracle =
          train("oracle", dp.num_modalities, 1, RoutingStrategy::oracle).history.back().task_loss;
      report.summary.push_back(fmt::format("  final task loss: single {:.4f}, molora {:.4f}, oracle {:.4f}", single,
                                           fin.task_loss, oracle));
      if (!(fin.task_loss < single)) {
        report.failures.push_back(fmt::format("seed {}: molora loss {:.4g} not below single adapter {:.4g}", seed,
                                              fin.task_loss, single));
      }
      if (!(oracle <= fin.task_loss)) {
        report.failures.push_back(fmt::format("seed {}: oracle loss {:.4g} above molora {:.4g}", seed, oracle,
                                              fin.task_loss));
      }
    }
  }
  report.files.insert(report.files.begin(), {history.path(), confusion_csv.path(), summary.path()});
  return report;
}

Report run_dispatch_bench(const DispatchBenchConfig& config, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  Report report;
  CsvWriter csv(out_dir / "dispatch.csv", {"split", "seed", "tokens", "dim", "h0", "h1", "h2", "h3", "fixed_cost",
                                           "adaptive_cost", "ratio", "paper_anchor"});
  for (std::uint64_t seed : config.seeds) {
    for (std::size_t n : config.token_counts) {
      for (TokenSplit split : kAllSplits) {
        const auto counts = apportion(split_fractions(split), n);
        RoutingDecision decision{{}, counts.size(), Provenance::vocab};
        for (std::size_t j = 0; j < counts.size(); ++j) decision.targets.insert(decision.targets.end(), counts[j], j);
        std::mt19937_64 rng(seed * 1000003 + n);
        std::shuffle(decision.targets.begin(), decision.targets.end(), rng);
        const DispatchPlan plan = build_dispatch(decision);

        double fixed = 0.0, adaptive = 0.0;
        for (std::size_t j = 0; j < plan.num_targets(); ++j) {
          fixed += tile_cost(plan.histogram[j], config.dim, config.fixed_block_m, config.fixed_block_n,
                             config.tile_overhead);
          adaptive += tile_cost(plan.histogram[j], config.dim, plan.tiles[j].block_m, plan.tiles[j].block_n,
                                config.tile_overhead);
        }
        const double r = adaptive > 0.0 ? fixed / adaptive : 1.0;
        csv.row(to_string(split), seed, n, config.dim, plan.histogram[0], plan.histogram[1], plan.histogram[2],
                plan.histogram[3], fixed, adaptive, r, "Table 9");
        report.summary.push_back(fmt::format("dispatch {:<8} n={:<5} seed {}: fixed/adaptive = {:.3f}",
                                             to_string(split), n, seed, r));
        if (split == TokenSplit::uniform && r > 1.1) {
          report.failures.push_back(fmt::format("uniform split n={} seed {}: ratio {:.3f} above 1.1", n, seed, r));
        }
      }
    }
  }
  report.files.push_back(csv.path());
  return report;
}

}  // namespace tokroute
