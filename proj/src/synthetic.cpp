#include "tokroute/synthetic.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "tokroute/errors.h"

namespace tokroute {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::interleaved_balanced: return "interleaved_balanced";
    case Scenario::interleaved_text_heavy: return "interleaved_text_heavy";
    case Scenario::separated: return "separated";
    case Scenario::single_adapter: return "single_adapter";
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view name) {
  for (Scenario s : kAllScenarios) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

ScenarioBatch make_scenario_batch(Scenario scenario, const BatchParams& p) {
  if (p.tokens == 0 || p.dim == 0 || p.num_sequences == 0 || p.num_modalities == 0 || p.vocab_per_modality == 0 ||
      p.num_adapters == 0) {
    throw ConfigError("batch parameters must be positive");
  }
  if (p.num_sequences > p.tokens) throw ConfigError("more sequences than tokens");

  std::vector<std::uint32_t> breaks(p.num_modalities + 1);
  for (std::size_t m = 0; m <= p.num_modalities; ++m) {
    breaks[m] = static_cast<std::uint32_t>(m * p.vocab_per_modality);
  }
  ScenarioBatch out{TokenBatch{{}, {}, {}, Matrix(p.tokens, p.dim)}, VocabBreaks(std::move(breaks))};
  TokenBatch& b = out.batch;

  std::mt19937_64 rng(p.seed);
  std::uniform_int_distribution<std::uint32_t> pick_vocab(0, static_cast<std::uint32_t>(p.vocab_per_modality - 1));
  std::uniform_int_distribution<std::uint32_t> pick_adapter(0, static_cast<std::uint32_t>(p.num_adapters - 1));
  std::uniform_int_distribution<std::uint32_t> pick_other(
      1, static_cast<std::uint32_t>(std::max<std::size_t>(p.num_modalities, 2) - 1));
  std::bernoulli_distribution text(0.7);
  const auto k = static_cast<std::uint32_t>(p.num_modalities);

  for (std::size_t s = 0; s < p.num_sequences; ++s) {
    const std::size_t begin = s * p.tokens / p.num_sequences;
    const std::size_t end = (s + 1) * p.tokens / p.num_sequences;
    const std::size_t len = end - begin;
    std::vector<std::uint32_t> mods(len, 0);
    switch (scenario) {
      case Scenario::interleaved_balanced:
        for (std::size_t j = 0; j < len; ++j) mods[j] = static_cast<std::uint32_t>(j % k);
        break;
      case Scenario::interleaved_text_heavy:
        for (std::size_t j = 0; j < len; ++j) {
          if (j < k) {
            mods[j] = static_cast<std::uint32_t>(j);
          } else {
            mods[j] = (k == 1 || text(rng)) ? 0u : pick_other(rng);
          }
        }
        break;
      case Scenario::separated:
        std::fill(mods.begin(), mods.end(), static_cast<std::uint32_t>(s % k));
        break;
      case Scenario::single_adapter:
        break;
    }
    std::shuffle(mods.begin(), mods.end(), rng);
    const std::uint32_t adapter = pick_adapter(rng);
    for (std::uint32_t m : mods) {
      b.vocab_ids.push_back(out.breaks.breaks()[m] + pick_vocab(rng));
      b.seq_ids.push_back(static_cast<std::uint32_t>(s));
      b.adapter_ids.push_back(adapter);
    }
  }

  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (float& v : b.features.data()) v = normal(rng);
  b.validate(out.breaks.vocab_size(), p.num_sequences, p.num_adapters);
  return out;
}

Dataset make_multimodal_task(const MultimodalParams& p) {
  if (p.samples == 0 || p.dim == 0 || p.num_modalities == 0) throw ConfigError("task sizes must be positive");
  if (p.rank == 0 || p.rank > p.dim) throw ConfigError("task rank must be in [1, dim]");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = p.dim;

  std::vector<std::vector<double>> means(p.num_modalities, std::vector<double>(d));
  for (auto& mu : means) {
    double norm = 0.0;
    for (double& v : mu) {
      v = normal(rng);
      norm += v * v;
    }
    for (double& v : mu) v *= p.mean_scale / std::sqrt(norm);
  }
  // Entry variance chosen so x U V has per-coordinate std transform_scale for unit-variance x.
  const double scale = p.transform_scale / std::sqrt(static_cast<double>(d) * static_cast<double>(p.rank));
  std::vector<MatrixD> maps;
  for (std::size_t m = 0; m < p.num_modalities; ++m) {
    MatrixD u(d, p.rank), v(p.rank, d);
    for (double& e : u.data()) e = normal(rng) * std::sqrt(scale);
    for (double& e : v.data()) e = normal(rng) * std::sqrt(scale);
    maps.push_back(matmul(u, v));
  }

  Dataset data{MatrixD(p.samples, d), std::vector<double>(p.samples * d), std::vector<std::uint32_t>(p.samples)};
  for (std::size_t i = 0; i < p.samples; ++i) {
    const auto m = static_cast<std::uint32_t>(i % p.num_modalities);
    data.labels[i] = m;
    auto x = data.features.row(i);
    for (std::size_t c = 0; c < d; ++c) x[c] = means[m][c] + p.noise * normal(rng);
  }
  for (std::size_t i = 0; i < p.samples; ++i) {
    const auto x = data.features.row(i);
    const MatrixD& w = maps[data.labels[i]];
    for (std::size_t c = 0; c < d; ++c) {
      double acc = x[c];
      for (std::size_t j = 0; j < d; ++j) acc += x[j] * w(j, c);
      data.targets[i * d + c] = acc + p.target_noise * normal(rng);
    }
  }
  return data;
}

}  // namespace tokroute
