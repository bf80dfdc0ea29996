#pragma once

// MoLoRA: a learned router (2-layer GELU MLP) picks the top-k of K LoRA
// adapters per token and mixes their deltas with softmax weights over the
// selected logits. Training is plain gradient descent with exact analytic
// gradients; top-k selections are held constant within a step.
//
// Everything here is double precision so gradients can be checked against
// central finite differences. Router weights persist as f32 in PTRR files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tokroute/linalg.h"
#include "tokroute/routing.h"

namespace tokroute {

struct RouterParams {
  MatrixD w1;               // hidden x d
  std::vector<double> b1;   // hidden
  MatrixD w2;               // K x hidden
  std::vector<double> b2;   // K
  std::size_t top_k = 2;
  double aux_weight = 0.01;

  std::size_t dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }
  std::size_t num_adapters() const noexcept { return w2.rows(); }

  // Weights ~ N(0, 1/fan_in), zero biases.
  static RouterParams init(std::size_t dim, std::size_t num_adapters, std::uint64_t seed, std::size_t hidden = 64,
                           std::size_t top_k = 2, double aux_weight = 0.01);

  // Throws ShapeError on inconsistent shapes or k outside [1, K].
  void validate() const;
};

struct AdapterD {
  MatrixD a;  // d x r
  MatrixD b;  // r x d
};

// A ~ N(0, 1/d), B = 0.
std::vector<AdapterD> init_adapters(std::size_t count, std::size_t dim, std::size_t rank, std::uint64_t seed);

// g(x) = W2 GELU(W1 x + b1) + b2
std::vector<double> router_forward(std::span<const double> x, const RouterParams& params);

struct TopK {
  std::vector<std::uint32_t> indices;  // descending logit, ties to the lower index
  std::vector<double> weights;         // softmax over the selected logits
};

TopK topk_softmax(std::span<const double> logits, std::size_t k);

struct MoloraOutput {
  MatrixD delta;                      // n x d, sum_j w_ij x_i A_j B_j
  MatrixD probs;                      // n x K full softmax of the router logits
  std::vector<std::uint32_t> top1;
  std::vector<TopK> selections;
};

// Grouped execution: one dispatch plan per top-k slot, built with the same
// build_dispatch/gather/scatter used for vocabulary routing.
MoloraOutput molora_forward(const MatrixD& features, const RouterParams& params, std::span<const AdapterD> adapters);

// Token-by-token evaluation of the same delta; the oracle for the above.
MatrixD molora_forward_reference(const MatrixD& features, const RouterParams& params,
                                 std::span<const AdapterD> adapters);

// Top-1 choices as a routing decision (provenance learned).
RoutingDecision learned_decision(const MoloraOutput& out);

// K * sum_j f_j p_j, with f_j the top-1 share and p_j the mean probability.
double aux_loss(const MatrixD& probs, std::span<const std::uint32_t> top1);

struct MoloraModel {
  RouterParams router;
  std::vector<AdapterD> adapters;
};

enum class TaskKind {
  regression,      // MSE of (x + delta) against per-token targets
  classification,  // cross-entropy of router logits against labels
};

enum class RoutingStrategy {
  learned,  // router top-k
  oracle,   // token label selects the adapter, weight 1; router unused
};

struct Dataset {
  MatrixD features;                   // n x d
  std::vector<double> targets;        // n * d row-major, regression only
  std::vector<std::uint32_t> labels;  // ground-truth modality / domain

  std::size_t size() const noexcept { return features.rows(); }
};

struct Selections {
  std::vector<std::vector<std::uint32_t>> indices;  // per token
  std::vector<std::uint32_t> top1;
};

// Selections for the given rows (all rows when rows is empty) under the
// current router, or the labels under the oracle strategy.
Selections select_adapters(const MoloraModel& model, const Dataset& data, std::span<const std::uint32_t> rows,
                           RoutingStrategy strategy);

struct LossValue {
  double task = 0.0;
  double aux = 0.0;
  double total = 0.0;  // task + aux_weight * aux
};

struct Gradients {
  MatrixD w1, w2;
  std::vector<double> b1, b2;
  std::vector<AdapterD> adapters;

  explicit Gradients(const MoloraModel& like);
};

// Loss over `rows` with selections held fixed; fills grad when non-null.
LossValue molora_loss(const MoloraModel& model, const Dataset& data, std::span<const std::uint32_t> rows,
                      const Selections& selections, TaskKind task, RoutingStrategy strategy,
                      Gradients* grad = nullptr);

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-2;
  double aux_weight = 0.01;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::regression;
  RoutingStrategy strategy = RoutingStrategy::learned;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double aux_loss = 0.0;
  double ari = 0.0;
  double nmi = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  MoloraModel model;
  std::vector<EpochRecord> history;  // epoch 0 is the untrained model
};

// Full-data metrics for the current model.
EpochRecord evaluate(const MoloraModel& model, const Dataset& data, TaskKind task, RoutingStrategy strategy,
                     std::size_t epoch = 0);

// Throws TrainingError on a non-finite loss.
TrainResult train_router(const Dataset& data, MoloraModel model, const TrainConfig& config);

// PTRR v1: "PTRR", u32 version, u32 d, hidden, K, top_k, f32 aux_weight,
// then W1, b1, W2, b2 as little-endian f32.
inline constexpr std::uint32_t kRouterFormatVersion = 1;

std::vector<std::byte> encode_router(const RouterParams& params);
RouterParams decode_router(std::span<const std::byte> bytes);
void save_router(const RouterParams& params, const std::filesystem::path& path);
RouterParams load_router(const std::filesystem::path& path);

}  // namespace tokroute
