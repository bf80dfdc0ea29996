#include "tokroute/molora.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "tokroute/binary_io.h"
#include "tokroute/dispatch.h"
#include "tokroute/metrics.h"

namespace tokroute {
namespace {

MatrixD gaussian(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixD m(rows, cols);
  for (double& v : m.data()) v = normal(rng) * scale;
  return m;
}

struct RouterTrace {
  std::vector<double> pre;     // W1 x + b1
  std::vector<double> hidden;  // GELU(pre)
  std::vector<double> logits;
};

RouterTrace trace_router(std::span<const double> x, const RouterParams& p) {
  if (x.size() != p.dim()) {
    throw ShapeError("router input has dim " + std::to_string(x.size()) + ", expected " + std::to_string(p.dim()));
  }
  RouterTrace t;
  t.pre.resize(p.hidden());
  t.hidden.resize(p.hidden());
  for (std::size_t h = 0; h < p.hidden(); ++h) {
    double acc = p.b1[h];
    const auto w = p.w1.row(h);
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    t.pre[h] = acc;
    t.hidden[h] = gelu(acc);
  }
  t.logits.resize(p.num_adapters());
  for (std::size_t k = 0; k < p.num_adapters(); ++k) {
    double acc = p.b2[k];
    const auto w = p.w2.row(k);
    for (std::size_t h = 0; h < p.hidden(); ++h) acc += w[h] * t.hidden[h];
    t.logits[k] = acc;
  }
  return t;
}

void check_adapters(const RouterParams& params, std::span<const AdapterD> adapters) {
  params.validate();
  if (adapters.size() != params.num_adapters()) {
    throw ShapeError("router scores " + std::to_string(params.num_adapters()) + " adapters, got " +
                     std::to_string(adapters.size()));
  }
  for (const auto& ad : adapters) {
    if (ad.a.rows() != params.dim() || ad.b.cols() != params.dim() || ad.a.cols() != ad.b.rows()) {
      throw ShapeError("adapter shapes do not match router dim");
    }
  }
}

// out += w * x A B for a single row.
void add_lora_row(std::span<const double> x, const AdapterD& ad, double w, std::span<double> out) {
  const std::size_t r = ad.a.cols();
  std::vector<double> u(r, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto arow = ad.a.row(j);
    for (std::size_t q = 0; q < r; ++q) u[q] += x[j] * arow[q];
  }
  std::vector<double> z(out.size(), 0.0);
  for (std::size_t q = 0; q < r; ++q) {
    const auto brow = ad.b.row(q);
    for (std::size_t c = 0; c < out.size(); ++c) z[c] += u[q] * brow[c];
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * z[c];
}

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  return rows;
}

}  // namespace

RouterParams RouterParams::init(std::size_t dim, std::size_t num_adapters, std::uint64_t seed, std::size_t hidden,
                                std::size_t top_k, double aux_weight) {
  std::mt19937_64 rng(seed);
  MatrixD w1 = gaussian(hidden, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  MatrixD w2 = gaussian(num_adapters, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  RouterParams p{std::move(w1), std::vector<double>(hidden, 0.0), std::move(w2),
                 std::vector<double>(num_adapters, 0.0), top_k, aux_weight};
  p.validate();
  return p;
}

void RouterParams::validate() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw ShapeError("router parameter shapes are inconsistent");
  }
  if (top_k < 1 || top_k > w2.rows()) {
    throw ShapeError("top_k " + std::to_string(top_k) + " outside [1, " + std::to_string(w2.rows()) + "]");
  }
}

std::vector<AdapterD> init_adapters(std::size_t count, std::size_t dim, std::size_t rank, std::uint64_t seed) {
  if (rank == 0 || rank > dim) throw ShapeError("adapter rank must be in [1, d]");
  std::mt19937_64 rng(seed);
  std::vector<AdapterD> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({gaussian(dim, rank, 1.0 / std::sqrt(static_cast<double>(dim)), rng), MatrixD(rank, dim)});
  }
  return out;
}

std::vector<double> router_forward(std::span<const double> x, const RouterParams& params) {
  params.validate();
  return trace_router(x, params).logits;
}

TopK topk_softmax(std::span<const double> logits, std::size_t k) {
  if (k < 1 || k > logits.size()) {
    throw ShapeError("top-k with k=" + std::to_string(k) + " over " + std::to_string(logits.size()) + " logits");
  }
  std::vector<std::uint32_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
                    });
  order.resize(k);
  std::vector<double> picked(k);
  for (std::size_t s = 0; s < k; ++s) picked[s] = logits[order[s]];
  return {std::move(order), softmax(picked)};
}

MoloraOutput molora_forward(const MatrixD& features, const RouterParams& params, std::span<const AdapterD> adapters) {
  check_adapters(params, adapters);
  if (features.cols() != params.dim()) throw ShapeError("feature dim does not match router");
  const std::size_t n = features.rows();
  const std::size_t num_adapters = params.num_adapters();

  MoloraOutput out{MatrixD(n, features.cols()), MatrixD(n, num_adapters), std::vector<std::uint32_t>(n),
                   std::vector<TopK>(n)};
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto logits = trace_router(features.row(i), params).logits;
    const auto probs = softmax(logits);
    std::copy(probs.begin(), probs.end(), out.probs.row(i).begin());
    out.selections[i] = topk_softmax(logits, params.top_k);
    out.top1[i] = out.selections[i].indices.front();
  }

  // Slot s of every token forms one routing decision over the K adapters.
  for (std::size_t s = 0; s < params.top_k; ++s) {
    RoutingDecision decision;
    decision.num_targets = num_adapters;
    decision.provenance = Provenance::learned;
    decision.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) decision.targets[i] = out.selections[i].indices[s];
    const DispatchPlan plan = build_dispatch(decision);

    for (std::size_t j = 0; j < num_adapters; ++j) {
      const auto& group = plan.groups[j];
      if (group.empty()) continue;
      MatrixD rows = matmul(matmul(gather(features, std::span<const std::uint32_t>(group)), adapters[j].a),
                            adapters[j].b);
      for (std::size_t g = 0; g < group.size(); ++g) {
        const double w = out.selections[group[g]].weights[s];
        for (double& v : rows.row(g)) v *= w;
      }
      MatrixD slot_delta(n, features.cols());
      scatter_into(rows, std::span<const std::uint32_t>(group), slot_delta);
      for (std::uint32_t t : group) {
        auto dst = out.delta.row(t);
        const auto src = slot_delta.row(t);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    }
  }
  return out;
}

MatrixD molora_forward_reference(const MatrixD& features, const RouterParams& params,
                                 std::span<const AdapterD> adapters) {
  check_adapters(params, adapters);
  MatrixD delta(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto sel = topk_softmax(router_forward(features.row(i), params), params.top_k);
    for (std::size_t s = 0; s < sel.indices.size(); ++s) {
      add_lora_row(features.row(i), adapters[sel.indices[s]], sel.weights[s], delta.row(i));
    }
  }
  return delta;
}

RoutingDecision learned_decision(const MoloraOutput& out) {
  return RoutingDecision{out.top1, out.probs.cols(), Provenance::learned};
}

double aux_loss(const MatrixD& probs, std::span<const std::uint32_t> top1) {
  if (top1.size() != probs.rows()) throw ShapeError("aux_loss: top-1 length != token count");
  const std::size_t k = probs.cols();
  const double n = static_cast<double>(probs.rows());
  std::vector<double> f(k, 0.0), p(k, 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (top1[i] >= k) throw IndexError("aux_loss: top-1 index out of range");
    f[top1[i]] += 1.0;
    const auto row = probs.row(i);
    for (std::size_t j = 0; j < k; ++j) p[j] += row[j];
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) total += (f[j] / n) * (p[j] / n);
  return static_cast<double>(k) * total;
}

Selections select_adapters(const MoloraModel& model, const Dataset& data, std::span<const std::uint32_t> rows,
                           RoutingStrategy strategy) {
  std::vector<std::uint32_t> every;
  if (rows.empty()) {
    every = all_rows(data.size());
    rows = every;
  }
  Selections sel;
  sel.indices.resize(rows.size());
  sel.top1.resize(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (strategy == RoutingStrategy::oracle) {
      sel.indices[t] = {data.labels[rows[t]]};
    } else {
      sel.indices[t] = topk_softmax(trace_router(data.features.row(rows[t]), model.router).logits,
                                    model.router.top_k)
                           .indices;
    }
    sel.top1[t] = sel.indices[t].front();
  }
  return sel;
}

Gradients::Gradients(const MoloraModel& like)
    : w1(like.router.w1.rows(), like.router.w1.cols()),
      w2(like.router.w2.rows(), like.router.w2.cols()),
      b1(like.router.b1.size(), 0.0),
      b2(like.router.b2.size(), 0.0) {
  adapters.reserve(like.adapters.size());
  for (const auto& ad : like.adapters) {
    adapters.push_back({MatrixD(ad.a.rows(), ad.a.cols()), MatrixD(ad.b.rows(), ad.b.cols())});
  }
}

LossValue molora_loss(const MoloraModel& model, const Dataset& data, std::span<const std::uint32_t> rows,
                      const Selections& selections, TaskKind task, RoutingStrategy strategy, Gradients* grad) {
  const RouterParams& router = model.router;
  const std::size_t k_all = router.num_adapters();
  const std::size_t d = data.features.cols();
  const std::size_t rank = model.adapters.front().a.cols();
  const double n = static_cast<double>(rows.size());
  const bool learned = strategy == RoutingStrategy::learned;
  if (selections.indices.size() != rows.size()) throw ShapeError("selections do not cover the rows");
  if (task == TaskKind::regression && data.targets.size() != data.size() * d) {
    throw ShapeError("regression dataset is missing targets");
  }

  // Pass 1: router activations and the top-1 shares f_j for this batch.
  std::vector<RouterTrace> traces(rows.size());
  std::vector<std::vector<double>> probs(rows.size());
  std::vector<double> f(k_all, 0.0), p(k_all, 0.0);
  if (learned || task == TaskKind::classification) {
    for (std::size_t t = 0; t < rows.size(); ++t) {
      traces[t] = trace_router(data.features.row(rows[t]), router);
      probs[t] = softmax(traces[t].logits);
      f[selections.top1[t]] += 1.0 / n;
      for (std::size_t j = 0; j < k_all; ++j) p[j] += probs[t][j] / n;
    }
  }

  LossValue loss;
  if (learned || task == TaskKind::classification) {
    for (std::size_t j = 0; j < k_all; ++j) loss.aux += f[j] * p[j];
    loss.aux *= static_cast<double>(k_all);
  }

  const double scale = 1.0 / (n * static_cast<double>(d));
  std::vector<double> dlogits(k_all), yhat(d), err(d), u(rank), z(d), eb(rank);

  for (std::size_t t = 0; t < rows.size(); ++t) {
    const std::size_t i = rows[t];
    const auto x = data.features.row(i);
    std::fill(dlogits.begin(), dlogits.end(), 0.0);

    if (task == TaskKind::regression) {
      const auto& picked = selections.indices[t];
      std::vector<double> w(1, 1.0);
      if (learned) {
        std::vector<double> sel_logits(picked.size());
        for (std::size_t s = 0; s < picked.size(); ++s) sel_logits[s] = traces[t].logits[picked[s]];
        w = softmax(sel_logits);
      }
      // Forward with the per-adapter intermediates kept for backprop.
      std::vector<std::vector<double>> us(picked.size()), zs(picked.size());
      std::copy(x.begin(), x.end(), yhat.begin());
      for (std::size_t s = 0; s < picked.size(); ++s) {
        const AdapterD& ad = model.adapters[picked[s]];
        std::fill(u.begin(), u.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) {
          const auto arow = ad.a.row(j);
          for (std::size_t q = 0; q < rank; ++q) u[q] += x[j] * arow[q];
        }
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t q = 0; q < rank; ++q) {
          const auto brow = ad.b.row(q);
          for (std::size_t c = 0; c < d; ++c) z[c] += u[q] * brow[c];
        }
        for (std::size_t c = 0; c < d; ++c) yhat[c] += w[s] * z[c];
        us[s] = u;
        zs[s] = z;
      }
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double r = yhat[c] - data.targets[i * d + c];
        sq += r * r;
        err[c] = 2.0 * scale * r;
      }
      loss.task += sq * scale;

      if (grad != nullptr) {
        std::vector<double> gw(picked.size(), 0.0);
        for (std::size_t s = 0; s < picked.size(); ++s) {
          const AdapterD& ad = model.adapters[picked[s]];
          AdapterD& g = grad->adapters[picked[s]];
          for (std::size_t c = 0; c < d; ++c) gw[s] += err[c] * zs[s][c];
          for (std::size_t q = 0; q < rank; ++q) {
            auto grow = g.b.row(q);
            const auto brow = ad.b.row(q);
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              grow[c] += w[s] * us[s][q] * err[c];
              acc += brow[c] * err[c];
            }
            eb[q] = acc;
          }
          for (std::size_t j = 0; j < d; ++j) {
            auto grow = g.a.row(j);
            for (std::size_t q = 0; q < rank; ++q) grow[q] += w[s] * x[j] * eb[q];
          }
        }
        if (learned) {
          double mean_gw = 0.0;
          for (std::size_t s = 0; s < picked.size(); ++s) mean_gw += w[s] * gw[s];
          for (std::size_t s = 0; s < picked.size(); ++s) dlogits[picked[s]] += w[s] * (gw[s] - mean_gw);
        }
      }
    } else {
      const std::uint32_t label = data.labels[i];
      loss.task -= std::log(std::max(probs[t][label], 1e-300)) / n;
      if (grad != nullptr) {
        for (std::size_t j = 0; j < k_all; ++j) dlogits[j] += (probs[t][j] - (j == label ? 1.0 : 0.0)) / n;
      }
    }

    if (grad == nullptr || !(learned || task == TaskKind::classification)) continue;

    // Aux term: dL/dP_ij = aux_weight * K * f_j / n, through the full softmax.
    double mean_g = 0.0;
    for (std::size_t j = 0; j < k_all; ++j) mean_g += probs[t][j] * f[j];
    const double aux_scale = router.aux_weight * static_cast<double>(k_all) / n;
    for (std::size_t j = 0; j < k_all; ++j) dlogits[j] += aux_scale * probs[t][j] * (f[j] - mean_g);

    const RouterTrace& tr = traces[t];
    std::vector<double> dpre(router.hidden(), 0.0);
    for (std::size_t j = 0; j < k_all; ++j) {
      grad->b2[j] += dlogits[j];
      auto g2 = grad->w2.row(j);
      const auto w2 = router.w2.row(j);
      for (std::size_t h = 0; h < router.hidden(); ++h) {
        g2[h] += dlogits[j] * tr.hidden[h];
        dpre[h] += dlogits[j] * w2[h];
      }
    }
    for (std::size_t h = 0; h < router.hidden(); ++h) {
      const double da = dpre[h] * gelu_grad(tr.pre[h]);
      grad->b1[h] += da;
      auto g1 = grad->w1.row(h);
      for (std::size_t j = 0; j < d; ++j) g1[j] += da * x[j];
    }
  }

  loss.total = loss.task + router.aux_weight * loss.aux;
  return loss;
}

EpochRecord evaluate(const MoloraModel& model, const Dataset& data, TaskKind task, RoutingStrategy strategy,
                     std::size_t epoch) {
  const auto rows = all_rows(data.size());
  const Selections sel = select_adapters(model, data, rows, strategy);
  const LossValue loss = molora_loss(model, data, rows, sel, task, strategy);
  EpochRecord rec;
  rec.epoch = epoch;
  rec.task_loss = loss.task;
  rec.aux_loss = loss.aux;
  rec.ari = ari(data.labels, sel.top1);
  rec.nmi = nmi(data.labels, sel.top1);
  if (strategy == RoutingStrategy::learned) {
    MatrixD probs(data.size(), model.router.num_adapters());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto pr = softmax(trace_router(data.features.row(i), model.router).logits);
      std::copy(pr.begin(), pr.end(), probs.row(i).begin());
    }
    rec.entropy = routing_entropy(probs);
  }
  return rec;
}

namespace {

void step(MatrixD& param, const MatrixD& g, double lr) {
  auto p = param.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gd[i];
}

void step(std::vector<double>& param, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * g[i];
}

}  // namespace

TrainResult train_router(const Dataset& data, MoloraModel model, const TrainConfig& config) {
  if (data.size() == 0) throw ConfigError("training dataset is empty");
  if (model.adapters.size() != model.router.num_adapters() && config.strategy == RoutingStrategy::learned) {
    throw ShapeError("adapter count does not match router");
  }
  model.router.aux_weight = config.aux_weight;
  model.router.validate();

  std::vector<EpochRecord> history;
  history.push_back(evaluate(model, data, config.task, config.strategy, 0));

  std::mt19937_64 rng(config.seed);
  std::vector<std::uint32_t> order = all_rows(data.size());
  const std::size_t batch = config.batch_size == 0 ? data.size() : std::min(config.batch_size, data.size());
  const bool train_router_params = config.strategy == RoutingStrategy::learned || config.task == TaskKind::classification;
  const bool train_adapters = config.task == TaskKind::regression;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::span<const std::uint32_t> rows(order.data() + begin, std::min(batch, order.size() - begin));
      const Selections sel = select_adapters(model, data, rows, config.strategy);
      Gradients g(model);
      const LossValue loss = molora_loss(model, data, rows, sel, config.task, config.strategy, &g);
      if (!std::isfinite(loss.total)) throw TrainingError("non-finite training loss", epoch);
      if (train_router_params) {
        step(model.router.w1, g.w1, config.lr);
        step(model.router.b1, g.b1, config.lr);
        step(model.router.w2, g.w2, config.lr);
        step(model.router.b2, g.b2, config.lr);
      }
      if (train_adapters) {
        for (std::size_t j = 0; j < model.adapters.size(); ++j) {
          step(model.adapters[j].a, g.adapters[j].a, config.lr);
          step(model.adapters[j].b, g.adapters[j].b, config.lr);
        }
      }
    }
    EpochRecord rec = evaluate(model, data, config.task, config.strategy, epoch);
    if (!std::isfinite(rec.task_loss)) throw TrainingError("non-finite evaluation loss", epoch);
    history.push_back(rec);
  }
  return {std::move(model), std::move(history)};
}

std::vector<std::byte> encode_router(const RouterParams& params) {
  params.validate();
  binary::Writer w;
  w.magic("PTRR");
  w.u32(kRouterFormatVersion);
  w.u32(static_cast<std::uint32_t>(params.dim()));
  w.u32(static_cast<std::uint32_t>(params.hidden()));
  w.u32(static_cast<std::uint32_t>(params.num_adapters()));
  w.u32(static_cast<std::uint32_t>(params.top_k));
  w.f32(static_cast<float>(params.aux_weight));
  w.f32s(params.w1.data());
  w.f32s(std::span<const double>(params.b1));
  w.f32s(params.w2.data());
  w.f32s(std::span<const double>(params.b2));
  return w.bytes();
}

RouterParams decode_router(std::span<const std::byte> bytes) {
  binary::Reader r(bytes);
  r.expect_magic("PTRR");
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kRouterFormatVersion) {
    throw FormatError("unsupported router version " + std::to_string(v), version_at);
  }
  const std::size_t dims_at = r.offset();
  const std::uint32_t d = r.u32("d");
  const std::uint32_t hidden = r.u32("hidden");
  const std::uint32_t k = r.u32("num_adapters");
  const std::uint32_t top_k = r.u32("top_k");
  if (d == 0 || hidden == 0 || k == 0 || top_k == 0 || top_k > k) throw FormatError("invalid router dimensions", dims_at);
  const double aux = r.f32("aux_weight");
  MatrixD w1(hidden, d);
  r.f32s(w1.data(), "W1");
  std::vector<double> b1(hidden);
  r.f32s(std::span<double>(b1), "b1");
  MatrixD w2(k, hidden);
  r.f32s(w2.data(), "W2");
  std::vector<double> b2(k);
  r.f32s(std::span<double>(b2), "b2");
  r.expect_end();
  return RouterParams{std::move(w1), std::move(b1), std::move(w2), std::move(b2), top_k, aux};
}

void save_router(const RouterParams& params, const std::filesystem::path& path) {
  binary::write_file(path, encode_router(params));
}

RouterParams load_router(const std::filesystem::path& path) { return decode_router(binary::read_file(path)); }

}  // namespace tokroute
