#include "tokroute/molora.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "tokroute/dispatch.h"
#include "tokroute/errors.h"
#include "tokroute/synthetic.h"

namespace tokroute {
namespace {

MatrixD random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixD m(r, c);
  for (double& v : m.data()) v = g(rng);
  return m;
}

std::vector<AdapterD> random_adapters(std::size_t count, std::size_t d, std::size_t r, std::mt19937_64& rng) {
  std::vector<AdapterD> out;
  for (std::size_t j = 0; j < count; ++j) out.push_back({random_matrix(d, r, rng, 0.5), random_matrix(r, d, rng, 0.5)});
  return out;
}

TEST(RouterForwardTest, ZeroParamsGiveBias) {
  RouterParams p = RouterParams::init(4, 3, 0, 8);
  p.w1 = MatrixD(8, 4);
  p.w2 = MatrixD(3, 8);
  p.b2 = {0.5, -1.0, 2.0};
  EXPECT_EQ(router_forward(std::vector<double>{1, 2, 3, 4}, p), (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(RouterForwardTest, ZeroInputPassesBiasThroughGelu) {
  RouterParams p = RouterParams::init(2, 2, 0, 1);
  p.b1 = {1.0};
  p.w2 = MatrixD(2, 1, std::vector<double>{2.0, -1.0});
  const auto g = router_forward(std::vector<double>{0, 0}, p);
  EXPECT_NEAR(g[0], 2.0 * 0.8411919906082768, 1e-12);
  EXPECT_NEAR(g[1], -0.8411919906082768, 1e-12);
  EXPECT_THROW(router_forward(std::vector<double>{0}, p), ShapeError);
}

TEST(TopKTest, KnownExample) {
  const auto t = topk_softmax(std::vector<double>{2, 1, 0, -1}, 2);
  EXPECT_EQ(t.indices, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_NEAR(t.weights[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(t.weights[1], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
}

TEST(TopKTest, TiesAndEdgeCases) {
  const auto tie = topk_softmax(std::vector<double>{1, 3, 3, 0}, 2);
  EXPECT_EQ(tie.indices, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(tie.weights, (std::vector<double>{0.5, 0.5}));
  const auto one = topk_softmax(std::vector<double>{0.1, 0.7, 0.2}, 1);
  EXPECT_EQ(one.indices, (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(one.weights, (std::vector<double>{1.0}));
  const auto all = topk_softmax(std::vector<double>{0.0, std::log(3.0)}, 2);
  EXPECT_EQ(all.indices, (std::vector<std::uint32_t>{1, 0}));
  EXPECT_NEAR(all.weights[0], 0.75, 1e-15);
  EXPECT_THROW(topk_softmax(std::vector<double>{1, 2}, 3), ShapeError);
  EXPECT_THROW(topk_softmax(std::vector<double>{1, 2}, 0), ShapeError);
}

TEST(TopKTest, ShiftInvariantAndNormalized) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k_total = 1 + rng() % 8;
    const std::size_t k = 1 + rng() % k_total;
    std::vector<double> logits(k_total);
    for (double& v : logits) v = g(rng);
    const auto a = topk_softmax(logits, k);
    for (double& v : logits) v += 17.25;
    const auto b = topk_softmax(logits, k);
    EXPECT_EQ(a.indices, b.indices);
    double sum = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      EXPECT_GT(a.weights[s], 0.0);
      EXPECT_NEAR(a.weights[s], b.weights[s], 1e-12);
      if (s > 0) {
        EXPECT_GE(a.weights[s - 1], a.weights[s]);
      }
      sum += a.weights[s];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(MoloraForwardTest, GroupedMatchesReference) {
  std::mt19937_64 rng(12);
  for (std::size_t k : {1u, 2u, 3u}) {
    RouterParams p = RouterParams::init(12, 4, 100 + k, 16, k);
    const auto adapters = random_adapters(4, 12, 3, rng);
    const MatrixD x = random_matrix(200, 12, rng);
    const auto out = molora_forward(x, p, adapters);
    const auto ref = molora_forward_reference(x, p, adapters);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.delta.data()[i], ref.data()[i], 1e-12);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto row = out.probs.row(i);
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
      EXPECT_EQ(out.top1[i], out.selections[i].indices[0]);
    }
    const auto d = learned_decision(out);
    EXPECT_EQ(d.provenance, Provenance::learned);
    EXPECT_EQ(d.targets, out.top1);
  }
}

TEST(MoloraForwardTest, SingleAdapterIsPlainLora) {
  std::mt19937_64 rng(1);
  const RouterParams p = RouterParams::init(6, 1, 3, 8, 1);
  const auto adapters = random_adapters(1, 6, 2, rng);
  const MatrixD x = random_matrix(10, 6, rng);
  const MatrixD expect = matmul(matmul(x, adapters[0].a), adapters[0].b);
  const auto out = molora_forward(x, p, adapters);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out.delta.data()[i], expect.data()[i], 1e-12);
}

TEST(MoloraForwardTest, IdenticalAdaptersIgnoreRouting) {
  std::mt19937_64 rng(2);
  const RouterParams p = RouterParams::init(6, 3, 3, 8, 2);
  const auto one = random_adapters(1, 6, 2, rng);
  const std::vector<AdapterD> adapters(3, one[0]);
  const MatrixD x = random_matrix(20, 6, rng);
  const MatrixD expect = matmul(matmul(x, one[0].a), one[0].b);
  const auto out = molora_forward(x, p, adapters);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out.delta.data()[i], expect.data()[i], 1e-12);
}

// A dominant logit drives the mixture to that adapter alone.
TEST(MoloraForwardTest, DominantLogitLimit) {
  std::mt19937_64 rng(3);
  RouterParams p = RouterParams::init(5, 3, 4, 4, 2);
  p.w2 = MatrixD(3, 4);
  p.b2 = {0.0, 60.0, 0.0};
  const auto adapters = random_adapters(3, 5, 2, rng);
  const MatrixD x = random_matrix(8, 5, rng);
  const MatrixD expect = matmul(matmul(x, adapters[1].a), adapters[1].b);
  const auto out = molora_forward(x, p, adapters);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out.delta.data()[i], expect.data()[i], 1e-12);
}

TEST(MoloraForwardTest, RunsThroughDispatchPrimitives) {
  std::mt19937_64 rng(4);
  RouterParams p = RouterParams::init(4, 3, 5, 4, 2);
  p.w2 = MatrixD(3, 4);
  p.b2 = {3.0, 2.0, 1.0};  // every token picks adapters 0 then 1
  const auto adapters = random_adapters(3, 4, 2, rng);
  reset_dispatch_counters();
  molora_forward(random_matrix(16, 4, rng), p, adapters);
  const auto c = dispatch_counters();
  EXPECT_EQ(c.build_dispatch, 2u);
  EXPECT_EQ(c.gather, 2u);
  EXPECT_EQ(c.scatter, 2u);
}

TEST(AuxLossTest, KnownValues) {
  EXPECT_DOUBLE_EQ(aux_loss(MatrixD(4, 4, 0.25), std::vector<std::uint32_t>{0, 1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(aux_loss(MatrixD(4, 4, 0.25), std::vector<std::uint32_t>{0, 0, 0, 0}), 1.0);
  MatrixD collapsed(3, 4);
  for (std::size_t i = 0; i < 3; ++i) collapsed(i, 2) = 1.0;
  EXPECT_DOUBLE_EQ(aux_loss(collapsed, std::vector<std::uint32_t>{2, 2, 2}), 4.0);
  const MatrixD mixed(2, 2, std::vector<double>{0.75, 0.25, 0.75, 0.25});
  EXPECT_DOUBLE_EQ(aux_loss(mixed, std::vector<std::uint32_t>{0, 0}), 1.5);
  EXPECT_THROW(aux_loss(mixed, std::vector<std::uint32_t>{0}), ShapeError);
  EXPECT_THROW(aux_loss(mixed, std::vector<std::uint32_t>{0, 2}), IndexError);
}

TEST(AuxLossTest, BoundedByK) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20, k = 2 + rng() % 5;
    MatrixD probs(n, k);
    std::vector<std::uint32_t> top1(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (double& v : probs.row(i)) sum += (v = u(rng));
      for (double& v : probs.row(i)) v /= sum;
      const auto row = probs.row(i);
      top1[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    const double a = aux_loss(probs, top1);
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, static_cast<double>(k) + 1e-12);
  }
}

struct GradCase {
  MoloraModel model;
  Dataset data;
};

GradCase make_grad_case(std::uint64_t seed, TaskKind task) {
  std::mt19937_64 rng(seed);
  const std::size_t d = 5, k = 3, n = 7;
  RouterParams router = RouterParams::init(d, k, seed, 6, 2, 0.3);
  for (double& v : router.b1) v = 0.1 * static_cast<double>(rng() % 7) - 0.3;
  Dataset data{random_matrix(n, d, rng), {}, {}};
  if (task == TaskKind::regression) {
    data.targets.resize(n * d);
    std::normal_distribution<double> g;
    for (double& v : data.targets) v = g(rng);
  }
  for (std::size_t i = 0; i < n; ++i) data.labels.push_back(static_cast<std::uint32_t>(rng() % k));
  return {MoloraModel{std::move(router), random_adapters(k, d, 2, rng)}, std::move(data)};
}

// Central differences against the analytic gradient, top-k selections fixed.
void check_gradients(GradCase& c, TaskKind task, RoutingStrategy strategy) {
  std::vector<std::uint32_t> rows(c.data.size());
  std::iota(rows.begin(), rows.end(), 0u);
  const Selections sel = select_adapters(c.model, c.data, rows, strategy);
  Gradients grad(c.model);
  molora_loss(c.model, c.data, rows, sel, task, strategy, &grad);

  const double h = 1e-6;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = molora_loss(c.model, c.data, rows, sel, task, strategy).total;
    param = saved - h;
    const double down = molora_loss(c.model, c.data, rows, sel, task, strategy).total;
    param = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_NEAR(analytic, numeric, 1e-6 * (1.0 + std::abs(numeric)));
  };
  auto& r = c.model.router;
  for (std::size_t i = 0; i < r.w1.size(); ++i) probe(r.w1.data()[i], grad.w1.data()[i]);
  for (std::size_t i = 0; i < r.b1.size(); ++i) probe(r.b1[i], grad.b1[i]);
  for (std::size_t i = 0; i < r.w2.size(); ++i) probe(r.w2.data()[i], grad.w2.data()[i]);
  for (std::size_t i = 0; i < r.b2.size(); ++i) probe(r.b2[i], grad.b2[i]);
  for (std::size_t j = 0; j < c.model.adapters.size(); ++j) {
    auto& ad = c.model.adapters[j];
    for (std::size_t i = 0; i < ad.a.size(); ++i) probe(ad.a.data()[i], grad.adapters[j].a.data()[i]);
    for (std::size_t i = 0; i < ad.b.size(); ++i) probe(ad.b.data()[i], grad.adapters[j].b.data()[i]);
  }
}

TEST(GradientTest, RegressionLearnedMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = make_grad_case(seed, TaskKind::regression);
    check_gradients(c, TaskKind::regression, RoutingStrategy::learned);
  }
}

TEST(GradientTest, RegressionOracleMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = make_grad_case(seed, TaskKind::regression);
    check_gradients(c, TaskKind::regression, RoutingStrategy::oracle);
  }
}

TEST(GradientTest, ClassificationMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = make_grad_case(seed, TaskKind::classification);
    check_gradients(c, TaskKind::classification, RoutingStrategy::learned);
  }
}

Dataset small_task(std::uint64_t seed) {
  MultimodalParams mp;
  mp.samples = 120;
  mp.dim = 8;
  mp.rank = 2;
  mp.mean_scale = 4.0;
  mp.seed = seed;
  return make_multimodal_task(mp);
}

TEST(TrainRouterTest, ZeroLearningRateKeepsLossFlat) {
  const Dataset data = small_task(1);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 0.0;
  MoloraModel model{RouterParams::init(8, 3, 2, 16), init_adapters(3, 8, 2, 3)};
  const auto res = train_router(data, model, cfg);
  ASSERT_EQ(res.history.size(), 6u);
  for (const auto& rec : res.history) {
    EXPECT_EQ(rec.task_loss, res.history.front().task_loss);
    EXPECT_EQ(rec.ari, res.history.front().ari);
  }
  EXPECT_EQ(res.history.front().epoch, 0u);
  EXPECT_EQ(res.history.back().epoch, 5u);
}

TEST(TrainRouterTest, DeterministicAndDecreasing) {
  const Dataset data = small_task(2);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 0.05;
  cfg.batch_size = 32;
  cfg.seed = 9;
  const MoloraModel model{RouterParams::init(8, 3, 4, 16), init_adapters(3, 8, 2, 5)};
  const auto a = train_router(data, model, cfg);
  const auto b = train_router(data, model, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].task_loss, b.history[e].task_loss);
  EXPECT_EQ(a.model.router.w1, b.model.router.w1);
  EXPECT_LT(a.history.back().task_loss, a.history.front().task_loss);
}

TEST(TrainRouterTest, DivergenceRaisesTrainingError) {
  Dataset data = small_task(3);
  for (double& v : data.features.data()) v *= 1e3;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e6;
  const MoloraModel model{RouterParams::init(8, 3, 4, 16), init_adapters(3, 8, 2, 5)};
  try {
    train_router(data, model, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1u);
  }
}

TEST(RouterFormatTest, RoundTripIsExactForF32Values) {
  RouterParams p = RouterParams::init(6, 4, 7, 5, 3, 0.25);
  for (double& v : p.w1.data()) v = static_cast<float>(v);
  for (double& v : p.w2.data()) v = static_cast<float>(v);
  p.b1 = {0.5, -0.25, 1.0, 0.0, 2.0};
  p.b2 = {1, 2, 3, 4};
  const auto bytes = encode_router(p);
  EXPECT_EQ(bytes.size(), 4 + 5 * 4 + 4 + 4 * (30 + 5 + 20 + 4));
  const RouterParams q = decode_router(bytes);
  EXPECT_EQ(q.w1, p.w1);
  EXPECT_EQ(q.b1, p.b1);
  EXPECT_EQ(q.w2, p.w2);
  EXPECT_EQ(q.b2, p.b2);
  EXPECT_EQ(q.top_k, 3u);
  EXPECT_EQ(q.aux_weight, 0.25);

  const auto path = std::filesystem::temp_directory_path() / "tokroute_router_test.ptrr";
  save_router(p, path);
  EXPECT_EQ(load_router(path).w2, p.w2);
  std::filesystem::remove(path);
}

TEST(RouterFormatTest, RejectsCorruptInput) {
  const auto good = encode_router(RouterParams::init(3, 2, 1, 2, 1));
  auto bad_magic = good;
  bad_magic[1] = std::byte{'X'};
  try {
    decode_router(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 1u);
  }
  auto bad_version = good;
  bad_version[4] = std::byte{2};
  EXPECT_THROW(decode_router(bad_version), FormatError);
  auto bad_topk = good;
  bad_topk[20] = std::byte{3};  // top_k > K
  EXPECT_THROW(decode_router(bad_topk), FormatError);
  EXPECT_THROW(decode_router(std::span(good).first(good.size() - 1)), FormatError);
  auto trailing = good;
  trailing.push_back(std::byte{0});
  EXPECT_THROW(decode_router(trailing), FormatError);
}

}  // namespace
}  // namespace tokroute
