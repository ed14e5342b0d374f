#include <cmath>
#include <cstdio>
#include <random>

#include "acdnet/checkpoint.hpp"
#include "acdnet/metrics.hpp"
#include "acdnet/presets.hpp"
#include "acdnet/train.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace acdnet;

TEST_CASE("set metrics match hand-worked examples") {
  CHECK(metric_jaccard({0, 1, 2}, {1, 2, 3}) == doctest::Approx(2.0 / 4.0));
  CHECK(metric_jaccard({}, {}) == 0.0);
  CHECK(metric_jaccard({1}, {1}) == 1.0);
  CHECK(metric_f1({0, 1}, {1, 2, 3}) ==
        doctest::Approx(2.0 * 0.5 * (1.0 / 3.0) / (0.5 + 1.0 / 3.0)));
  CHECK(metric_f1({0}, {}) == 0.0);
}

TEST_CASE("ranking metrics match hand-worked examples") {
  // truth {0, 3} under scores ranking 2,0,3,1: hits at ranks 2 and 3
  std::vector<double> scores = {0.8, 0.1, 0.9, 0.7};
  std::vector<std::size_t> truth = {0, 3};
  CHECK(average_precision(scores, truth) ==
        doctest::Approx((1.0 / 2.0 + 2.0 / 3.0) / 2.0));
  auto [p2, n2] = metric_topk(scores, truth, 2);
  CHECK(p2 == doctest::Approx(0.5));
  CHECK(n2 == doctest::Approx((1.0 / std::log2(3.0)) /
                              (1.0 + 1.0 / std::log2(3.0))));
  CHECK_THROWS_AS(metric_topk(scores, truth, 0), std::invalid_argument);
  CHECK_THROWS_AS(metric_topk(scores, truth, 5), std::invalid_argument);
}

TEST_CASE("interaction rate counts flagged prediction pairs") {
  std::size_t n = 4;
  std::vector<std::uint8_t> ddi(n * n, 0);
  ddi[0 * n + 1] = ddi[1 * n + 0] = 1;
  // visit 1: pairs (0,1),(0,2),(1,2), one flagged; visit 2 skipped
  double rate = metric_ddi_rate({{0, 1, 2}, {3}}, ddi, n);
  CHECK(rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics agree with the reference implementations") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 5 + rng() % 30;
    std::vector<double> scores(n);
    for (auto& s : scores) s = u(rng);
    std::vector<std::size_t> truth, pred;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 3 == 0) truth.push_back(i);
      if (rng() % 3 == 0) pred.push_back(i);
    }
    CHECK(metric_jaccard(pred, truth) ==
          doctest::Approx(oracle::jaccard(pred, truth)).epsilon(1e-12));
    CHECK(metric_f1(pred, truth) ==
          doctest::Approx(oracle::f1(pred, truth)).epsilon(1e-12));
    CHECK(average_precision(scores, truth) ==
          doctest::Approx(oracle::average_precision(scores, truth))
              .epsilon(1e-12));
    auto [p5, n5] = metric_topk(scores, truth, 5);
    if (truth.empty()) {
      CHECK(p5 == 0.0);
    } else {
      CHECK(p5 == doctest::Approx(oracle::precision_at(scores, truth, 5))
                      .epsilon(1e-12));
      CHECK(n5 == doctest::Approx(oracle::ndcg_at(scores, truth, 5))
                      .epsilon(1e-12));
    }
  }
}

TEST_CASE("the combined loss interpolates its two terms") {
  Tensor probs = Tensor::from({4}, {0.9, 0.1, 0.7, 0.4});
  std::vector<std::size_t> truth = {0, 2};
  std::vector<double> target = {1, 0, 1, 0};

  double bce = bce_sum(probs, target).item();
  double margin = margin_loss(probs, target).item();
  CHECK(combined_loss(probs, truth, 4, 1.0).item() == bce);
  CHECK(combined_loss(probs, truth, 4, 0.0).item() == margin);
  CHECK(combined_loss(probs, truth, 4, 0.97).item() ==
        doctest::Approx(0.97 * bce + 0.03 * margin).epsilon(1e-12));

  double expect_bce = -(std::log(0.9) + std::log(0.9) + std::log(0.7) +
                        std::log(0.6));
  CHECK(bce == doctest::Approx(expect_bce).epsilon(1e-12));
  // hinge terms: (0,1)->0.2, (0,3)->0.5, (2,1)->0.4, (2,3)->0.7 over 4 labels
  CHECK(margin == doctest::Approx((0.2 + 0.5 + 0.4 + 0.7) / 4.0)
                      .epsilon(1e-12));
}

namespace {
struct TinyWorld {
  Dataset ds;
  ModelConfig mc;
  TinyWorld() {
    GenConfig g = presets::overfit_corpus();
    g.n_patients = 10;
    g.n_medicines = 8;
    g.n_diagnoses = 12;
    g.n_procedures = 6;
    g.ddi_pairs = 4;
    g.atom_max = 8;
    ds = generate_synthetic(g, 21);
    mc.encoder.dim = 8;
    mc.encoder.heads = 2;
    mc.encoder.layers = 1;
    mc.atom_type_count = g.atom_type_count;
  }
};
}  // namespace

TEST_CASE("a few epochs reduce the training loss") {
  TinyWorld w;
  AcdNet model(w.ds.vocab, w.mc, Variant::Full, 1);
  model.set_graphs(w.ds.graphs);
  TrainConfig tc;
  tc.epochs = 8;
  tc.seed = 1;
  Adam opt(tc.lr);
  double first = train_epoch(model, w.ds.patients, opt, tc, 0);
  double last = first;
  for (std::size_t e = 1; e < tc.epochs; ++e)
    last = train_epoch(model, w.ds.patients, opt, tc, e);
  CHECK(last < first);
}

TEST_CASE("training is reproducible for a fixed seed") {
  TinyWorld w;
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 3;
  Split split = split_dataset(w.ds.patients, 3);

  std::vector<double> first_run;
  for (int run = 0; run < 2; ++run) {
    AcdNet model(w.ds.vocab, w.mc, Variant::Full, 5);
    model.set_graphs(w.ds.graphs);
    TrainResult res = train_model(model, split, w.ds.graphs, tc);
    if (run == 0)
      first_run = res.train_loss;
    else
      CHECK(res.train_loss == first_run);
  }
}

TEST_CASE("checkpoints restore a model exactly") {
  TinyWorld w;
  AcdNet model(w.ds.vocab, w.mc, Variant::Full, 9);
  model.set_graphs(w.ds.graphs);
  TrainConfig tc;
  tc.epochs = 1;
  Adam opt(tc.lr);
  train_epoch(model, w.ds.patients, opt, tc, 0);

  std::string path = "test_train_ckpt.bin";
  save_checkpoint(model.params(), model.config_snapshot_json(), path);

  ParamRegistry loaded;
  std::string snapshot = load_checkpoint(loaded, path);
  AcdNet restored = AcdNet::from_snapshot_json(snapshot);
  restored.set_graphs(w.ds.graphs);
  for (const auto& [name, t] : loaded.items()) {
    Tensor dst = restored.params().get(name);
    dst.data() = t.data();
  }
  std::remove(path.c_str());

  auto a = score_patients(model, w.ds.patients);
  auto b = score_patients(restored, w.ds.patients);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].scores == b[i].scores);
}

TEST_CASE("bootstrap resampling is seeded and sized correctly") {
  TinyWorld w;
  AcdNet model(w.ds.vocab, w.mc, Variant::Full, 2);
  model.set_graphs(w.ds.graphs);

  EvalReport r1 = bootstrap_eval(model, w.ds.patients, w.ds.graphs, 5, 0.8,
                                 123, 0.5);
  CHECK(r1.sample_size == 8);  // floor(0.8 * 10)
  EvalReport r2 = bootstrap_eval(model, w.ds.patients, w.ds.graphs, 5, 0.8,
                                 123, 0.5);
  for (std::size_t i = 0; i < r1.entries.size(); ++i) {
    CHECK(r1.entries[i].mean == r2.entries[i].mean);
    CHECK(r1.entries[i].stddev == r2.entries[i].stddev);
  }

  EvalReport one = bootstrap_eval(model, w.ds.patients, w.ds.graphs, 1, 0.8,
                                  123, 0.5);
  for (const auto& e : one.entries) CHECK(e.stddev == 0.0);

  CHECK_THROWS_AS(bootstrap_eval(model, w.ds.patients, w.ds.graphs, 0, 0.8,
                                 1, 0.5),
                  ConfigError);
  CHECK_THROWS_AS(bootstrap_eval(model, w.ds.patients, w.ds.graphs, 5, 1.5,
                                 1, 0.5),
                  ConfigError);
}
