#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include "anmt/training.hpp"

using namespace anmt;

namespace {

Vocabulary toy_vocab(int words) {
  Vocabulary v;
  for (int i = 1; i <= words; ++i) v.add("w" + std::to_string(i));
  return v;
}

ModelConfig tiny_config(long layers, long units) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.units = units;
  cfg.embedding_dim = units;
  cfg.dropout = 0.0;
  cfg.max_len = 6;
  return cfg;
}

std::vector<SentencePair> copy_data() {
  std::vector<SentencePair> raw;
  for (int a = 4; a <= 6; ++a)
    for (int b = 4; b <= 6; ++b) raw.push_back({{a, b, kEosId}, {a, b, kEosId}});
  return filter_and_pad(raw, 6, true);
}

/// Drives patience_loop with a canned dev sequence; the "model" is the
/// epoch number, snapshotted and restored like parameters would be.
struct SyntheticRun {
  TrainLog log;
  std::vector<long> snapshot_epochs;
  long restored_epoch = -1;

  explicit SyntheticRun(const std::vector<double>& dev, long max_epochs, long patience) {
    long current = 0;
    long held = -1;
    log = patience_loop(
        max_epochs, patience,
        [&](long epoch) {
          current = epoch;
          return 1.0;
        },
        [&] { return dev[static_cast<size_t>(current - 1)]; },
        [&] {
          held = current;
          snapshot_epochs.push_back(current);
        },
        [&] { restored_epoch = held; });
  }
};

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.lr = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.clip = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.max_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.adam_beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("first adam step moves by about the learning rate") {
  ParameterSet<double> params;
  auto* p = params.add("p", Tensor<double>(Shape{1}));
  p->grad[0] = 1.0;
  TrainConfig cfg;  // lr 0.0001
  adam_step(params, cfg, 1);
  // bias correction makes m_hat/sqrt(v_hat) = 1, so the move is lr/(1 + eps)
  CHECK(p->value[0] == Catch::Approx(-0.0001).margin(1e-10));
  CHECK(p->grad[0] == 0.0);  // gradients are consumed

  CHECK_THROWS_AS(adam_step(params, cfg, 0), std::invalid_argument);
}

TEST_CASE("zero gradient with zero moments leaves the value in place") {
  ParameterSet<double> params;
  auto* p = params.add("p", Tensor<double>(Shape{2}, {0.5, -0.25}));
  TrainConfig cfg;
  adam_step(params, cfg, 1);
  CHECK(p->value[0] == 0.5);
  CHECK(p->value[1] == -0.25);
}

TEST_CASE("identical gradients get identical updates") {
  ParameterSet<double> params;
  auto* a = params.add("a", Tensor<double>(Shape{1}));
  auto* b = params.add("b", Tensor<double>(Shape{1}));
  a->grad[0] = 0.37;
  b->grad[0] = 0.37;
  TrainConfig cfg;
  for (long t = 1; t <= 5; ++t) {
    a->grad[0] = 0.37;
    b->grad[0] = 0.37;
    adam_step(params, cfg, t);
    CHECK(a->value[0] == b->value[0]);
  }
}

TEST_CASE("lr zero leaves every parameter bitwise unchanged over an epoch") {
  Model<float> m(tiny_config(1, 3), toy_vocab(3), toy_vocab(3));
  std::mt19937_64 rng(4);
  m.init_params(rng);
  std::vector<Tensor<float>> before;
  for (const auto& p : m.params) before.push_back(p->value);

  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.batch_size = 4;
  long adam_t = 0;
  std::mt19937_64 dropout_rng(1);
  run_epoch(m, copy_data(), cfg, 1, adam_t, dropout_rng);
  CHECK(adam_t > 0);
  for (size_t i = 0; i < m.params.size(); ++i)
    for (long k = 0; k < before[i].size(); ++k) CHECK(m.params[i]->value[k] == before[i][k]);
}

TEST_CASE("an epoch is reproducible from its seeds") {
  const auto run = [] {
    ModelConfig mc = tiny_config(1, 3);
    mc.dropout = 0.3;
    Model<float> m(mc, toy_vocab(3), toy_vocab(3));
    std::mt19937_64 rng(11);
    m.init_params(rng);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.batch_size = 2;
    cfg.seed = 21;
    long adam_t = 0;
    std::mt19937_64 dropout_rng(cfg.seed);
    return run_epoch(m, copy_data(), cfg, 1, adam_t, dropout_rng);
  };
  CHECK(run() == run());
}

TEST_CASE("an epoch actually reduces the toy loss") {
  Model<float> m(tiny_config(1, 8), toy_vocab(3), toy_vocab(3));
  std::mt19937_64 rng(6);
  m.init_params(rng);
  const auto data = copy_data();
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 1;
  long adam_t = 0;
  std::mt19937_64 dropout_rng(1);
  const double first = run_epoch(m, data, cfg, 1, adam_t, dropout_rng);
  double last = first;
  for (long e = 2; e <= 5; ++e) last = run_epoch(m, data, cfg, e, adam_t, dropout_rng);
  CHECK(last < first);
}

TEST_CASE("non-finite loss aborts the epoch with a located error") {
  Model<float> m(tiny_config(1, 2), toy_vocab(3), toy_vocab(3));
  m.params[0]->value.fill(std::numeric_limits<float>::quiet_NaN());
  TrainConfig cfg;
  long adam_t = 0;
  std::mt19937_64 dropout_rng(1);
  CHECK_THROWS_WITH(run_epoch(m, copy_data(), cfg, 3, adam_t, dropout_rng),
                    Catch::Matchers::ContainsSubstring("epoch 3"));
}

TEST_CASE("patience waits through a plateau then restores the best epoch") {
  // improves at 2, then five stale epochs stop the run after epoch 7
  const SyntheticRun run({3.0, 2.5, 2.6, 2.7, 2.8, 2.9, 3.0, 9.9}, 50, 5);
  CHECK(run.log.size() == 7);
  CHECK(run.restored_epoch == 2);
  CHECK(run.snapshot_epochs == std::vector<long>{1, 2});
  CHECK(run.log[1].improved);
  CHECK_FALSE(run.log[2].improved);
}

TEST_CASE("three improvements then a flat tail stop at epoch eight") {
  const SyntheticRun run({3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}, 50, 5);
  CHECK(run.log.size() == 8);
  CHECK(run.restored_epoch == 3);
}

TEST_CASE("patience one gives up after the first stale epoch") {
  const SyntheticRun run({2.0, 3.0, 1.0}, 50, 1);
  CHECK(run.log.size() == 2);
  CHECK(run.restored_epoch == 1);
}

TEST_CASE("a tie does not count as improvement") {
  const SyntheticRun run({2.0, 2.0, 2.0}, 50, 2);
  CHECK(run.log.size() == 3);
  CHECK(run.restored_epoch == 1);
}

TEST_CASE("an improvement resets the stale counter") {
  const SyntheticRun run({5.0, 4.0, 6.0, 6.0, 3.0, 6.0, 6.0, 6.0, 6.0}, 50, 3);
  CHECK(run.log.size() == 8);
  CHECK(run.restored_epoch == 5);
}

TEST_CASE("the epoch cap ends an always-improving run") {
  const SyntheticRun run({5.0, 4.0, 3.0, 2.0, 1.0, 0.5}, 4, 5);
  CHECK(run.log.size() == 4);
  CHECK(run.restored_epoch == 4);
}

TEST_CASE("fit_with_patience trains, logs and restores the best model") {
  ModelConfig mc = tiny_config(1, 8);
  Model<float> m(mc, toy_vocab(3), toy_vocab(3));
  std::mt19937_64 rng(5);
  m.init_params(rng);

  const auto data = copy_data();
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 2;
  cfg.max_epochs = 4;
  cfg.patience = 5;

  const auto snapshot =
      (std::filesystem::temp_directory_path() / "anmt_fit_test.ckpt").string();
  const TrainLog log = fit_with_patience(m, data, data, cfg, snapshot);
  REQUIRE(!log.empty());
  CHECK(log.size() <= 4);
  for (size_t i = 0; i < log.size(); ++i) CHECK(log[i].epoch == static_cast<long>(i) + 1);
  CHECK(log[0].improved);  // first epoch always beats infinity

  double best = log[0].dev_nll;
  for (const EpochLog& e : log) best = std::min(best, e.dev_nll);
  // the restored model scores exactly the best recorded dev NLL
  CHECK(static_cast<double>(corpus_nll(m, data, cfg.batch_size)) == Catch::Approx(best));

  CHECK(std::filesystem::exists(snapshot));
  CHECK_FALSE(std::filesystem::exists(snapshot + ".tmp"));
  std::filesystem::remove(snapshot);

  CHECK_THROWS_AS(fit_with_patience(m, {}, data, cfg), std::runtime_error);
  CHECK_THROWS_AS(fit_with_patience(m, data, {}, cfg), std::runtime_error);
}
