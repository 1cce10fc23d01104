#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/autodiff.hpp"
#include "anmt/checkpoint.hpp"
#include "anmt/corpus.hpp"
#include "anmt/model.hpp"

namespace anmt {

struct TrainConfig {
  double lr = 0.0001;
  long batch_size = 128;
  double clip = 5.0;
  long patience = 5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  long max_epochs = 100;

  void validate() const {
    if (lr <= 0) throw std::invalid_argument("learning rate must be positive");
    if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
    if (clip <= 0) throw std::invalid_argument("clip threshold must be positive");
    if (patience < 1) throw std::invalid_argument("patience must be at least 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
      throw std::invalid_argument("ADAM betas must lie in (0,1)");
  }
};

struct EpochLog {
  long epoch = 0;        // 1-based
  double train_loss = 0; // token-weighted mean NLL over the epoch
  double dev_nll = 0;
  double seconds = 0;
  bool improved = false;
};

using TrainLog = std::vector<EpochLog>;

/// One bias-corrected ADAM update over every parameter; `t` is the 1-based
/// global step count. Gradients are consumed (zeroed) by the update.
template <typename Real>
void adam_step(ParameterSet<Real>& params, const TrainConfig& cfg, long t) {
  if (t <= 0) throw std::invalid_argument("ADAM step count must be positive");
  const Real b1 = static_cast<Real>(cfg.adam_beta1);
  const Real b2 = static_cast<Real>(cfg.adam_beta2);
  const Real eps = static_cast<Real>(cfg.adam_eps);
  const Real lr = static_cast<Real>(cfg.lr);
  const Real corr1 = Real(1) - static_cast<Real>(std::pow(cfg.adam_beta1, static_cast<double>(t)));
  const Real corr2 = Real(1) - static_cast<Real>(std::pow(cfg.adam_beta2, static_cast<double>(t)));
  for (const auto& p : params) {
    for (long i = 0; i < p->value.size(); ++i) {
      const Real g = p->grad[i];
      p->adam_m[i] = b1 * p->adam_m[i] + (Real(1) - b1) * g;
      p->adam_v[i] = b2 * p->adam_v[i] + (Real(1) - b2) * g * g;
      const Real m_hat = p->adam_m[i] / corr1;
      const Real v_hat = p->adam_v[i] / corr2;
      p->value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    p->zero_grad();
  }
}

/// Runs the model over one epoch of shuffled mini-batches: forward, backward,
/// batch-size-normalized global-norm clipping, ADAM. `adam_t` persists across
/// epochs. Returns the token-weighted mean training loss.
template <typename Real>
double run_epoch(Model<Real>& m, const std::vector<SentencePair>& train, const TrainConfig& cfg,
                 long epoch, long& adam_t, std::mt19937_64& rng) {
  const uint64_t epoch_seed = cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(epoch));
  double total = 0;
  long tokens = 0;
  long batch_index = 0;
  for (const Batch& b : batches(train, cfg.batch_size, epoch_seed)) {
    Graph<Real> g;
    const NllResult<Real> r = sequence_nll(g, m, b, /*training=*/true, &rng);
    const double loss = static_cast<double>(g.value(r.loss)[0]);
    if (!std::isfinite(loss))
      throw std::runtime_error("non-finite loss in batch " + std::to_string(batch_index) +
                               " of epoch " + std::to_string(epoch));
    g.backward(r.loss);
    clip_global_norm(m.params, static_cast<Real>(cfg.clip), b.rows);
    adam_step(m.params, cfg, ++adam_t);
    total += loss * static_cast<double>(r.token_count);
    tokens += r.token_count;
    ++batch_index;
  }
  if (tokens == 0) throw std::runtime_error("training set has no target tokens");
  return total / static_cast<double>(tokens);
}

/// Early-stopping skeleton shared by real training and by tests that inject
/// synthetic loss sequences. Epochs are 1-based. An epoch improves only when
/// its dev loss is strictly below the best seen; after `patience` successive
/// non-improving epochs training stops and the best snapshot is restored.
inline TrainLog patience_loop(long max_epochs, long patience,
                              const std::function<double(long)>& run_epoch_fn,
                              const std::function<double()>& eval_fn,
                              const std::function<void()>& snapshot_fn,
                              const std::function<void()>& restore_fn,
                              const std::function<void(const EpochLog&)>& on_epoch = nullptr) {
  TrainLog log;
  double best = std::numeric_limits<double>::infinity();
  long stale = 0;
  bool have_snapshot = false;
  for (long epoch = 1; epoch <= max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = run_epoch_fn(epoch);
    e.dev_nll = eval_fn();
    if (e.dev_nll < best) {
      best = e.dev_nll;
      stale = 0;
      e.improved = true;
      snapshot_fn();
      have_snapshot = true;
    } else {
      ++stale;
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(e);
    if (on_epoch) on_epoch(e);
    if (stale >= patience) break;
  }
  if (have_snapshot) restore_fn();
  return log;
}

/// Full training run. The best-so-far checkpoint is held in memory and, when
/// `snapshot_path` is non-empty, mirrored to disk; on return the model holds
/// the best parameters.
template <typename Real>
TrainLog fit_with_patience(Model<Real>& m, const std::vector<SentencePair>& train,
                           const std::vector<SentencePair>& dev, const TrainConfig& cfg,
                           const std::string& snapshot_path = "",
                           const std::function<void(const EpochLog&)>& on_epoch = nullptr) {
  cfg.validate();
  if (train.empty()) throw std::runtime_error("training set is empty");
  if (dev.empty()) throw std::runtime_error("dev set is empty");
  std::mt19937_64 dropout_rng(cfg.seed);
  long adam_t = 0;
  std::vector<char> best_bytes;
  return patience_loop(
      cfg.max_epochs, cfg.patience,
      [&](long epoch) { return run_epoch(m, train, cfg, epoch, adam_t, dropout_rng); },
      [&] { return static_cast<double>(corpus_nll(m, dev, cfg.batch_size)); },
      [&] {
        best_bytes = checkpoint_bytes(m);
        if (!snapshot_path.empty()) save_checkpoint(m, snapshot_path);
      },
      [&] { restore_checkpoint_values(m, best_bytes); }, on_epoch);
}

}  // namespace anmt
