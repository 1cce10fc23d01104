#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/attention.hpp"
#include "anmt/autodiff.hpp"
#include "anmt/corpus.hpp"
#include "anmt/recurrent.hpp"
#include "anmt/tensor.hpp"

namespace anmt {

struct ModelConfig {
  long layers = 4;
  long units = 1000;
  long embedding_dim = 1000;
  long source_vocab_size = 0;
  long target_vocab_size = 0;
  ScoreKind score = ScoreKind::kDot;
  double dropout = 0.5;
  long max_len = kDefaultMaxLen;
  bool strict_zero_bias = false;
  double init_range = 0.05;

  void validate() const {
    if (layers < 1) throw std::invalid_argument("model needs at least one layer");
    if (units < 1) throw std::invalid_argument("units must be positive");
    if (embedding_dim != units)
      throw std::invalid_argument("embedding_dim must equal units (the output projection is tied "
                                  "to the embedding matrix)");
    if (source_vocab_size < kNumSpecials + 1 || target_vocab_size < kNumSpecials + 1)
      throw std::invalid_argument("vocabulary must hold at least one non-special entry");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
    if (max_len < 1) throw std::invalid_argument("max_len must be positive");
    if (init_range <= 0.0) throw std::invalid_argument("init_range must be positive");
  }
};

constexpr double kInitLow = -0.05;
constexpr double kInitHigh = 0.05;

/// Exact trainable scalar count for a config, enumerated from the parameter
/// list the model registers.
inline long count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const long n = cfg.units;
  const long d = cfg.embedding_dim;
  long total = 0;
  total += cfg.source_vocab_size * d;  // source embedding
  total += cfg.target_vocab_size * d;  // target embedding, tied with the output projection
  total += cfg.target_vocab_size;      // output bias
  for (int stack = 0; stack < 2; ++stack)
    for (long l = 0; l < cfg.layers; ++l) {
      const long in = l == 0 ? d : n;
      total += 4 * (n * in + n * n + n);
    }
  switch (cfg.score) {
    case ScoreKind::kDot: break;
    case ScoreKind::kGeneral: total += n * n; break;
    case ScoreKind::kConcat: total += 2 * n; break;
  }
  total += n * 2 * n + n;  // encoder-attention fuse
  total += n * n + n;      // self-attention score (W_s, v_s)
  total += n * 2 * n + n;  // self-attention fuse
  total += n * 2 * n + n;  // dual fuse
  return total;
}

/// Growing list of the decoder's own past top-layer states. Relevance
/// scores depend only on the stored state, so they are computed once when a
/// state is appended.
struct DecoderTrace {
  std::vector<Var> states;
  std::vector<Var> scores;

  bool empty() const { return states.empty(); }
};

/// One decoder step's exposed tensors: the encoder-attention fusion, the
/// self-attention fusion, their merge, and the next-word distribution.
struct StepOutput {
  Var h_enc_fused;   // tanh merge of the decoder state with the encoder context
  Var h_self_fused;  // tanh merge of the decoder state with the self-attention context
  Var h_merged;      // tanh merge of the two fusions, fed to the softmax
  Var logits;
  Var dist;          // invalid when the caller skipped the distribution
};

/// Encoder-decoder with attention over the encoder's memory buffer and over
/// the decoder's own past states, merged through a second concatenation
/// layer before the tied softmax.
template <typename Real>
struct Model {
  ModelConfig config;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  ParameterSet<Real> params;

  Parameter<Real>* source_embedding = nullptr;  // [V_src x d]
  Parameter<Real>* target_embedding = nullptr;  // [V_tgt x d], doubles as the output projection
  Parameter<Real>* output_bias = nullptr;       // [V_tgt]
  LstmStackParams<Real> encoder;
  LstmStackParams<Real> decoder;
  EncoderAttentionParams<Real> enc_attn;
  FuseParams<Real> enc_fuse;
  Parameter<Real>* self_w = nullptr;  // [n x n]
  Parameter<Real>* self_v = nullptr;  // [n]
  FuseParams<Real> self_fuse;
  FuseParams<Real> dual_fuse;

  Model(ModelConfig cfg, Vocabulary src_vocab, Vocabulary tgt_vocab)
      : config(cfg), source_vocab(std::move(src_vocab)), target_vocab(std::move(tgt_vocab)) {
    config.source_vocab_size = source_vocab.size();
    config.target_vocab_size = target_vocab.size();
    config.validate();
    const long n = config.units;
    const long d = config.embedding_dim;
    source_embedding = params.add("embed.src", Tensor<Real>(Shape{config.source_vocab_size, d}));
    target_embedding = params.add("embed.tgt", Tensor<Real>(Shape{config.target_vocab_size, d}));
    output_bias = params.add("out.bias", Tensor<Real>(Shape{config.target_vocab_size}));
    encoder = make_lstm_stack(params, "enc", config.layers, d, n);
    decoder = make_lstm_stack(params, "dec", config.layers, d, n);
    enc_attn.kind = config.score;
    if (config.score == ScoreKind::kGeneral)
      enc_attn.w_a = params.add("attn.enc.w_a", Tensor<Real>(Shape{n, n}));
    else if (config.score == ScoreKind::kConcat)
      enc_attn.w_a = params.add("attn.enc.w_a", Tensor<Real>(Shape{1, 2 * n}));
    enc_fuse.w = params.add("attn.enc.fuse.w", Tensor<Real>(Shape{n, 2 * n}));
    enc_fuse.b = params.add("attn.enc.fuse.b", Tensor<Real>(Shape{n}));
    self_w = params.add("attn.self.w_s", Tensor<Real>(Shape{n, n}));
    self_v = params.add("attn.self.v_s", Tensor<Real>(Shape{n}));
    self_fuse.w = params.add("attn.self.fuse.w", Tensor<Real>(Shape{n, 2 * n}));
    self_fuse.b = params.add("attn.self.fuse.b", Tensor<Real>(Shape{n}));
    dual_fuse.w = params.add("fuse.dual.w", Tensor<Real>(Shape{n, 2 * n}));
    dual_fuse.b = params.add("fuse.dual.b", Tensor<Real>(Shape{n}));
  }

  /// Weights uniform in [-init_range, init_range] (default 0.05), biases 0.
  /// The LSTM forget-gate bias is set to 1.0 unless strict_zero_bias is on.
  void init_params(std::mt19937_64& rng) {
    const Real r = Real(config.init_range);
    for (const auto& p : params)
      p->value = uniform_init<Real>(p->value.shape(), -r, r, rng);
    for (Parameter<Real>* b : bias_params()) b->value.fill(Real(0));
    if (!config.strict_zero_bias)
      for (const LstmStackParams<Real>* stack : {&encoder, &decoder})
        for (const auto& layer : stack->layers) layer.b_f->value.fill(Real(1));
  }

  std::vector<Parameter<Real>*> bias_params() const {
    std::vector<Parameter<Real>*> out = {output_bias, enc_fuse.b, self_fuse.b, dual_fuse.b};
    for (const LstmStackParams<Real>* stack : {&encoder, &decoder})
      for (const auto& layer : stack->layers)
        for (Parameter<Real>* b : {layer.b_i, layer.b_f, layer.b_o, layer.b_g}) out.push_back(b);
    return out;
  }

  EncoderMemory encode(Graph<Real>& g, const std::vector<int>& source_row, bool training,
                       std::mt19937_64* rng) const {
    return encode_sequence(g, source_row, g.leaf(source_embedding), encoder, config.units,
                           Real(config.dropout), training, rng);
  }
};

/// softmax(E h + b) with E the tied target embedding matrix.
template <typename Real>
Var output_logits(Graph<Real>& g, const Model<Real>& m, Var h) {
  return g.affine(g.leaf(m.target_embedding), h, g.leaf(m.output_bias));
}

template <typename Real>
Var output_distribution(Graph<Real>& g, const Model<Real>& m, Var h) {
  return g.softmax(output_logits(g, m, h));
}

/// One decoder step: embed the previous token, advance the stack, attend
/// over the encoder memory and over the trace of past decoder states, merge
/// both contexts, and project through the tied softmax. Appends the new top
/// state (and its cached relevance score) to the trace.
template <typename Real>
StepOutput decoder_timestep(Graph<Real>& g, const Model<Real>& m, int prev_token_id,
                            LstmStateVars& state, const EncoderMemory& memory, DecoderTrace& trace,
                            bool training, std::mt19937_64* rng, bool want_dist = true) {
  if (memory.states.empty()) throw std::invalid_argument("decoder needs a non-empty encoder memory");
  const Real rate = Real(m.config.dropout);
  const Var x = g.lookup_row(g.leaf(m.target_embedding), prev_token_id);
  const Var h_t = stack_step(g, x, state, m.decoder, rate, training, rng);

  const std::vector<Var> enc_s = encoder_scores(g, m.enc_attn, memory.states, h_t);
  const Var enc_w = attention_weights(g, enc_s);
  const Var enc_ctx = context_vector(g, enc_w, memory.states);
  const Var h_enc = concat_fuse(g, h_t, enc_ctx, m.enc_fuse);

  // At t=1 there is no past state; the empty weighted sum is a zero context
  // and the merge layer is applied all the same.
  Var self_ctx;
  if (trace.empty()) {
    self_ctx = g.zeros(m.config.units);
  } else {
    const Var self_weights = g.softmax(g.pack(trace.scores));
    self_ctx = context_vector(g, self_weights, trace.states);
  }
  const Var h_self = concat_fuse(g, h_t, self_ctx, m.self_fuse);

  const Var h_merged = concat_fuse(g, h_enc, h_self, m.dual_fuse);
  const Var h_out = g.dropout(h_merged, rate, training, rng);

  StepOutput out;
  out.h_enc_fused = h_enc;
  out.h_self_fused = h_self;
  out.h_merged = h_merged;
  out.logits = output_logits(g, m, h_out);
  if (want_dist) out.dist = g.softmax(out.logits);

  trace.states.push_back(h_t);
  trace.scores.push_back(self_score_single(g, m.self_w, m.self_v, h_t));
  return out;
}

template <typename Real>
struct NllResult {
  Var loss;          // scalar node: total cross-entropy / token count
  long token_count;  // non-PAD gold positions
};

/// Teacher-forced batch loss: the mean negative log probability of the gold
/// tokens over all non-PAD target positions. The decoder starts from a
/// per-layer copy of the encoder's final state.
template <typename Real>
NllResult<Real> sequence_nll(Graph<Real>& g, const Model<Real>& m, const Batch& batch,
                             bool training, std::mt19937_64* rng) {
  std::vector<Var> losses;
  long tokens = 0;
  for (long r = 0; r < batch.rows; ++r) {
    const EncoderMemory memory = m.encode(g, batch.source_row(r), training, rng);
    LstmStateVars state = memory.final_state;
    DecoderTrace trace;
    for (long t = 1; t < batch.target_width; ++t) {
      const int gold = batch.tgt(r, t);
      if (gold == kPadId) break;
      const int prev = batch.tgt(r, t - 1);
      const StepOutput step =
          decoder_timestep(g, m, prev, state, memory, trace, training, rng, /*want_dist=*/false);
      losses.push_back(g.cross_entropy(step.logits, gold));
      ++tokens;
    }
  }
  if (tokens == 0) throw std::runtime_error("batch has no target tokens");
  NllResult<Real> out;
  out.loss = g.scale(g.add_n(losses), Real(1) / static_cast<Real>(tokens));
  out.token_count = tokens;
  return out;
}

/// Convenience evaluation pass: token-averaged NLL over a padded corpus.
template <typename Real>
Real corpus_nll(const Model<Real>& m, const std::vector<SentencePair>& pairs, long batch_size) {
  double total = 0;
  long tokens = 0;
  for (const Batch& b : batches(pairs, batch_size, /*shuffle_seed=*/0)) {
    Graph<Real> g;
    const NllResult<Real> r = sequence_nll(g, m, b, /*training=*/false, nullptr);
    total += static_cast<double>(g.value(r.loss)[0]) * static_cast<double>(r.token_count);
    tokens += r.token_count;
  }
  return static_cast<Real>(total / static_cast<double>(tokens));
}

}  // namespace anmt
