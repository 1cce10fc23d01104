#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/autodiff.hpp"
#include "anmt/tensor.hpp"

namespace anmt {

/// Content function used to score encoder states against the decoder state.
enum class ScoreKind { kDot, kGeneral, kConcat };

inline const char* score_kind_name(ScoreKind k) {
  switch (k) {
    case ScoreKind::kDot: return "dot";
    case ScoreKind::kGeneral: return "general";
    case ScoreKind::kConcat: return "concat";
  }
  return "dot";
}

inline ScoreKind parse_score_kind(const std::string& s) {
  if (s == "dot") return ScoreKind::kDot;
  if (s == "general") return ScoreKind::kGeneral;
  if (s == "concat") return ScoreKind::kConcat;
  throw std::invalid_argument("unknown score kind: " + s + " (expected dot, general or concat)");
}

template <typename Real>
struct FuseParams {
  Parameter<Real>* w;
  Parameter<Real>* b;
};

template <typename Real>
struct EncoderAttentionParams {
  ScoreKind kind = ScoreKind::kDot;
  Parameter<Real>* w_a = nullptr;  // [n x n] for general, [1 x 2n] for concat, absent for dot
};

/// Scores one encoder state against the current decoder state.
///   dot:     h_i . h_t          (requires equal widths)
///   general: h_i . (W_a h_t)
///   concat:  w_a [h_i; h_t]     (w_a is a single learned row, so the score
///                                is a scalar)
template <typename Real>
Var encoder_score(Graph<Real>& g, const EncoderAttentionParams<Real>& p, Var h_i_enc, Var h_t_dec) {
  switch (p.kind) {
    case ScoreKind::kDot:
      if (g.size(h_i_enc) != g.size(h_t_dec))
        throw std::invalid_argument("dot score requires equal encoder/decoder widths: " +
                                    std::to_string(g.size(h_i_enc)) + " vs " +
                                    std::to_string(g.size(h_t_dec)));
      return g.dot(h_i_enc, h_t_dec);
    case ScoreKind::kGeneral:
      return g.dot(h_i_enc, g.matvec(g.leaf(p.w_a), h_t_dec));
    case ScoreKind::kConcat:
      return g.matvec(g.leaf(p.w_a), g.concat(h_i_enc, h_t_dec));
  }
  throw std::logic_error("unreachable");
}

/// Scores every state in `states` against h_t, sharing the W_a h_t product
/// across positions for the general kind.
template <typename Real>
std::vector<Var> encoder_scores(Graph<Real>& g, const EncoderAttentionParams<Real>& p,
                                const std::vector<Var>& states, Var h_t_dec) {
  std::vector<Var> scores;
  scores.reserve(states.size());
  if (p.kind == ScoreKind::kGeneral) {
    const Var projected = g.matvec(g.leaf(p.w_a), h_t_dec);
    for (Var h : states) scores.push_back(g.dot(h, projected));
    return scores;
  }
  for (Var h : states) scores.push_back(encoder_score(g, p, h, h_t_dec));
  return scores;
}

/// Relevance of a past decoder state, independent of the current state:
/// v_s . tanh(W_s h_i).
template <typename Real>
Var self_score_single(Graph<Real>& g, Parameter<Real>* w_s, Parameter<Real>* v_s, Var h_i_dec) {
  return g.dot(g.leaf(v_s), g.tanh(g.matvec(g.leaf(w_s), h_i_dec)));
}

template <typename Real>
Var attention_weights(Graph<Real>& g, const std::vector<Var>& scores) {
  if (scores.empty()) throw std::invalid_argument("attention over empty set");
  return g.softmax(g.pack(scores));
}

/// Value-level masked normalization, for callers outside a graph.
template <typename Real>
Tensor<Real> attention_weights(const Tensor<Real>& scores, const Tensor<Real>& mask) {
  return softmax_stable(scores, &mask);
}

template <typename Real>
Var context_vector(Graph<Real>& g, Var weights, const std::vector<Var>& states) {
  return g.weighted_sum(states, weights);
}

/// Value-level weighted sum over the rows of `states` [k x n].
template <typename Real>
Tensor<Real> context_vector(const Tensor<Real>& weights, const Tensor<Real>& states) {
  if (states.shape().size() != 2 || weights.size() != states.rows())
    throw std::invalid_argument("context_vector shape mismatch: weights " +
                                shape_to_string(weights.shape()) + " vs states " +
                                shape_to_string(states.shape()));
  Tensor<Real> c(Shape{states.cols()});
  for (long i = 0; i < states.rows(); ++i)
    for (long j = 0; j < states.cols(); ++j) c[j] += weights[i] * states.at(i, j);
  return c;
}

/// tanh(W [a; b] + bias). The model instantiates three independent copies of
/// these parameters for its three merge points.
template <typename Real>
Var concat_fuse(Graph<Real>& g, Var a, Var b, const FuseParams<Real>& p) {
  return g.tanh(g.affine(g.leaf(p.w), g.concat(a, b), g.leaf(p.b)));
}

}  // namespace anmt
