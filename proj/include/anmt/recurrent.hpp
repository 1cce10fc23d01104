#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/autodiff.hpp"
#include "anmt/corpus.hpp"
#include "anmt/tensor.hpp"

namespace anmt {

/// Gate parameters of one LSTM layer: input matrix, recurrent matrix and
/// bias per gate (i, f, o, g).
template <typename Real>
struct LstmLayerParams {
  Parameter<Real>* w_xi;
  Parameter<Real>* w_hi;
  Parameter<Real>* b_i;
  Parameter<Real>* w_xf;
  Parameter<Real>* w_hf;
  Parameter<Real>* b_f;
  Parameter<Real>* w_xo;
  Parameter<Real>* w_ho;
  Parameter<Real>* b_o;
  Parameter<Real>* w_xg;
  Parameter<Real>* w_hg;
  Parameter<Real>* b_g;

  std::vector<Parameter<Real>*> all() const {
    return {w_xi, w_hi, b_i, w_xf, w_hf, b_f, w_xo, w_ho, b_o, w_xg, w_hg, b_g};
  }
};

template <typename Real>
struct LstmStackParams {
  std::vector<LstmLayerParams<Real>> layers;
};

template <typename Real>
LstmStackParams<Real> make_lstm_stack(ParameterSet<Real>& params, const std::string& prefix,
                                      long layers, long input_dim, long units) {
  if (layers <= 0) throw std::invalid_argument("LSTM stack needs at least one layer");
  LstmStackParams<Real> stack;
  for (long l = 0; l < layers; ++l) {
    const long in = l == 0 ? input_dim : units;
    const std::string base = prefix + ".l" + std::to_string(l) + ".";
    LstmLayerParams<Real> p;
    p.w_xi = params.add(base + "w_xi", Tensor<Real>(Shape{units, in}));
    p.w_hi = params.add(base + "w_hi", Tensor<Real>(Shape{units, units}));
    p.b_i = params.add(base + "b_i", Tensor<Real>(Shape{units}));
    p.w_xf = params.add(base + "w_xf", Tensor<Real>(Shape{units, in}));
    p.w_hf = params.add(base + "w_hf", Tensor<Real>(Shape{units, units}));
    p.b_f = params.add(base + "b_f", Tensor<Real>(Shape{units}));
    p.w_xo = params.add(base + "w_xo", Tensor<Real>(Shape{units, in}));
    p.w_ho = params.add(base + "w_ho", Tensor<Real>(Shape{units, units}));
    p.b_o = params.add(base + "b_o", Tensor<Real>(Shape{units}));
    p.w_xg = params.add(base + "w_xg", Tensor<Real>(Shape{units, in}));
    p.w_hg = params.add(base + "w_hg", Tensor<Real>(Shape{units, units}));
    p.b_g = params.add(base + "b_g", Tensor<Real>(Shape{units}));
    stack.layers.push_back(p);
  }
  return stack;
}

/// Per-layer hidden and cell nodes of a stacked LSTM at one timestep.
struct LstmStateVars {
  std::vector<Var> h;
  std::vector<Var> c;

  long layers() const { return static_cast<long>(h.size()); }
};

template <typename Real>
LstmStateVars zero_state(Graph<Real>& g, long layers, long units) {
  LstmStateVars s;
  for (long l = 0; l < layers; ++l) {
    s.h.push_back(g.zeros(units));
    s.c.push_back(g.zeros(units));
  }
  return s;
}

/// Standard LSTM update:
///   i,f,o = sigmoid(W_x x + W_h h + b),  g = tanh(W_x x + W_h h + b)
///   c' = f*c + i*g,  h' = o * tanh(c')
template <typename Real>
std::pair<Var, Var> lstm_cell_step(Graph<Real>& g, Var x, Var prev_h, Var prev_c,
                                   const LstmLayerParams<Real>& p) {
  auto gate = [&](Parameter<Real>* wx, Parameter<Real>* wh, Parameter<Real>* b) {
    return g.add(g.matvec(g.leaf(wx), x), g.affine(g.leaf(wh), prev_h, g.leaf(b)));
  };
  const Var i = g.sigmoid(gate(p.w_xi, p.w_hi, p.b_i));
  const Var f = g.sigmoid(gate(p.w_xf, p.w_hf, p.b_f));
  const Var o = g.sigmoid(gate(p.w_xo, p.w_ho, p.b_o));
  const Var cand = g.tanh(gate(p.w_xg, p.w_hg, p.b_g));
  const Var c = g.add(g.mul(f, prev_c), g.mul(i, cand));
  const Var h = g.mul(o, g.tanh(c));
  return {h, c};
}

/// One timestep through the whole stack. Dropout is applied to the
/// non-recurrent inputs only: the embedding feeding layer 1 and each h
/// passed up between layers. Recurrent h->h and c->c paths are never
/// dropped. Returns the top layer's h and advances `state` in place.
template <typename Real>
Var stack_step(Graph<Real>& g, Var x, LstmStateVars& state, const LstmStackParams<Real>& stack,
               Real dropout_rate, bool training, std::mt19937_64* rng) {
  Var in = x;
  for (size_t l = 0; l < stack.layers.size(); ++l) {
    in = g.dropout(in, dropout_rate, training, rng);
    auto [h, c] = lstm_cell_step(g, in, state.h[l], state.c[l], stack.layers[l]);
    state.h[l] = h;
    state.c[l] = c;
    in = h;
  }
  return state.h.back();
}

/// The memory buffer filled by the encoder: one top-layer state per real
/// source position, plus the stack state after the last real token.
struct EncoderMemory {
  std::vector<Var> states;
  LstmStateVars final_state;

  long length() const { return static_cast<long>(states.size()); }
};

/// Runs the encoder left to right over the non-PAD prefix of `source_row`.
/// The recurrent state never advances through PAD positions, so a padded and
/// an unpadded copy of the same sentence produce identical memories.
template <typename Real>
EncoderMemory encode_sequence(Graph<Real>& g, const std::vector<int>& source_row, Var embedding,
                              const LstmStackParams<Real>& stack, long units, Real dropout_rate,
                              bool training, std::mt19937_64* rng) {
  EncoderMemory mem;
  mem.final_state = zero_state(g, static_cast<long>(stack.layers.size()), units);
  for (int id : source_row) {
    if (id == kPadId) break;
    const Var x = g.lookup_row(embedding, id);
    const Var top = stack_step(g, x, mem.final_state, stack, dropout_rate, training, rng);
    mem.states.push_back(top);
  }
  if (mem.states.empty()) throw std::runtime_error("cannot encode an empty (all-PAD) source");
  return mem;
}

/// Value-level view of the memory buffer: a [max_len x units] matrix whose
/// masked rows are zero, plus the 0/1 validity mask.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> memory_matrix(const Graph<Real>& g, const EncoderMemory& mem,
                                                    long max_len) {
  const long units = g.value(mem.states[0]).size();
  Tensor<Real> states(Shape{max_len, units});
  Tensor<Real> mask(Shape{max_len});
  for (long i = 0; i < mem.length() && i < max_len; ++i) {
    const Tensor<Real>& h = g.value(mem.states[static_cast<size_t>(i)]);
    for (long j = 0; j < units; ++j) states.at(i, j) = h[j];
    mask[i] = Real(1);
  }
  return {std::move(states), std::move(mask)};
}

}  // namespace anmt
