#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "anmt/recurrent.hpp"

using namespace anmt;

namespace {

void randomize(ParameterSet<double>& params, double range, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& p : params) p->value = uniform_init<double>(p->value.shape(), -range, range, rng);
}

}  // namespace

TEST_CASE("lstm stack registration names and shapes") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "enc", 2, 3, 4);
  CHECK(stack.layers.size() == 2);
  CHECK(params.find("enc.l0.w_xi")->value.shape() == Shape{4, 3});
  CHECK(params.find("enc.l1.w_xi")->value.shape() == Shape{4, 4});
  CHECK(params.find("enc.l1.b_g")->value.shape() == Shape{4});
  // 12 tensors per layer
  CHECK(params.size() == 24);
  CHECK_THROWS_AS(make_lstm_stack(params, "bad", 0, 3, 4), std::invalid_argument);
}

TEST_CASE("all-zero cell is a fixed point at zero") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "z", 1, 2, 2);
  Graph<double> g;
  const Var x = g.input(Tensor<double>(Shape{2}, {0, 0}));
  const auto [h, c] = lstm_cell_step(g, x, g.zeros(2), g.zeros(2), stack.layers[0]);
  for (long i = 0; i < 2; ++i) {
    CHECK(g.value(h)[i] == 0.0);
    CHECK(g.value(c)[i] == 0.0);
  }
}

TEST_CASE("saturated forget gate carries the cell unchanged") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "carry", 1, 2, 2);
  stack.layers[0].b_f->value.fill(20.0);   // forget gate ~ 1
  stack.layers[0].b_i->value.fill(-20.0);  // input gate ~ 0
  Graph<double> g;
  const Var x = g.input(Tensor<double>(Shape{2}, {0.4, -1.2}));
  const Var prev_c = g.input(Tensor<double>(Shape{2}, {0.3, -0.7}));
  const auto [h, c] = lstm_cell_step(g, x, g.zeros(2), prev_c, stack.layers[0]);
  CHECK(g.value(c)[0] == Catch::Approx(0.3).margin(1e-7));
  CHECK(g.value(c)[1] == Catch::Approx(-0.7).margin(1e-7));
  (void)h;
}

TEST_CASE("one-layer stack_step equals the bare cell") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "s", 1, 3, 2);
  randomize(params, 0.5, 21);

  Graph<double> g;
  const Var x = g.input(Tensor<double>(Shape{3}, {0.1, -0.2, 0.3}));
  LstmStateVars state = zero_state(g, 1, 2);
  const Var top = stack_step(g, x, state, stack, 0.0, false, nullptr);

  const auto [h, c] = lstm_cell_step(g, x, g.zeros(2), g.zeros(2), stack.layers[0]);
  for (long i = 0; i < 2; ++i) {
    CHECK(g.value(top)[i] == g.value(h)[i]);
    CHECK(g.value(state.c[0])[i] == g.value(c)[i]);
  }
}

TEST_CASE("zero-weight deep stack emits zeros from the top layer") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "deep", 4, 2, 3);
  Graph<double> g;
  LstmStateVars state = zero_state(g, 4, 3);
  const Var top = stack_step(g, g.input(Tensor<double>(Shape{2}, {5, -5})), state, stack, 0.0,
                             false, nullptr);
  for (long i = 0; i < 3; ++i) CHECK(g.value(top)[i] == 0.0);
}

TEST_CASE("inference mode ignores the dropout rate") {
  ParameterSet<double> params;
  const auto stack = make_lstm_stack(params, "det", 2, 2, 2);
  randomize(params, 0.5, 4);
  const auto run = [&](double rate, bool training, std::mt19937_64* rng) {
    Graph<double> g;
    LstmStateVars state = zero_state(g, 2, 2);
    const Var top = stack_step(g, g.input(Tensor<double>(Shape{2}, {0.7, -0.9})), state, stack,
                               rate, training, rng);
    return g.value(top);
  };
  const auto base = run(0.0, false, nullptr);
  const auto with_rate = run(0.5, false, nullptr);
  for (long i = 0; i < 2; ++i) CHECK(base[i] == with_rate[i]);

  std::mt19937_64 rng(3);
  const auto trained = run(0.9, true, &rng);
  CHECK(trained.all_finite());
}

TEST_CASE("encoder stores one state per real token") {
  ParameterSet<double> params;
  auto* embed = params.add("e", Tensor<double>(Shape{6, 2}));
  const auto stack = make_lstm_stack(params, "enc", 2, 2, 2);
  randomize(params, 0.5, 8);

  Graph<double> g;
  const EncoderMemory mem =
      encode_sequence(g, {4, kEosId}, g.leaf(embed), stack, 2, 0.0, false, nullptr);
  CHECK(mem.length() == 2);
  CHECK(mem.final_state.layers() == 2);

  const EncoderMemory one =
      encode_sequence(g, {kEosId}, g.leaf(embed), stack, 2, 0.0, false, nullptr);
  CHECK(one.length() == 1);
  for (long i = 0; i < 2; ++i)
    CHECK(g.value(one.final_state.h[1])[i] == g.value(one.states[0])[i]);

  CHECK_THROWS_AS(encode_sequence(g, {kPadId, kPadId}, g.leaf(embed), stack, 2, 0.0, false, nullptr),
                  std::runtime_error);
}

TEST_CASE("padding never leaks into the encoder memory") {
  ParameterSet<double> params;
  auto* embed = params.add("e", Tensor<double>(Shape{8, 3}));
  const auto stack = make_lstm_stack(params, "enc", 2, 3, 3);
  randomize(params, 0.5, 15);

  Graph<double> g;
  const std::vector<int> bare = {5, 6, kEosId};
  std::vector<int> padded = bare;
  padded.resize(10, kPadId);
  const EncoderMemory a = encode_sequence(g, bare, g.leaf(embed), stack, 3, 0.0, false, nullptr);
  const EncoderMemory b = encode_sequence(g, padded, g.leaf(embed), stack, 3, 0.0, false, nullptr);
  REQUIRE(a.length() == b.length());
  for (long i = 0; i < a.length(); ++i)
    for (long j = 0; j < 3; ++j)
      CHECK(g.value(a.states[static_cast<size_t>(i)])[j] ==
            g.value(b.states[static_cast<size_t>(i)])[j]);
  for (long l = 0; l < 2; ++l)
    for (long j = 0; j < 3; ++j) {
      CHECK(g.value(a.final_state.h[static_cast<size_t>(l)])[j] ==
            g.value(b.final_state.h[static_cast<size_t>(l)])[j]);
      CHECK(g.value(a.final_state.c[static_cast<size_t>(l)])[j] ==
            g.value(b.final_state.c[static_cast<size_t>(l)])[j]);
    }
}

TEST_CASE("memory_matrix exposes states and a validity mask") {
  ParameterSet<double> params;
  auto* embed = params.add("e", Tensor<double>(Shape{6, 2}));
  const auto stack = make_lstm_stack(params, "enc", 1, 2, 2);
  randomize(params, 0.5, 2);

  Graph<double> g;
  const EncoderMemory mem =
      encode_sequence(g, {4, 5, kEosId}, g.leaf(embed), stack, 2, 0.0, false, nullptr);
  const auto [states, mask] = memory_matrix(g, mem, 5);
  CHECK(states.shape() == Shape{5, 2});
  CHECK(mask[0] == 1.0);
  CHECK(mask[2] == 1.0);
  CHECK(mask[3] == 0.0);
  CHECK(states.at(1, 0) == g.value(mem.states[1])[0]);
  CHECK(states.at(4, 0) == 0.0);
}

TEST_CASE("lstm cell gradients match finite differences") {
  ParameterSet<double> params;
  auto* embed = params.add("e", Tensor<double>(Shape{4, 3}));
  const auto stack = make_lstm_stack(params, "g", 1, 3, 2);
  randomize(params, 0.4, 33);

  const auto loss = [&](bool with_grad) {
    Graph<double> g;
    const Var x = g.lookup_row(g.leaf(embed), 2);
    const auto [h, c] = lstm_cell_step(g, x, g.zeros(2), g.zeros(2), stack.layers[0]);
    const Var y = g.add_n({g.dot(h, h), g.dot(c, c)});
    if (with_grad) g.backward(y);
    return g.value(y)[0];
  };
  std::vector<Parameter<double>*> all;
  for (const auto& p : params) all.push_back(p.get());
  CHECK(finite_diff_check<double>(loss, all) < 1e-4);
}

TEST_CASE("two-step two-layer encoder gradients match finite differences") {
  ParameterSet<double> params;
  auto* embed = params.add("e", Tensor<double>(Shape{5, 2}));
  const auto stack = make_lstm_stack(params, "g", 2, 2, 2);
  randomize(params, 0.4, 54);

  const auto loss = [&](bool with_grad) {
    Graph<double> g;
    const EncoderMemory mem =
        encode_sequence(g, {4, kEosId}, g.leaf(embed), stack, 2, 0.0, false, nullptr);
    std::vector<Var> parts;
    for (const Var s : mem.states) parts.push_back(g.dot(s, s));
    parts.push_back(g.dot(mem.final_state.c[1], mem.final_state.c[1]));
    const Var y = g.add_n(parts);
    if (with_grad) g.backward(y);
    return g.value(y)[0];
  };
  std::vector<Parameter<double>*> all;
  for (const auto& p : params) all.push_back(p.get());
  CHECK(finite_diff_check<double>(loss, all) < 1e-4);
}
