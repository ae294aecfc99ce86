#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "irnn/checkpoint.hpp"
#include "irnn/network.hpp"

using namespace irnn;

namespace {

constexpr double kLn10 = 2.30258509299404568402;

ModelSpec rnn_spec(std::size_t h, std::size_t d, Activation a = Activation::Relu,
                   HeadKind head = HeadKind::Regression, std::size_t classes = 1) {
  ModelSpec s;
  s.cell = CellKind::Rnn;
  s.activation = a;
  s.hidden = h;
  s.input_dim = d;
  s.head = head;
  s.classes = head == HeadKind::Regression ? 1 : classes;
  return s;
}

ModelSpec lstm_spec(std::size_t h, std::size_t d, double fb, HeadKind head = HeadKind::Regression,
                    std::size_t classes = 1) {
  ModelSpec s = rnn_spec(h, d, Activation::Tanh, head, classes);
  s.cell = CellKind::Lstm;
  s.forget_bias = fb;
  return s;
}

SequenceBatch random_batch(const ModelSpec& spec, std::size_t T, std::size_t B, Rng& rng) {
  auto batch = SequenceBatch::zeros(T, B, spec.input_dim);
  for (double& x : batch.inputs) x = rng.normal();
  for (std::size_t b = 0; b < B; ++b) {
    if (spec.head == HeadKind::Regression) {
      batch.targets.push_back(rng.normal());
    } else {
      batch.labels.push_back(static_cast<std::uint32_t>(rng.uniform_index(spec.classes)));
    }
  }
  return batch;
}

Parameters scaled_random(const ModelSpec& spec, Rng& rng, double sd) {
  ModelSpec s = spec;
  s.input_init_std = sd;
  if (s.cell == CellKind::Rnn) s.init = scheme::Gaussian{sd};
  return initialize_parameters(s, rng);
}

// A random dyadic value k/1024 in [0, hi]; sums of these stay exact.
double dyadic(Rng& rng, int hi_units) { return static_cast<double>(rng.uniform_index(hi_units + 1)) / 1024.0; }

}  // namespace

TEST(ModelSpec, Validation) {
  auto s = rnn_spec(3, 2);
  EXPECT_NO_THROW(s.validate());
  s.hidden = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = rnn_spec(3, 0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = rnn_spec(3, 2, Activation::Relu, HeadKind::Softmax, 1);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = rnn_spec(3, 2);
  s.init = scheme::ScaledIdentity{0.0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(parse_cell_kind("lstm"), CellKind::Lstm);
  EXPECT_THROW(parse_cell_kind("gru"), std::invalid_argument);
}

TEST(Initialize, IdentityRnnDefaults) {
  Rng rng(1);
  const auto spec = rnn_spec(100, 2);
  const auto p = initialize_parameters(spec, rng);
  const auto& cell = std::get<RnnParams>(p.cell);
  EXPECT_EQ(cell.W, identity(100));
  for (double v : cell.V.values()) EXPECT_LT(std::abs(v), 0.006);
  for (double v : cell.b.values()) EXPECT_LT(std::abs(v), 0.006);
  EXPECT_EQ(p.head.U.rows(), 1u);
  EXPECT_EQ(p.head.U.cols(), 100u);
  EXPECT_EQ(parameter_count(p), 100u * 100 + 200 + 100 + 100 + 1);
}

TEST(Initialize, LstmForgetBiasAndOtherBiasesZero) {
  Rng rng(2);
  const auto p = initialize_parameters(lstm_spec(4, 3, 20.0), rng);
  const auto& l = std::get<LstmParams>(p.cell);
  EXPECT_EQ(l.gate(Gate::Forget).b, Vector(4, 20.0));
  EXPECT_EQ(l.gate(Gate::Input).b, Vector(4));
  EXPECT_EQ(l.gate(Gate::Output).b, Vector(4));
  EXPECT_EQ(l.gate(Gate::Candidate).b, Vector(4));
  EXPECT_NO_THROW(l.validate());
}

TEST(Initialize, DeterministicPerSeed) {
  for (const auto& spec : {rnn_spec(5, 2), lstm_spec(5, 2, 4.0), rnn_spec(5, 1, Activation::Tanh)}) {
    Rng a(9), b(9), c(10);
    const auto pa = initialize_parameters(spec, a);
    EXPECT_EQ(pa, initialize_parameters(spec, b));
    EXPECT_NE(fingerprint(pa), fingerprint(initialize_parameters(spec, c)));
  }
}

TEST(Forward, SingleStepZeroParams) {
  const auto spec = rnn_spec(3, 2);
  const auto params = allocate_parameters(spec);
  auto batch = SequenceBatch::zeros(1, 1, 2);
  batch.targets = {0.7};
  const auto r = forward(spec, params, batch);
  EXPECT_EQ(r.predictions.values[0], 0.0);
  EXPECT_DOUBLE_EQ(r.loss, 0.49);
}

TEST(Forward, UniformSoftmaxLossIsLn10) {
  const auto spec = rnn_spec(4, 1, Activation::Relu, HeadKind::Softmax, 10);
  Rng rng(3);
  auto params = initialize_parameters(spec, rng);
  params.head.U.fill(0.0);
  params.head.c.fill(0.0);
  const auto r = forward(spec, params, random_batch(spec, 7, 5, rng));
  EXPECT_NEAR(r.loss, kLn10, 1e-12);
  for (const auto& probs : r.tape.outputs) {
    for (double p : probs.values()) EXPECT_NEAR(p, 0.1, 1e-15);
  }
}

TEST(Forward, PropertyBagOfEventsExact) {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng.uniform_index(8), d = 1 + rng.uniform_index(3);
    const std::size_t T = 1 + rng.uniform_index(60);
    const auto spec = rnn_spec(h, d);
    auto params = allocate_parameters(spec);
    auto& cell = std::get<RnnParams>(params.cell);
    cell.W = identity(h);
    for (double& v : cell.V.values()) v = dyadic(rng, 2048);
    for (double& v : cell.b.values()) v = trial % 3 == 0 ? 0.0 : dyadic(rng, 64);
    for (double& v : params.head.U.values()) v = 1.0;

    auto batch = SequenceBatch::zeros(T, 1, d);
    for (double& x : batch.inputs) x = dyadic(rng, 1024);
    batch.targets = {0.0};

    const auto r = forward(spec, params, batch);
    Vector sum_x(d);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < d; ++k) sum_x[k] += batch.input(t, 0)[k];
    Vector closed = matvec(cell.V, sum_x);
    for (std::size_t i = 0; i < h; ++i) closed[i] += static_cast<double>(T) * cell.b[i];
    ASSERT_EQ(r.tape.final_h[0], closed) << "trial " << trial;

    // Shuffle the time steps: the final state must not move.
    std::vector<std::size_t> order(T);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = T; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    auto shuffled = SequenceBatch::zeros(T, 1, d);
    shuffled.targets = {0.0};
    for (std::size_t t = 0; t < T; ++t) {
      auto src = batch.input(order[t], 0);
      std::copy(src.begin(), src.end(), shuffled.input(t, 0).begin());
    }
    EXPECT_EQ(forward(spec, params, shuffled).tape.final_h[0], closed);
  }
}

TEST(Forward, PropertyLossNonnegativeAndProbabilitiesNormalized) {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const bool softmax = trial % 2 == 0;
    const auto spec = trial % 3 == 0
                          ? lstm_spec(4, 2, 1.0, softmax ? HeadKind::Softmax : HeadKind::Regression, 5)
                          : rnn_spec(4, 2, Activation::Tanh, softmax ? HeadKind::Softmax : HeadKind::Regression, 5);
    const auto params = scaled_random(spec, rng, 1.0);
    const auto r = forward(spec, params, random_batch(spec, 6, 4, rng));
    EXPECT_GE(r.loss, 0.0);
    if (softmax) {
      for (const auto& p : r.tape.outputs) {
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Forward, BitwiseDeterministic) {
  Rng rng(8);
  const auto spec = lstm_spec(6, 2, 4.0, HeadKind::Softmax, 3);
  const auto params = scaled_random(spec, rng, 0.5);
  const auto batch = random_batch(spec, 9, 4, rng);
  const double a = forward(spec, params, batch).loss;
  const double b = forward(spec, params, batch).loss;
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Forward, ShapeAndLabelErrors) {
  const auto spec = rnn_spec(3, 2, Activation::Relu, HeadKind::Softmax, 4);
  const auto params = allocate_parameters(spec);
  auto batch = SequenceBatch::zeros(2, 2, 2);
  batch.labels = {1, 4};
  EXPECT_THROW(forward(spec, params, batch), ShapeError);
  batch.labels = {1};
  EXPECT_THROW(forward(spec, params, batch), ShapeError);
  auto wrong_dim = SequenceBatch::zeros(2, 2, 3);
  wrong_dim.labels = {0, 0};
  EXPECT_THROW(forward(spec, params, wrong_dim), ShapeError);
  auto empty = SequenceBatch::zeros(0, 2, 2);
  empty.labels = {0, 0};
  EXPECT_THROW(forward(spec, params, empty), ShapeError);
  EXPECT_THROW(forward(rnn_spec(4, 2, Activation::Relu, HeadKind::Softmax, 4), params, batch), ShapeError);
}

TEST(Forward, OverflowNamesStep) {
  const auto spec = rnn_spec(2, 1);
  auto params = allocate_parameters(spec);
  std::get<RnnParams>(params.cell).W = scaled_identity(2, 10.0);
  std::get<RnnParams>(params.cell).V.fill(1.0);
  auto batch = SequenceBatch::zeros(200, 1, 1);
  for (double& x : batch.inputs) x = 1.0;
  batch.targets = {0.0};
  try {
    forward(spec, params, batch);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step 101 "), std::string::npos) << e.what();
  }
  EXPECT_THROW(predict(spec, params, batch), DivergenceError);
}

TEST(Backward, ZeroResidualGivesZeroGradients) {
  Rng rng(12);
  for (const auto& spec : {rnn_spec(4, 2, Activation::Tanh), lstm_spec(4, 2, 1.0), rnn_spec(4, 2)}) {
    const auto params = scaled_random(spec, rng, 0.5);
    auto batch = random_batch(spec, 5, 3, rng);
    batch.targets = predict(spec, params, batch).values;
    const auto r = forward(spec, params, batch);
    EXPECT_EQ(r.loss, 0.0);
    const auto g = backward(spec, params, r.tape);
    EXPECT_EQ(g.params, zeros_like(params));
  }
}

TEST(Backward, LinearIdentityDeltaReachesStartUnchanged) {
  Rng rng(13);
  const auto spec = rnn_spec(5, 2, Activation::Linear);
  auto params = scaled_random(spec, rng, 0.3);
  std::get<RnnParams>(params.cell).W = identity(5);
  const auto r = forward(spec, params, random_batch(spec, 40, 3, rng));
  const auto g = backward(spec, params, r.tape);
  for (std::size_t lane = 0; lane < 3; ++lane) EXPECT_EQ(g.dh_initial[lane], g.dh_final[lane]);
}

TEST(Backward, MatchesFiniteDifferencesOnSmallModels) {
  Rng rng(14);
  for (const auto& spec : {rnn_spec(5, 2, Activation::Tanh), rnn_spec(5, 2, Activation::Linear),
                           lstm_spec(5, 2, 1.0, HeadKind::Softmax, 3)}) {
    auto params = scaled_random(spec, rng, 0.4);
    const auto batch = random_batch(spec, 10, 3, rng);
    const auto g = backward(spec, params, forward(spec, params, batch).tape);
    std::vector<std::span<const double>> ga;
    for_each_block(g.params, [&](std::string_view, std::span<const double> b) { ga.push_back(b); });
    std::size_t bi = 0;
    for_each_block(params, [&](std::string_view name, std::span<double> b) {
      for (std::size_t k = 0; k < b.size(); ++k) {
        const double saved = b[k];
        b[k] = saved + 1e-5;
        const double lp = forward(spec, params, batch).loss;
        b[k] = saved - 1e-5;
        const double lm = forward(spec, params, batch).loss;
        b[k] = saved;
        const double n = (lp - lm) / 2e-5;
        const double a = ga[bi][k];
        EXPECT_LT(std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}), 1e-4) << name << "[" << k << "]";
      }
      ++bi;
    });
  }
}

TEST(Backward, RejectsStaleOrMismatchedTape) {
  Rng rng(15);
  const auto spec = rnn_spec(3, 2, Activation::Tanh);
  auto params = scaled_random(spec, rng, 0.5);
  const auto r = forward(spec, params, random_batch(spec, 4, 2, rng));
  auto moved = params;
  std::get<RnnParams>(moved.cell).W(0, 0) += 1e-3;
  EXPECT_THROW(backward(spec, moved, r.tape), std::invalid_argument);

  const auto lspec = lstm_spec(3, 2, 1.0);
  const auto lparams = scaled_random(lspec, rng, 0.5);
  EXPECT_THROW(backward(lspec, lparams, r.tape), std::invalid_argument);
}

TEST(Predict, TieBreaksLowAndIsDeterministic) {
  const auto spec = rnn_spec(3, 1, Activation::Relu, HeadKind::Softmax, 10);
  const auto params = allocate_parameters(spec);
  auto batch = SequenceBatch::zeros(3, 2, 1);
  const auto p = predict(spec, params, batch);
  EXPECT_EQ(p.classes, (std::vector<std::size_t>{0, 0}));

  const auto rspec = rnn_spec(3, 1);
  EXPECT_EQ(predict(rspec, allocate_parameters(rspec), batch).values, (std::vector<double>{0.0, 0.0}));

  Rng rng(16);
  const auto lspec = lstm_spec(4, 1, 2.0, HeadKind::Softmax, 10);
  const auto lp = scaled_random(lspec, rng, 1.0);
  const auto b2 = random_batch(lspec, 8, 6, rng);
  EXPECT_EQ(predict(lspec, lp, b2).classes, predict(lspec, lp, b2).classes);
  EXPECT_EQ(predict(lspec, lp, b2).classes, forward(lspec, lp, b2).predictions.classes);
}

TEST(Predict, MatchesForwardBitwise) {
  Rng rng(17);
  for (const auto& spec : {rnn_spec(6, 2), rnn_spec(6, 2, Activation::Tanh), lstm_spec(6, 2, 1.0)}) {
    const auto params = scaled_random(spec, rng, 0.5);
    const auto batch = random_batch(spec, 12, 5, rng);
    EXPECT_EQ(predict(spec, params, batch).values, forward(spec, params, batch).predictions.values);
    const auto score = score_batch(spec, params, batch);
    EXPECT_DOUBLE_EQ(score.loss_sum / 5.0, forward(spec, params, batch).loss);
  }
}

TEST(Checkpoint, RoundTripEveryKind) {
  Rng rng(18);
  std::vector<ModelSpec> specs = {rnn_spec(4, 2), rnn_spec(3, 1, Activation::Tanh, HeadKind::Softmax, 10),
                                  lstm_spec(5, 2, 20.0), rnn_spec(2, 2, Activation::Linear)};
  specs[0].init = scheme::ScaledIdentity{0.01};
  specs[1].init = scheme::TanhBaseline{};
  specs[3].init = scheme::Gaussian{0.001};
  for (const auto& spec : specs) {
    const auto params = scaled_random(spec, rng, 0.3);
    const auto bytes = encode_checkpoint(spec, params);
    EXPECT_EQ(bytes.size(), 88 + 8 * parameter_count(params));
    const auto ck = decode_checkpoint(bytes);
    EXPECT_EQ(ck.spec, spec);
    EXPECT_EQ(ck.params, params);
    EXPECT_EQ(encode_checkpoint(ck.spec, ck.params), bytes);
  }
}

TEST(Checkpoint, HeaderLayoutIsLittleEndian) {
  const auto spec = rnn_spec(3, 2);
  const auto bytes = encode_checkpoint(spec, allocate_parameters(spec));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "IRNN0001");
  EXPECT_EQ(bytes[24], 3);  // hidden
  EXPECT_EQ(bytes[32], 2);  // input_dim
  for (int i = 25; i < 32; ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(Checkpoint, CorruptFilesRejectedWithOffsets) {
  const auto spec = lstm_spec(3, 2, 1.0);
  Rng rng(19);
  const auto bytes = encode_checkpoint(spec, scaled_random(spec, rng, 0.1));

  auto bad_magic = bytes;
  bad_magic[3] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);

  for (std::size_t cut : {std::size_t{4}, std::size_t{40}, std::size_t{88}, bytes.size() - 1}) {
    try {
      decode_checkpoint(std::span(bytes).first(cut));
      FAIL() << "truncation at " << cut << " accepted";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);

  auto bad_cell = bytes;
  bad_cell[8] = 7;
  EXPECT_THROW(decode_checkpoint(bad_cell), FormatError);

  auto bad_hidden = bytes;
  std::fill(bad_hidden.begin() + 24, bad_hidden.begin() + 32, 0);
  EXPECT_THROW(decode_checkpoint(bad_hidden), FormatError);
}
