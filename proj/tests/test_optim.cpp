#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "irnn/optim.hpp"

using namespace irnn;

namespace {

ModelSpec small_rnn() {
  ModelSpec s;
  s.hidden = 3;
  s.input_dim = 2;
  s.classes = 1;
  return s;
}

Parameters random_grads(Rng& rng, double sd) {
  ModelSpec s = small_rnn();
  s.input_init_std = sd;
  s.init = scheme::Gaussian{sd};
  return initialize_parameters(s, rng);
}

// A Parameters whose only nonzero entries are head.c = {v}.
Parameters single_block(double v0, double v1) {
  ModelSpec s;
  s.hidden = 1;
  s.input_dim = 1;
  s.head = HeadKind::Softmax;
  s.classes = 2;
  Rng rng(0);
  s.input_init_std = 0.0;
  s.init = scheme::Gaussian{0.0};
  auto p = initialize_parameters(s, rng);
  p.head.c = Vector{v0, v1};
  return p;
}

std::vector<double> flatten(const Parameters& p) {
  std::vector<double> out;
  for_each_block(p, [&](std::string_view, std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); });
  return out;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.clip = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(TrainConfig{}.batch_size, 16u);
}

TEST(ClipGradients, Examples) {
  auto g = single_block(3, 4);
  EXPECT_EQ(clip_gradients(g, 10.0), 5.0);
  EXPECT_EQ(g.head.c, (Vector{3, 4}));

  auto h = single_block(6, 8);
  EXPECT_EQ(clip_gradients(h, 5.0), 10.0);
  EXPECT_NEAR(h.head.c[0], 3.0, 1e-15);
  EXPECT_NEAR(h.head.c[1], 4.0, 1e-15);
}

TEST(ClipGradients, RejectsBadThresholdAndNonFinite) {
  auto g = single_block(1, 1);
  EXPECT_THROW(clip_gradients(g, 0.0), std::invalid_argument);
  auto n = single_block(std::numeric_limits<double>::quiet_NaN(), 1);
  EXPECT_THROW(clip_gradients(n, 1.0), DivergenceError);
  auto i = single_block(std::numeric_limits<double>::infinity(), 1);
  EXPECT_THROW(clip_gradients(i, 1.0), DivergenceError);
}

TEST(ClipGradients, PropertyNormDirectionIdempotence) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = random_grads(rng, std::exp(rng.normal(0.0, 3.0)));
    const double gc = std::pow(10.0, static_cast<double>(rng.uniform_index(4)));
    const auto before = flatten(g);
    const double n = clip_gradients(g, gc);
    EXPECT_NEAR(global_norm(g), std::min(n, gc), 1e-12 * std::min(n, gc));
    EXPECT_LE(global_norm(g), gc);

    const auto after = flatten(g);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < after.size(); ++k) {
      dot += before[k] * after[k];
      na += before[k] * before[k];
      nb += after[k] * after[k];
    }
    EXPECT_NEAR(dot / std::sqrt(na * nb), 1.0, 1e-12);

    auto again = g;
    clip_gradients(again, gc);
    EXPECT_EQ(again, g) << "trial " << trial;
  }
}

TEST(SgdStep, Examples) {
  auto p = single_block(1.0, 2.0);
  const auto g = single_block(0.5, 0.0);
  sgd_step(p, g, 0.01);
  EXPECT_EQ(p.head.c[0], 0.995);
  EXPECT_EQ(p.head.c[1], 2.0);

  Rng rng(3);
  auto q = random_grads(rng, 1.0);
  const auto orig = q;
  sgd_step(q, random_grads(rng, 1.0), 0.0);
  EXPECT_EQ(q, orig);
  sgd_step(q, zeros_like(q), 0.7);
  EXPECT_EQ(q, orig);
}

TEST(SgdStep, ShapeMismatchRejected) {
  Rng rng(4);
  auto p = random_grads(rng, 1.0);
  EXPECT_THROW(sgd_step(p, single_block(1, 1), 0.1), ShapeError);
}

TEST(SgdStep, RepeatedRunsBitwiseIdentical) {
  auto run = [] {
    Rng rng(5);
    auto p = random_grads(rng, 1.0);
    for (int step = 0; step < 500; ++step) {
      auto g = random_grads(rng, 2.0);
      clip_gradients(g, 1.0);
      sgd_step(p, g, 0.05);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}
