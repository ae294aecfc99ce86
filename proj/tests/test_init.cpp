#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "irnn/init.hpp"

using namespace irnn;

namespace {

double sample_std(std::span<const double> xs) {
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

TEST(InitRecurrent, IdentityIsExactIdentity) {
  Rng rng(1);
  EXPECT_EQ(init_recurrent(scheme::Identity{}, 100, rng), identity(100));
}

TEST(InitRecurrent, ScaledIdentity) {
  Rng rng(1);
  const Matrix m = init_recurrent(scheme::ScaledIdentity{0.01}, 4, rng);
  EXPECT_EQ(m, scale(identity(4), 0.01));
  for (double s : {1e-6, 0.5, 1.0, 3.0}) {
    EXPECT_EQ(init_recurrent(scheme::ScaledIdentity{s}, 7, rng), scale(identity(7), s));
  }
}

TEST(InitRecurrent, GaussianDrawsFromRng) {
  Rng a(5), b(5);
  const Matrix m = init_recurrent(scheme::Gaussian{0.001}, 8, a);
  EXPECT_EQ(m, gaussian_fill(8, 8, 0.0, 0.001, b));
  EXPECT_EQ(m.rows(), 8u);
  for (double x : m.values()) EXPECT_LT(std::abs(x), 0.006);
}

TEST(InitRecurrent, TanhBaselineStd) {
  Rng rng(3);
  const Matrix m = init_recurrent(scheme::TanhBaseline{}, 100, rng);
  const double sd = sample_std(m.values());
  EXPECT_GE(sd, 0.08);
  EXPECT_LE(sd, 0.12);
}

TEST(InitRecurrent, InvalidSchemesRejected) {
  Rng rng(1);
  EXPECT_THROW(init_recurrent(scheme::ScaledIdentity{0.0}, 3, rng), std::invalid_argument);
  EXPECT_THROW(init_recurrent(scheme::ScaledIdentity{-1.0}, 3, rng), std::invalid_argument);
  EXPECT_THROW(init_recurrent(scheme::Gaussian{-0.1}, 3, rng), std::invalid_argument);
  EXPECT_THROW(init_recurrent(scheme::ScaledIdentity{std::nan("")}, 3, rng), std::invalid_argument);
  EXPECT_THROW(init_recurrent(scheme::Identity{}, 0, rng), ShapeError);
}

TEST(InitInputAndBias, ZeroStdGivesZeros) {
  Rng rng(1);
  const auto [V, b] = init_input_and_bias(0.0, 5, 3, rng);
  EXPECT_EQ(V, Matrix(5, 3));
  EXPECT_EQ(b, Vector(5));
}

TEST(InitInputAndBias, SmallStdTail) {
  Rng rng(99);
  const auto [V, b] = init_input_and_bias(0.001, 100, 2, rng);
  EXPECT_EQ(V.rows(), 100u);
  EXPECT_EQ(V.cols(), 2u);
  EXPECT_EQ(b.len(), 100u);
  double mx = 0;
  for (double x : V.values()) mx = std::max(mx, std::abs(x));
  for (double x : b.values()) mx = std::max(mx, std::abs(x));
  EXPECT_LT(mx, 0.006);
  EXPECT_GT(mx, 0.0);
}

TEST(InitInputAndBias, DeterministicAndRejectsNegative) {
  Rng a(17), b(17);
  const auto x = init_input_and_bias(0.001, 10, 4, a);
  const auto y = init_input_and_bias(0.001, 10, 4, b);
  EXPECT_EQ(x.V, y.V);
  EXPECT_EQ(x.b, y.b);
  EXPECT_THROW(init_input_and_bias(-0.001, 10, 4, a), std::invalid_argument);
}

TEST(InitTanhBaseline, Examples) {
  Rng rng(2);
  const auto one = init_tanh_baseline(1, 1, rng);
  EXPECT_EQ(one.b, Vector(1));
  EXPECT_NE(one.W(0, 0), 0.0);
  EXPECT_NE(one.V(0, 0), 0.0);

  const auto big = init_tanh_baseline(100, 2, rng);
  const double sd = sample_std(big.W.values());
  EXPECT_GE(sd, 0.08);
  EXPECT_LE(sd, 0.12);
  EXPECT_EQ(big.b, Vector(100));
  EXPECT_EQ(big.V.cols(), 2u);

  Rng a(4), b(4);
  const auto p = init_tanh_baseline(6, 3, a);
  const auto q = init_tanh_baseline(6, 3, b);
  EXPECT_EQ(p.W, q.W);
  EXPECT_EQ(p.V, q.V);
  EXPECT_THROW(init_tanh_baseline(0, 1, rng), ShapeError);
}

TEST(ParseInitScheme, RoundTrip) {
  for (const char* text : {"identity", "iscale:0.01", "gauss:0.001", "tanh-baseline", "iscale:1"}) {
    EXPECT_EQ(to_string(parse_init_scheme(text)), text);
  }
  EXPECT_TRUE(std::holds_alternative<scheme::Identity>(parse_init_scheme("identity")));
  const auto s = parse_init_scheme("iscale:0.01");
  ASSERT_TRUE(std::holds_alternative<scheme::ScaledIdentity>(s));
  EXPECT_EQ(std::get<scheme::ScaledIdentity>(s).scale, 0.01);
  EXPECT_EQ(std::get<scheme::Gaussian>(parse_init_scheme("gauss:0")).std, 0.0);
}

TEST(ParseInitScheme, Rejects) {
  for (const char* text : {"", "ident", "iscale:", "iscale:0", "iscale:-1", "gauss:-0.1", "gauss:abc",
                           "gauss:0.1x", "orthogonal"}) {
    EXPECT_THROW(parse_init_scheme(text), std::invalid_argument) << text;
  }
}
