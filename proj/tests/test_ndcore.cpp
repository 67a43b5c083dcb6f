#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ftc/ndcore.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace ftc::nd;

namespace {

Tensor2 row(std::initializer_list<double> v) { return Tensor2::from_rows({v}); }

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  EXPECT_TRUE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace

TEST(Conv1d, SamePaddingIdentityKernel) {
  auto l = ConvLayer::zeros(1, 1, 3, 1);
  l.weights = {0, 1, 0};
  EXPECT_EQ(conv1d_forward(l, row({3, 5, 7}), Padding::same), row({3, 5, 7}));
}

TEST(Conv1d, ValidPairSum) {
  auto l = ConvLayer::zeros(1, 1, 2, 1);
  l.weights = {1, 1};
  EXPECT_EQ(conv1d_forward(l, row({1, 2, 3}), Padding::valid), row({3, 5}));
}

TEST(Conv1d, SameOutputLengthIsCeilOfInputOverStride) {
  for (std::size_t s = 1; s <= 3; ++s)
    for (std::size_t n = 1; n <= 20; ++n) {
      const auto l = ConvLayer::zeros(1, 1, 7, s);
      EXPECT_EQ(conv1d_output_length(l, n, Padding::same), (n + s - 1) / s);
    }
}

TEST(Conv1d, MatchesDirectDefinition) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const bool same = i % 2;
    const std::size_t k = 1 + rng() % 7, s = 1 + rng() % 3;
    const std::size_t n = (same ? 1 : k) + rng() % 20;
    const auto l = oracle::random_layer(1 + rng() % 4, 1 + rng() % 4, k, s, rng);
    const auto x = oracle::random_tensor(l.in_channels, n, rng);
    EXPECT_LT(max_abs_diff(conv1d_forward(l, x, same ? Padding::same : Padding::valid), oracle::conv(l, x, same)),
              1e-12);
  }
}

TEST(Conv1d, RejectsBadShapes) {
  auto l = ConvLayer::zeros(2, 1, 3, 1);
  EXPECT_THROW(conv1d_forward(l, row({1, 2, 3}), Padding::same), ftc::ContractViolation);
  auto l1 = ConvLayer::zeros(1, 1, 5, 1);
  EXPECT_THROW(conv1d_forward(l1, row({1, 2, 3}), Padding::valid), ftc::ContractViolation);
  l1.weights.pop_back();
  EXPECT_THROW(conv1d_forward(l1, row({1, 2, 3, 4, 5}), Padding::valid), ftc::ContractViolation);
}

TEST(Tconv1d, StrideTwoPairKernel) {
  auto l = ConvLayer::zeros(1, 1, 2, 2);
  l.weights = {1, 1};
  EXPECT_EQ(tconv1d_forward(l, row({1, 2})), row({1, 1, 2, 2}));
}

TEST(Tconv1d, MatchesScatterDefinition) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const std::size_t k = 1 + rng() % 7, s = 1 + rng() % 3, n = 1 + rng() % 12;
    const auto l = oracle::random_layer(1 + rng() % 4, 1 + rng() % 4, k, s, rng);
    const auto x = oracle::random_tensor(l.in_channels, n, rng);
    std::optional<std::size_t> target;
    const std::size_t lo = (n - 1) * s + 1, hi = std::min(n * s, (n - 1) * s + k);
    if (i % 2 && lo <= hi) target = lo + rng() % (hi - lo + 1);
    EXPECT_LT(max_abs_diff(tconv1d_forward(l, x, target), oracle::tconv(l, x, target)), 1e-12);
  }
}

TEST(Tconv1d, InvertsSameConvLengthForModelSizes) {
  for (std::size_t n : {8u, 16u, 24u, 56u, 200u}) {
    const auto c = ConvLayer::zeros(3, 4, 7, 2);
    const auto t = ConvLayer::zeros(4, 3, 7, 2);
    const auto y = conv1d_forward(c, Tensor2(3, n), Padding::same);
    EXPECT_EQ(tconv1d_forward(t, y, n).length, n);
  }
}

TEST(Tconv1d, RejectsUnreachableTarget) {
  const auto l = ConvLayer::zeros(1, 1, 2, 2);
  EXPECT_THROW(tconv1d_forward(l, row({1, 2}), 7), ftc::ContractViolation);
  EXPECT_THROW(tconv1d_forward(l, row({1, 2}), 2), ftc::ContractViolation);
}

// <U, conv(x)> == <tconv(U), x> for a zero-bias layer sharing weights.
TEST(Adjoint, ValidConvAndFullTconv) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const std::size_t in = 1 + rng() % 4, out = 1 + rng() % 4, k = 1 + rng() % 7, s = 1 + rng() % 3;
    auto conv = oracle::random_layer(in, out, k, s, rng);
    std::fill(conv.bias.begin(), conv.bias.end(), 0.0);
    const std::size_t m = 1 + rng() % 10;
    const std::size_t n = (m - 1) * s + k;  // exact cover, so tconv(U) has length n
    const auto x = oracle::random_tensor(in, n, rng);
    const auto U = oracle::random_tensor(out, m, rng);
    auto tconv = ConvLayer::zeros(out, in, k, s);
    tconv.weights = conv.weights;  // [out][in][k] read as [in'][out'][k]
    const double lhs = oracle::inner(U, conv1d_forward(conv, x, Padding::valid));
    const double rhs = oracle::inner(tconv1d_forward(tconv, U), x);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)}));
  }
}

TEST(Gradients, EveryPrimitiveMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 15; ++s) {
    EXPECT_LT(gradcheck::conv_case(s, false).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::conv_case(s, true).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::tconv_case(s, false).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::tconv_case(s, true).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::relu_case(s).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::dropout_case(s).max_rel_error, 1e-4);
    EXPECT_LT(gradcheck::mse_case(s).max_rel_error, 1e-4);
  }
}

TEST(Gradients, BackwardIsDeterministic) {
  std::mt19937_64 rng(3);
  const auto l = oracle::random_layer(3, 4, 7, 2, rng);
  const auto x = oracle::random_tensor(3, 16, rng);
  const auto U = oracle::random_tensor(4, 8, rng);
  const auto a = conv1d_backward(l, x, U, Padding::same), b = conv1d_backward(l, x, U, Padding::same);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.input, b.input);
}

TEST(Relu, Idempotent) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor(3, 50, rng);
  EXPECT_EQ(relu(relu(x)), relu(x));
  EXPECT_EQ(relu(row({-1, 0, 2})), row({0, 0, 2}));
}

TEST(Dropout, KeptFractionMatchesRate) {
  Rng rng(5);
  const auto d = dropout(Tensor2(1, 1'000'000, 1.0), 0.1, rng, Mode::train);
  const double kept = static_cast<double>(std::count(d.kept.begin(), d.kept.end(), 1)) / 1e6;
  EXPECT_NEAR(kept, 0.9, 0.002);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_DOUBLE_EQ(d.output.values[i], d.kept[i] ? 1.0 / 0.9 : 0.0);
}

TEST(Dropout, InferIsIdentityAndSameSeedSameMask) {
  Rng a(6), b(6);
  std::mt19937_64 g(6);
  const auto x = oracle::random_tensor(2, 40, g);
  EXPECT_EQ(dropout(x, 0.3, a, Mode::infer).output, x);
  Rng c(7), d(7);
  EXPECT_EQ(dropout(x, 0.3, c).kept, dropout(x, 0.3, d).kept);
  EXPECT_THROW(dropout(x, 1.0, a), ftc::ContractViolation);
}

TEST(MaskedMse, Examples) {
  EXPECT_DOUBLE_EQ(masked_mse(row({1, 0}), row({0, 0}), Mask::all_valid(2)), 0.5);
  EXPECT_DOUBLE_EQ(masked_mse(row({1, 5}), row({0, 5}), Mask{{1, 0}}), 1.0);
  EXPECT_EQ(masked_mse(row({2, 3}), row({2, 3}), Mask::all_valid(2)), 0.0);
}

TEST(MaskedMse, ZeroIffValidEntriesEqual) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto x = oracle::random_tensor(2, 10, rng);
    const std::size_t valid = 1 + rng() % 9;
    const Mask m = Mask::prefix(valid, 10);
    auto padded_change = x, valid_change = x;
    padded_change(rng() % 2, valid + rng() % (10 - valid)) += 1.0;
    valid_change(rng() % 2, rng() % valid) += 1e-3;
    EXPECT_EQ(masked_mse(x, x, m), 0.0);
    EXPECT_EQ(masked_mse(x, padded_change, m), 0.0);
    EXPECT_GT(masked_mse(x, valid_change, m), 0.0);
  }
  const auto x = row({1, 2, 3});
  EXPECT_EQ(masked_mse(x, row({1, 2, 9}), Mask{{1, 1, 0}}), 0.0);
  EXPECT_GT(masked_mse(x, row({1, 2.5, 9}), Mask{{1, 1, 0}}), 0.0);
}

TEST(MaskedMse, RejectsEmptyMaskAndShapeMismatch) {
  EXPECT_THROW(masked_mse(row({1}), row({1}), Mask{{0}}), ftc::ContractViolation);
  EXPECT_THROW(masked_mse(row({1, 2}), row({1}), Mask{{1, 1}}), ftc::ContractViolation);
  EXPECT_THROW(masked_mse(row({1, 2}), row({1, 2}), Mask{{1}}), ftc::ContractViolation);
}
