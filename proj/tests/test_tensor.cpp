#include "support.hpp"

#include "volrig/adam.hpp"
#include "volrig/checkpoint.hpp"
#include "volrig/ops.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace volrig;
using namespace volrig::nn;
using volrig::test::gradient_error;
using volrig::test::project;
using volrig::test::random64;

namespace {

constexpr double kTol = 1e-5;

struct ConvCase {
  int k, stride;
};

class ConvGrad : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvGrad, MatchesFiniteDifferences) {
  const auto [k, s] = GetParam();
  Rng rng(10 * k + s);
  auto x = random64({4, 4, 4, 3}, rng);
  auto w = random64({k, k, k, 3, 2}, rng);
  auto b = random64({2}, rng);
  EXPECT_LT(gradient_error({x, w, b}, [&] { return project(conv3d(x, w, b, s)); }), kTol);
}

INSTANTIATE_TEST_SUITE_P(Kernels, ConvGrad,
                         ::testing::Values(ConvCase{1, 1}, ConvCase{2, 1}, ConvCase{2, 2}, ConvCase{3, 1},
                                           ConvCase{3, 2}, ConvCase{5, 1}, ConvCase{5, 2}));

TEST(Conv, OddSizedInputKeepsShapeAtStrideOne) {
  Rng rng(1);
  auto x = random64({5, 3, 6, 2}, rng);
  auto w = random64({3, 3, 3, 2, 4}, rng);
  auto b = random64({4}, rng);
  EXPECT_EQ(conv3d(x, w, b).shape(), (Shape{5, 3, 6, 4}));
  EXPECT_EQ(conv3d(random64({6, 4, 2, 2}, rng), w, b, 2).shape(), (Shape{3, 2, 1, 4}));
}

TEST(Conv, StrideTwoRejectsOddSizes) {
  Rng rng(1);
  auto w = random64({2, 2, 2, 1, 1}, rng);
  EXPECT_THROW(conv3d(random64({5, 4, 4, 1}, rng), w, random64({1}, rng), 2), ShapeError);
}

TEST(Conv, IdentityKernelCopiesInput) {
  Rng rng(4);
  auto x = random64({3, 3, 3, 1}, rng, -1, 1, false);
  std::vector<double> w(27, 0.0);
  w[13] = 1.0;
  const auto y = conv3d(x, Tensor64::from({3, 3, 3, 1, 1}, w), Tensor64::zeros({1}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

// <conv(x), y> == <x, conv^T(y)> where conv^T comes from the backward pass.
TEST(Conv, BackwardIsTheAdjoint) {
  for (int s : {1, 2}) {
    Rng rng(7 + s);
    auto x = random64({6, 6, 6, 3}, rng);
    auto w = random64({3, 3, 3, 3, 4}, rng, -1, 1, false);
    auto zero = Tensor64::zeros({4});
    auto y = conv3d(x, w, zero, s);
    auto probe = random64(y.shape(), rng, -1, 1, false);
    double lhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y.values()[i] * probe.values()[i];
    backward(sum(mul(y, probe)));
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * x.grad()[i];
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-12);
  }
}

TEST(ConvTranspose, GradientAndShape) {
  Rng rng(3);
  auto x = random64({3, 2, 3, 3}, rng);
  auto w = random64({2, 2, 2, 3, 2}, rng);
  auto b = random64({2}, rng);
  EXPECT_EQ(conv_transpose3d(x, w, b).shape(), (Shape{6, 4, 6, 2}));
  EXPECT_LT(gradient_error({x, w, b}, [&] { return project(conv_transpose3d(x, w, b)); }), kTol);
}

TEST(ConvTranspose, UnitImpulseGivesBlockOfOnes) {
  auto x = Tensor64::from({1, 1, 1, 1}, {1.0});
  auto y = conv_transpose3d(x, Tensor64::full({2, 2, 2, 1, 1}, 1.0), Tensor64::zeros({1}));
  EXPECT_EQ(y.shape(), (Shape{2, 2, 2, 1}));
  for (double v : y.values()) EXPECT_EQ(v, 1.0);
}

TEST(BatchNorm, TrainModeGradient) {
  Rng rng(5);
  auto x = random64({3, 3, 2, 4}, rng, -2, 2);
  auto g = random64({4}, rng, 0.5, 1.5);
  auto b = random64({4}, rng);
  BatchNormState<double> st(4);
  EXPECT_LT(gradient_error({x, g, b}, [&] { return project(batchnorm3d(x, g, b, st, Mode::Train)); }), kTol);
}

TEST(BatchNorm, EvalModeGradient) {
  Rng rng(6);
  auto x = random64({3, 3, 2, 4}, rng, -2, 2);
  auto g = random64({4}, rng, 0.5, 1.5);
  auto b = random64({4}, rng);
  BatchNormState<double> st(4);
  st.running_mean = random64({4}, rng, -0.5, 0.5, false);
  st.running_var = random64({4}, rng, 0.5, 2.0, false);
  EXPECT_LT(gradient_error({x, g, b}, [&] { return project(batchnorm3d(x, g, b, st, Mode::Eval)); }), kTol);
}

TEST(BatchNorm, TrainOutputIsStandardizedAndStatsUpdate) {
  Rng rng(8);
  auto x = random64({4, 4, 4, 2}, rng, 0, 4, false);
  BatchNormState<double> st(2);
  const auto y = batchnorm3d(x, Tensor64::full({2}, 1.0), Tensor64::zeros({2}), st, Mode::Train);
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0, xm = 0;
    for (std::size_t i = c; i < y.size(); i += 2) m += y.values()[i], xm += x.values()[i];
    m /= 64, xm /= 64;
    for (std::size_t i = c; i < y.size(); i += 2) v += (y.values()[i] - m) * (y.values()[i] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 64, 1.0, 1e-4);
    EXPECT_NEAR(st.running_mean.values()[c], 0.1 * xm, 1e-12);
  }
}

TEST(Activations, ReluAndSigmoidGradients) {
  Rng rng(9);
  std::vector<double> v(48);
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 2.0);
  auto x = Tensor64::from({2, 2, 3, 4}, v, true);
  EXPECT_LT(gradient_error({x}, [&] { return project(relu(x)); }), kTol);
  EXPECT_LT(gradient_error({x}, [&] { return project(sigmoid(x)); }), kTol);
}

TEST(Activations, SigmoidValues) {
  const auto y = sigmoid(Tensor64::from({3}, {std::log(3.0), 0.0, -800.0}));
  EXPECT_NEAR(y.values()[0], 0.75, 1e-15);
  EXPECT_EQ(y.values()[1], 0.5);
  EXPECT_GE(y.values()[2], 0.0);
}

TEST(Structure, ConcatAndAddGradients) {
  Rng rng(11);
  auto a = random64({2, 3, 2, 2}, rng);
  auto b = random64({2, 3, 2, 3}, rng);
  auto c = random64({2, 3, 2, 5}, rng);
  EXPECT_LT(gradient_error({a, b, c}, [&] { return project(add(concat(a, b), c)); }), kTol);
  EXPECT_EQ(concat(a, b).shape(), (Shape{2, 3, 2, 5}));
  EXPECT_THROW(add(a, b), ShapeError);
}

TEST(Structure, AffineTileGradient) {
  Rng rng(12);
  auto w = random64({4}, rng);
  auto b = random64({4}, rng);
  EXPECT_LT(gradient_error({w, b}, [&] { return project(affine_tile(0.3, w, b, 2, 3, 2)); }), kTol);
  const auto t = affine_tile(2.0, Tensor64::from({1}, {3.0}), Tensor64::from({1}, {1.0}), 2, 2, 2);
  for (double v : t.values()) EXPECT_EQ(v, 7.0);
}

TEST(Dropout, EvalIsIdentityTrainIsInverted) {
  Rng rng(13);
  auto x = Tensor64::full({10, 10, 10, 1}, 1.0);
  const auto e = dropout(x, 0.2, Mode::Eval, rng);
  for (double v : e.values()) EXPECT_EQ(v, 1.0);
  const auto t = dropout(x, 0.2, Mode::Train, rng);
  int kept = 0;
  for (double v : t.values()) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.25) < 1e-15);
    kept += v != 0.0;
  }
  EXPECT_NEAR(kept / 1000.0, 0.8, 0.05);
}

TEST(MaskedBce, Gradient) {
  Rng rng(14);
  auto p = random64({3, 3, 3, 1}, rng, 0.05, 0.95);
  std::vector<float> t(27);
  std::vector<std::uint8_t> m(27);
  for (int i = 0; i < 27; ++i) t[i] = static_cast<float>(rng.uniform()), m[i] = rng.uniform() < 0.6;
  m[0] = 1;
  EXPECT_LT(gradient_error({p}, [&] { return masked_bce(p, t, m); }), kTol);
}

TEST(MaskedBce, ScalarExamples) {
  std::vector<float> one{1.0f};
  std::vector<std::uint8_t> on{1};
  EXPECT_NEAR(masked_bce(Tensor64::from({1}, {0.5}), one, on).item(), std::numbers::ln2, 1e-12);
  std::vector<float> t{0.0f, 1.0f, 1.0f};
  std::vector<std::uint8_t> m{1, 1, 1};
  EXPECT_NEAR(masked_bce(Tensor64::from({3}, {0.0, 1.0, 1.0}), t, m).item(), 0.0, 1e-6);
  std::vector<std::uint8_t> none{0};
  EXPECT_THROW(masked_bce(Tensor64::from({1}, {0.5}), one, none), std::invalid_argument);
}

TEST(MaskedBce, UnmaskedVoxelsGetExactlyZeroGradient) {
  Rng rng(15);
  auto p = random64({4, 4, 4, 1}, rng, 0.05, 0.95);
  std::vector<float> t(64, 0.3f);
  std::vector<std::uint8_t> m(64);
  for (int i = 0; i < 64; ++i) m[i] = i % 3 == 0;
  backward(masked_bce(p, t, m));
  for (int i = 0; i < 64; ++i)
    if (!m[i]) EXPECT_EQ(p.grad()[i], 0.0);
}

TEST(Graph, BackwardTwiceThrowsAndNoGradSkipsRecording) {
  Rng rng(16);
  auto x = random64({2, 2, 2, 1}, rng);
  auto y = sum(relu(x));
  backward(y);
  EXPECT_THROW(backward(y), std::logic_error);
  {
    NoGradGuard g;
    EXPECT_FALSE(sum(relu(x)).requires_grad());
  }
  EXPECT_TRUE(sum(relu(x)).requires_grad());
}

TEST(Graph, NonFiniteValuesAreRejected) {
  EXPECT_THROW(add(Tensor64::from({1}, {1e308}), Tensor64::from({1}, {1e308})), std::runtime_error);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = Tensor::from({2}, {1.0f, -1.0f}, true);
  Adam<float> opt({{"p", p}}, AdamConfig{0.1});
  opt.zero_grad();
  backward(sum(mul(p, Tensor::from({2}, {3.0f, -0.5f}))));
  opt.step();
  EXPECT_NEAR(p.values()[0], 0.9f, 1e-6);
  EXPECT_NEAR(p.values()[1], -0.9f, 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MissingGradientThrows) {
  auto p = Tensor::from({1}, {1.0f}, true);
  Adam<float> opt({{"p", p}});
  EXPECT_THROW(opt.step(), std::logic_error);
}

TEST(Checkpoint, RoundTripsAndRejectsMismatches) {
  const auto dir = volrig::test::scratch_dir("ckpt");
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6.5f}, true);
  auto b = Tensor::from({1}, {-7.25f});
  save_checkpoint(dir / "c", {{"a", a}, {"b", b}}, {{"note", "x"}});
  std::vector<Parameter<float>> back{{"a", Tensor::zeros({2, 3}, true)}, {"b", Tensor::zeros({1})}};
  const auto meta = load_checkpoint(dir / "c", back);
  EXPECT_EQ(meta.at("note"), "x");
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back[0].tensor.values()[i], a.values()[i]);
  EXPECT_EQ(back[1].tensor.values()[0], -7.25f);
  std::vector<Parameter<float>> wrong_shape{{"a", Tensor::zeros({3, 2})}, {"b", Tensor::zeros({1})}};
  EXPECT_THROW(load_checkpoint(dir / "c", wrong_shape), std::runtime_error);
  std::vector<Parameter<float>> wrong_name{{"a", Tensor::zeros({2, 3})}, {"c", Tensor::zeros({1})}};
  EXPECT_THROW(load_checkpoint(dir / "c", wrong_name), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
