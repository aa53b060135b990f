#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tokvc/activations.hpp"
#include "tokvc/errors.hpp"

using namespace tokvc;

namespace {

constexpr double kPi = std::numbers::pi;

torch::Tensor d1(double v) { return torch::tensor({v}, torch::kFloat64); }

// Composite f(x, s; alpha, beta, W, b) in double for a single channel.
double composite(double x, const std::vector<double>& s, double alpha, double beta, const std::vector<double>& w,
                 double b) {
  double z = b;
  for (size_t i = 0; i < s.size(); ++i) z += w[i] * s[i];
  const double t = std::tanh(z);
  const double sn = std::sin((alpha + t) * x);
  return x + sn * sn / (beta + 0.5 * t);
}

}  // namespace

TEST(Snake, WorkedValues) {
  EXPECT_EQ(snake_ref(0.0, 1.7, 0.3), 0.0);
  EXPECT_NEAR(snake_ref(kPi / 2, 1.0, 1.0), kPi / 2 + 1.0, 1e-12);
  const auto x = torch::linspace(-3, 3, 61, torch::kFloat64).view({1, 1, -1});
  const auto alpha = d1(1.3), beta = d1(0.7);
  const auto diff = snake(x + kPi / 1.3, alpha, beta) - snake(x, alpha, beta);
  EXPECT_TRUE(torch::allclose(diff, torch::full_like(diff, kPi / 1.3), 0.0, 1e-12));
}

TEST(ConditionTransform, ValuesAndRange) {
  const auto s = torch::randn({5, 4}, torch::kFloat64);
  const auto zero = condition_transform(s, torch::zeros({3, 4}, torch::kFloat64), torch::zeros({3}, torch::kFloat64));
  EXPECT_TRUE(torch::equal(zero, torch::zeros_like(zero)));
  const auto t = condition_transform(s * 50, torch::randn({3, 4}, torch::kFloat64),
                                     torch::randn({3}, torch::kFloat64));
  EXPECT_TRUE((t.abs() < 1).all().item<bool>());
  auto b = torch::zeros({3}, torch::kFloat64);
  b[1] = std::atanh(0.5);
  const auto half = condition_transform(s, torch::zeros({3, 4}, torch::kFloat64), b);
  EXPECT_NEAR(half[0][1].item<double>(), 0.5, 1e-9);
  EXPECT_THROW(condition_transform(torch::randn({5}), torch::zeros({3, 4}), torch::zeros({3})), InvalidArgument);
}

TEST(AdaptiveSnake, WorkedExamples) {
  EXPECT_NEAR(adaptive_snake_ref(kPi / 3, 1.0, 1.0, 0.5), 1.847198, 1e-6);
  // alpha + T = 0 gives the identity.
  for (double x : {-2.0, 0.3, 5.0}) EXPECT_DOUBLE_EQ(adaptive_snake_ref(x, 0.4, 1.0, -0.4), x);
  // Same value through the tensor path with T built by the atanh trick.
  auto bias = torch::full({1}, std::atanh(0.5), torch::kFloat64);
  const auto t = condition_transform(torch::ones({1, 2}, torch::kFloat64), torch::zeros({1, 2}, torch::kFloat64), bias);
  const auto y = adaptive_snake(torch::full({1, 1, 1}, kPi / 3, torch::kFloat64), d1(1.0), d1(1.0), t);
  EXPECT_NEAR(y.item<double>(), 1.847198, 1e-6);
}

TEST(AdaptiveSnake, ReducesToSnakeWithZeroConditioning) {
  AdaptiveSnake a(AdaptiveSnakeOptions{4, 6, true});
  Snake p(SnakeOptions{4, true});
  {
    torch::NoGradGuard g;
    const auto la = torch::randn({4}) * 0.5;
    const auto lb = torch::randn({4}) * 0.5;
    a->alpha_param.copy_(la);
    p->alpha_param.copy_(la);
    a->beta_param.copy_(lb);
    p->beta_param.copy_(lb);
  }
  const auto x = torch::randn({3, 4, 257}) * 4;
  const auto s = torch::randn({3, 6});
  EXPECT_TRUE(torch::equal(a->forward(x, s), p->forward(x)));
}

TEST(AdaptiveSnake, ConditioningChangesOutput) {
  AdaptiveSnake a(AdaptiveSnakeOptions{2, 3, true});
  {
    torch::NoGradGuard g;
    a->weight.normal_();
  }
  const auto x = torch::full({1, 2, 1}, 0.7);
  const auto y1 = a->forward(x, torch::tensor({{1.0f, 0.0f, 0.0f}}));
  const auto y2 = a->forward(x, torch::tensor({{-1.0f, 0.5f, 0.0f}}));
  EXPECT_GT((y1 - y2).abs().max().item<double>(), 0.0);
}

TEST(AdaptiveSnake, DivisorClampKeepsSign) {
  EXPECT_TRUE(std::isfinite(adaptive_snake_ref(1.0, 1.0, 0.25, -0.5)));
  EXPECT_GT(adaptive_snake_ref(1.0, 1.0, 1e-12, 0.0), 1e6);
  EXPECT_LT(adaptive_snake_ref(1.0, 1.0, -1e-12, 0.0), -1e6);
}

TEST(AdaptiveSnake, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int d = 3;
  const double h = 1e-6;
  int checked = 0;
  for (int draw = 0; draw < 200; ++draw) {
    const double x = 2.0 * n01(rng);
    const double alpha = std::exp(0.5 * n01(rng));
    const double beta = std::exp(0.5 * n01(rng));
    std::vector<double> s(d), w(d);
    for (auto& v : s) v = n01(rng);
    for (auto& v : w) v = 0.5 * n01(rng);
    const double b = 0.5 * n01(rng);
    double z = b;
    for (int i = 0; i < d; ++i) z += w[i] * s[i];
    if (std::abs(beta + 0.5 * std::tanh(z)) < 1e-4) continue;

    auto tx = torch::tensor({x}, torch::kFloat64).view({1, 1, 1}).requires_grad_();
    auto ta = d1(alpha).requires_grad_();
    auto tb = d1(beta).requires_grad_();
    auto ts = torch::tensor(s, torch::kFloat64).view({1, d}).requires_grad_();
    auto tw = torch::tensor(w, torch::kFloat64).view({1, d}).requires_grad_();
    auto tbias = d1(b).requires_grad_();
    adaptive_snake(tx, ta, tb, condition_transform(ts, tw, tbias)).sum().backward();

    auto check = [&](double analytic, auto perturb) {
      const double numeric = (perturb(h) - perturb(-h)) / (2 * h);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      EXPECT_LE(rel, 1e-5) << "draw " << draw << " analytic " << analytic << " numeric " << numeric;
    };
    check(tx.grad().item<double>(), [&](double e) { return composite(x + e, s, alpha, beta, w, b); });
    check(ta.grad().item<double>(), [&](double e) { return composite(x, s, alpha + e, beta, w, b); });
    check(tb.grad().item<double>(), [&](double e) { return composite(x, s, alpha, beta + e, w, b); });
    check(tbias.grad().item<double>(), [&](double e) { return composite(x, s, alpha, beta, w, b + e); });
    for (int i = 0; i < d; ++i) {
      check(tw.grad()[0][i].item<double>(), [&](double e) {
        auto w2 = w;
        w2[i] += e;
        return composite(x, s, alpha, beta, w2, b);
      });
      check(ts.grad()[0][i].item<double>(), [&](double e) {
        auto s2 = s;
        s2[i] += e;
        return composite(x, s2, alpha, beta, w, b);
      });
    }
    ++checked;
  }
  EXPECT_GT(checked, 190);
}

TEST(AdaptiveSnake, ModuleShapesAndErrors) {
  AdaptiveSnake a(AdaptiveSnakeOptions{4, 8, true});
  EXPECT_EQ(a->forward(torch::randn({2, 4, 10}), torch::randn({2, 8})).sizes(), torch::IntArrayRef({2, 4, 10}));
  EXPECT_EQ(a->forward(torch::randn({2, 4, 10}), torch::randn({8})).sizes(), torch::IntArrayRef({2, 4, 10}));
  EXPECT_THROW(a->forward(torch::randn({2, 3, 10}), torch::randn({2, 8})), InvalidArgument);
  EXPECT_THROW(a->forward(torch::randn({2, 4, 10}), torch::randn({2, 7})), InvalidArgument);
  EXPECT_TRUE(torch::allclose(a->alpha(), torch::ones({4})));
  EXPECT_TRUE(torch::allclose(a->beta(), torch::ones({4})));
}
