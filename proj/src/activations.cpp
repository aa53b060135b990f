#include "tokvc/activations.hpp"

#include <cmath>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace {

double clamp_divisor(double m) {
  if (std::abs(m) >= kSnakeDivisorFloor) return m;
  return m < 0.0 ? -kSnakeDivisorFloor : kSnakeDivisorFloor;
}

torch::Tensor clamp_divisor(const torch::Tensor& m) {
  auto floor = torch::where(m < 0, torch::full({}, -kSnakeDivisorFloor, m.options()),
                            torch::full({}, kSnakeDivisorFloor, m.options()));
  return torch::where(m.abs() < kSnakeDivisorFloor, floor, m);
}

torch::Tensor channel_view(const torch::Tensor& p) { return p.view({1, -1, 1}); }

struct AdaptiveSnakeFunction : torch::autograd::Function<AdaptiveSnakeFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x,
                               const torch::Tensor& alpha, const torch::Tensor& beta,
                               const torch::Tensor& t) {
    const auto t3 = t.unsqueeze(-1);
    const auto freq = channel_view(alpha) + t3;
    const auto mag = channel_view(beta) + 0.5 * t3;
    const auto div = clamp_divisor(mag);
    ctx->save_for_backward({x, freq, mag, div});
    return x + torch::sin(freq * x).pow(2) / div;
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& x = saved[0];
    const auto& freq = saved[1];
    const auto& mag = saved[2];
    const auto& div = saved[3];
    const auto& g = grads[0];

    const auto arg = freq * x;
    const auto sin2x = torch::sin(2.0 * arg);
    const auto sin_sq = torch::sin(arg).pow(2);
    const auto grad_x = g * (1.0 + freq / div * sin2x);
    const auto grad_freq = g * x * sin2x / div;
    // The clamped divisor is constant in the magnitude term.
    const auto live = (mag.abs() >= kSnakeDivisorFloor).to(g.dtype());
    const auto grad_mag = -g * sin_sq / (div * div) * live;

    const auto grad_alpha = grad_freq.sum({0, 2});
    const auto grad_beta = grad_mag.sum({0, 2});
    const auto grad_t = (grad_freq + 0.5 * grad_mag).sum(2);
    return {grad_x, grad_alpha, grad_beta, grad_t};
  }
};

void check_channels(const torch::Tensor& x, long channels) {
  if (x.dim() != 3 || x.size(1) != channels) {
    throw InvalidArgument("snake: expected [B, " + std::to_string(channels) + ", T] input");
  }
}

}  // namespace

double snake_ref(double x, double alpha, double beta) {
  const double s = std::sin(alpha * x);
  return x + s * s / std::max(beta, kSnakeDivisorFloor);
}

double adaptive_snake_ref(double x, double alpha, double beta, double t) {
  const double s = std::sin((alpha + t) * x);
  return x + s * s / clamp_divisor(beta + 0.5 * t);
}

torch::Tensor snake(const torch::Tensor& x, const torch::Tensor& alpha, const torch::Tensor& beta) {
  const auto div = clamp_divisor(channel_view(beta));
  return x + torch::sin(channel_view(alpha) * x).pow(2) / div;
}

torch::Tensor condition_transform(const torch::Tensor& s, const torch::Tensor& weight,
                                  const torch::Tensor& bias) {
  if (weight.dim() != 2 || bias.dim() != 1 || bias.size(0) != weight.size(0)) {
    throw InvalidArgument("condition_transform: W must be [C, d] and b must be [C]");
  }
  if (s.dim() < 1 || s.dim() > 2 || s.size(-1) != weight.size(1)) {
    throw InvalidArgument("condition_transform: speaker vector has dimension " +
                          std::to_string(s.size(-1)) + ", expected " +
                          std::to_string(weight.size(1)));
  }
  // tanh rounds to +-1 for large arguments; keep the range open.
  const double bound = s.scalar_type() == torch::kFloat64 ? std::nextafter(1.0, 0.0)
                                                          : static_cast<double>(std::nextafter(1.0f, 0.0f));
  return torch::tanh(torch::nn::functional::linear(s, weight, bias)).clamp(-bound, bound);
}

torch::Tensor adaptive_snake(const torch::Tensor& x, const torch::Tensor& alpha,
                             const torch::Tensor& beta, const torch::Tensor& t) {
  if (t.dim() != 2 || x.dim() != 3 || t.size(1) != x.size(1) ||
      (t.size(0) != x.size(0) && t.size(0) != 1)) {
    throw InvalidArgument("adaptive_snake: condition must be [B, C] matching x [B, C, T]");
  }
  return AdaptiveSnakeFunction::apply(x, alpha, beta, t.expand({x.size(0), x.size(1)}));
}

SnakeImpl::SnakeImpl(SnakeOptions opts) : log_scale_(opts.log_scale) {
  const auto init = log_scale_ ? torch::zeros({opts.channels}) : torch::ones({opts.channels});
  alpha_param = register_parameter("alpha", init.clone());
  beta_param = register_parameter("beta", init.clone());
}

torch::Tensor SnakeImpl::alpha() const { return log_scale_ ? alpha_param.exp() : alpha_param; }
torch::Tensor SnakeImpl::beta() const { return log_scale_ ? beta_param.exp() : beta_param; }

torch::Tensor SnakeImpl::forward(const torch::Tensor& x) {
  check_channels(x, alpha_param.size(0));
  return snake(x, alpha(), beta());
}

AdaptiveSnakeImpl::AdaptiveSnakeImpl(AdaptiveSnakeOptions opts) : log_scale_(opts.log_scale) {
  const auto init = log_scale_ ? torch::zeros({opts.channels}) : torch::ones({opts.channels});
  alpha_param = register_parameter("alpha", init.clone());
  beta_param = register_parameter("beta", init.clone());
  weight = register_parameter("weight", torch::zeros({opts.channels, opts.cond_dim}));
  bias = register_parameter("bias", torch::zeros({opts.channels}));
}

torch::Tensor AdaptiveSnakeImpl::alpha() const { return log_scale_ ? alpha_param.exp() : alpha_param; }
torch::Tensor AdaptiveSnakeImpl::beta() const { return log_scale_ ? beta_param.exp() : beta_param; }

torch::Tensor AdaptiveSnakeImpl::forward(const torch::Tensor& x, const torch::Tensor& s) {
  check_channels(x, alpha_param.size(0));
  auto t = condition_transform(s, weight, bias);
  if (t.dim() == 1) t = t.unsqueeze(0);
  return adaptive_snake(x, alpha(), beta(), t);
}

}  // namespace tokvc
