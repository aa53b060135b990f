#pragma once

// Snake and speaker-adaptive Snake activations.
//
//   snake(x)          = x + sin^2(alpha x) / beta
//   T(s)              = tanh(W s + b)
//   adaptive(x, s)    = x + sin^2((alpha + T(s)) x) / (beta + T(s) / 2)
//
// Both operate per channel on [B, C, T] tensors. The adaptive form has a
// hand-written backward pass so its gradients can be checked against finite
// differences independently of autograd.

#include <torch/torch.h>

namespace tokvc {

/// Magnitude floor applied to every Snake divisor.
inline constexpr double kSnakeDivisorFloor = 1e-9;

// Scalar reference forms, used by tests and by documentation examples.
double snake_ref(double x, double alpha, double beta);
double adaptive_snake_ref(double x, double alpha, double beta, double t);

/// Plain Snake. `alpha`, `beta` are materialised [C] tensors (not log values).
torch::Tensor snake(const torch::Tensor& x, const torch::Tensor& alpha,
                    const torch::Tensor& beta);

/// tanh(W s + b). s: [d] or [B, d], W: [C, d], b: [C] -> [C] or [B, C].
/// Throws InvalidArgument on a dimension mismatch.
torch::Tensor condition_transform(const torch::Tensor& s, const torch::Tensor& weight,
                                  const torch::Tensor& bias);

/// Adaptive Snake given the already-computed condition t = T(s) of shape
/// [B, C]. x: [B, C, T]; alpha, beta: [C].
torch::Tensor adaptive_snake(const torch::Tensor& x, const torch::Tensor& alpha,
                             const torch::Tensor& beta, const torch::Tensor& t);

/// Per-channel Snake with (optionally) log-scale alpha and beta.
struct SnakeOptions {
  long channels = 1;
  bool log_scale = true;
};

class SnakeImpl : public torch::nn::Module {
 public:
  explicit SnakeImpl(SnakeOptions opts);

  torch::Tensor forward(const torch::Tensor& x);
  [[nodiscard]] torch::Tensor alpha() const;
  [[nodiscard]] torch::Tensor beta() const;

  torch::Tensor alpha_param, beta_param;

 private:
  bool log_scale_;
};
TORCH_MODULE(Snake);

struct AdaptiveSnakeOptions {
  long channels = 1;
  long cond_dim = 1;
  bool log_scale = true;
};

/// Adaptive Snake: owns alpha, beta and the conditioning map (W, b). W and b
/// start at zero so a fresh layer behaves exactly like plain Snake.
class AdaptiveSnakeImpl : public torch::nn::Module {
 public:
  explicit AdaptiveSnakeImpl(AdaptiveSnakeOptions opts);

  /// x: [B, C, T], s: [B, cond_dim] (or [cond_dim], broadcast over B).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& s);
  [[nodiscard]] torch::Tensor alpha() const;
  [[nodiscard]] torch::Tensor beta() const;

  torch::Tensor alpha_param, beta_param, weight, bias;

 private:
  bool log_scale_;
};
TORCH_MODULE(AdaptiveSnake);

}  // namespace tokvc
