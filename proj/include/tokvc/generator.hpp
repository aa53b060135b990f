#pragma once

// Waveform generator: transposed-convolution upsampling stages, each followed
// by anti-aliased multi-periodicity (AMP) residual blocks whose Snake
// nonlinearities are conditioned on a speaker vector. Ablation variants swap
// in plain Snake or a HiFi-GAN style leaky-ReLU stack.

#include <string>
#include <vector>

#include <torch/torch.h>

#include "tokvc/activations.hpp"

namespace tokvc {

enum class ActivationKind { kAdaptiveSnake, kSnake };
enum class Architecture { kBigVGAN, kHifiGAN };

std::string to_string(ActivationKind k);
std::string to_string(Architecture a);
ActivationKind parse_activation(const std::string& s);
Architecture parse_architecture(const std::string& s);

struct GeneratorConfig {
  long in_dim = 184;
  long base_channels = 656;
  std::vector<long> upsample_factors{8, 5, 3, 2};
  std::vector<long> upsample_kernels{16, 10, 6, 4};
  std::vector<long> amp_kernel_sizes{3, 7, 11};
  std::vector<long> amp_dilations{1, 3, 5};
  /// Convolutions per dilation inside an AMP block: 1 applies
  /// act -> dilated conv; 2 appends act -> undilated conv.
  long convs_per_dilation = 2;
  ActivationKind activation = ActivationKind::kAdaptiveSnake;
  Architecture architecture = Architecture::kBigVGAN;
  long cond_dim = 1024;
  /// Low-pass filter around each nonlinearity.
  double lp_transition = 0.1;
  double lp_atten_db = 80.0;

  /// Samples produced per input frame.
  [[nodiscard]] long hop() const;
  /// Throws InvalidArgument on inconsistent lists or when hop * 100 differs
  /// from the sample rate.
  void validate(int sample_rate = 24000) const;
};

/// Nonlinearity evaluated at twice the signal rate: 2x upsample, activation,
/// 2x downsample, with the half-band filter of GeneratorConfig.
class AntiAliasedActivationImpl : public torch::nn::Module {
 public:
  AntiAliasedActivationImpl(long channels, const GeneratorConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& s);

  AdaptiveSnake adaptive{nullptr};
  Snake plain{nullptr};
  torch::Tensor taps;
};
TORCH_MODULE(AntiAliasedActivation);

/// Residual stack over the configured dilations for one kernel size.
class AMPBlockImpl : public torch::nn::Module {
 public:
  AMPBlockImpl(long channels, long kernel, const GeneratorConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& s);

  torch::nn::ModuleList acts{nullptr};
  torch::nn::ModuleList convs{nullptr};
  long convs_per_dilation;
};
TORCH_MODULE(AMPBlock);

/// Leaky-ReLU residual stack without filtering (HiFi-GAN variant).
class HifiResBlockImpl : public torch::nn::Module {
 public:
  HifiResBlockImpl(long channels, long kernel, const GeneratorConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList convs{nullptr};
  long convs_per_dilation;
};
TORCH_MODULE(HifiResBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);

  /// hidden [B, T, in_dim], speaker [B, cond_dim] -> waveform [B, T * hop].
  torch::Tensor forward(const torch::Tensor& hidden, const torch::Tensor& speaker);

  /// Channels-first stage output before the final activation; exposed for tests.
  torch::Tensor stage(size_t index, const torch::Tensor& x, const torch::Tensor& speaker);

  [[nodiscard]] const GeneratorConfig& config() const { return cfg_; }

  torch::nn::Conv1d conv_pre{nullptr}, conv_post{nullptr};
  torch::nn::ModuleList ups{nullptr};
  torch::nn::ModuleList blocks{nullptr};  // stage-major, amp_kernel_sizes per stage
  AntiAliasedActivation act_post{nullptr};

 private:
  GeneratorConfig cfg_;
};
TORCH_MODULE(Generator);

/// Total trainable scalars of a module tree.
long parameter_count(const torch::nn::Module& m);

}  // namespace tokvc
