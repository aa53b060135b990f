#pragma once

// Multi-period and multi-scale waveform discriminators and the adversarial,
// feature-matching and mel reconstruction losses.

#include <vector>

#include <torch/torch.h>

#include "tokvc/dsp.hpp"

namespace tokvc {

struct DiscriminatorConfig {
  std::vector<long> periods{2, 3, 5, 7, 11};
  std::vector<long> mpd_channels{32, 128, 512, 1024, 1024};
  /// Seven conv widths per scale discriminator; grouping follows
  /// {1, 4, 16, 16, 16, 16, 1}.
  std::vector<long> msd_channels{128, 128, 256, 512, 1024, 1024, 1024};
  long msd_scales = 3;

  void validate() const;
};

/// Scores and intermediate feature maps, one entry per sub-discriminator.
struct DiscOutputs {
  std::vector<torch::Tensor> scores;
  std::vector<std::vector<torch::Tensor>> feats;

  [[nodiscard]] size_t size() const { return scores.size(); }
};

/// Right-pads [B, T] (reflect, replicate if too short) to a multiple of
/// `period` and folds it to [B, 1, T / period, period].
torch::Tensor fold_by_period(const torch::Tensor& wav, long period);

/// ceil(T / 2) average pooling with stride 2.
torch::Tensor halve_rate(const torch::Tensor& wav);

class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  PeriodDiscriminatorImpl(long period, const std::vector<long>& channels);
  torch::Tensor forward(const torch::Tensor& wav, std::vector<torch::Tensor>& feats);

  long period;
  torch::nn::ModuleList convs{nullptr};
  torch::nn::Conv2d post{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

class ScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ScaleDiscriminatorImpl(const std::vector<long>& channels);
  torch::Tensor forward(const torch::Tensor& wav, std::vector<torch::Tensor>& feats);

  torch::nn::ModuleList convs{nullptr};
  torch::nn::Conv1d post{nullptr};
};
TORCH_MODULE(ScaleDiscriminator);

class MultiPeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiPeriodDiscriminatorImpl(const DiscriminatorConfig& cfg);
  /// wav: [B, T] (non-empty)
  DiscOutputs forward(const torch::Tensor& wav);

  torch::nn::ModuleList discs{nullptr};
};
TORCH_MODULE(MultiPeriodDiscriminator);

class MultiScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiScaleDiscriminatorImpl(const DiscriminatorConfig& cfg);
  /// Scale i sees the waveform average-pooled i times by 2.
  DiscOutputs forward(const torch::Tensor& wav);

  torch::nn::ModuleList discs{nullptr};
};
TORCH_MODULE(MultiScaleDiscriminator);

/// MPD and MSD together.
class DiscriminatorsImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorsImpl(const DiscriminatorConfig& cfg);
  DiscOutputs forward(const torch::Tensor& wav);

  MultiPeriodDiscriminator mpd{nullptr};
  MultiScaleDiscriminator msd{nullptr};
};
TORCH_MODULE(Discriminators);

// ---------------------------------------------------------------- losses

struct LossWeights {
  double adv = 1.0;
  double feat_match = 2.0;
  double mel = 45.0;
  double aux_mel = 60.0;
  long aux_warmup_steps = 2000;

  void validate() const;
};

/// Least-squares discriminator loss: sum over maps of mean((r-1)^2) + mean(f^2).
torch::Tensor lsgan_d_loss(const std::vector<torch::Tensor>& real, const std::vector<torch::Tensor>& fake);
/// Least-squares generator loss: sum over maps of mean((f-1)^2).
torch::Tensor lsgan_g_loss(const std::vector<torch::Tensor>& fake);
/// Mean |r - f| per layer, averaged over layers, summed over sub-discriminators.
torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real,
                                    const std::vector<std::vector<torch::Tensor>>& fake);
/// Mean absolute difference; optional mask broadcast over the last axis
/// selects valid frames.
torch::Tensor mel_l1(const torch::Tensor& pred, const torch::Tensor& target,
                     const torch::Tensor& frame_mask = {});
/// Auxiliary mel weight: w.aux_mel before aux_warmup_steps, 0 from then on.
double aux_weight(long step, const LossWeights& w);

}  // namespace tokvc
