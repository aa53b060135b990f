#pragma once

// Full vocoder: content code-vectors and prompt features in, waveform out.

#include <torch/torch.h>

#include "tokvc/config.hpp"
#include "tokvc/frontend.hpp"
#include "tokvc/generator.hpp"

namespace tokvc {

struct VocoderOutput {
  torch::Tensor wav;       // [B, T * hop]
  torch::Tensor mel_pred;  // [B, T, n_mels] auxiliary frontend prediction
  torch::Tensor hidden;    // [B, T, attn_dim]
  torch::Tensor speaker;   // [B, prompt_dim]
};

class VocoderImpl : public torch::nn::Module {
 public:
  explicit VocoderImpl(ModelConfig cfg);

  /// Mean of the raw prompt features over valid frames, [B, prompt_dim].
  static torch::Tensor speaker_vector(const torch::Tensor& prompt, const torch::Tensor& prompt_mask = {});

  FrontendOutput run_frontend(const torch::Tensor& content, const torch::Tensor& content_mask,
                              const torch::Tensor& prompt, const torch::Tensor& prompt_mask);

  /// content [B, T, content_dim], prompt [B, Tp, prompt_dim].
  VocoderOutput forward(const torch::Tensor& content, const torch::Tensor& content_mask,
                        const torch::Tensor& prompt, const torch::Tensor& prompt_mask);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  Frontend frontend{nullptr};
  Generator generator{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(Vocoder);

struct ParamCounts {
  long frontend = 0;
  long generator = 0;
  [[nodiscard]] long total() const { return frontend + generator; }
};

/// Builds the model on the CPU and counts trainable scalars.
ParamCounts count_params(const ModelConfig& cfg);

}  // namespace tokvc
