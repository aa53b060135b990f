#pragma once

// Inference: re-synthesis, any-to-any conversion, and objective metrics.

#include <filesystem>
#include <optional>
#include <span>

#include <torch/torch.h>

#include "tokvc/checkpoint.hpp"
#include "tokvc/config.hpp"
#include "tokvc/dsp.hpp"
#include "tokvc/features.hpp"
#include "tokvc/model.hpp"

namespace tokvc {

/// Frozen tokenizer plus vocoder in eval mode.
class VoiceConverter {
 public:
  VoiceConverter(Config cfg, SyntheticTokenizer tokenizer, Vocoder model);
  /// Rebuilds the configuration, tokenizer and generator weights stored in a
  /// training checkpoint.
  static VoiceConverter from_checkpoint(const Checkpoint& ckpt);
  static VoiceConverter load(const std::filesystem::path& path);

  /// tokens [frames, groups], prompt [prompt frames, prompt_dim] ->
  /// frames * hop samples.
  [[nodiscard]] dsp::Waveform synthesize(const TokenSeq& tokens, const torch::Tensor& prompt) const;
  /// Source tokens with the source itself (or `prompt`) as the prompt.
  [[nodiscard]] dsp::Waveform resynthesize(const dsp::Waveform& source,
                                           const std::optional<dsp::Waveform>& prompt = std::nullopt) const;
  /// Source tokens with the target reference as the prompt. Throws
  /// InvalidArgument when the reference is shorter than reference_floor_s.
  [[nodiscard]] dsp::Waveform convert(const dsp::Waveform& source, const dsp::Waveform& reference) const;

  [[nodiscard]] const Config& config() const { return cfg_; }
  [[nodiscard]] const SyntheticTokenizer& tokenizer() const { return tokenizer_; }
  [[nodiscard]] Vocoder model() const { return model_; }

 private:
  [[nodiscard]] dsp::Waveform prepare(const dsp::Waveform& w) const;

  Config cfg_;
  SyntheticTokenizer tokenizer_;
  Vocoder model_;
};

/// Cosine similarity of two embeddings. Throws InvalidArgument on a length
/// mismatch or a zero vector.
double secs(std::span<const double> a, std::span<const double> b);
double secs(const torch::Tensor& a, const torch::Tensor& b);

/// Pearson correlation of the two pitch contours over commonly voiced frames.
double eval_pcorr(const dsp::Waveform& source, const dsp::Waveform& converted,
                  const dsp::PitchConfig& cfg = {});

}  // namespace tokvc
