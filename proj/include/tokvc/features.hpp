#pragma once

// Content tokens and prompt features: grouped codebook lookup, feature
// files, the synthetic stand-in tokenizer / prompt extractor and mean pooling.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "tokvc/dsp.hpp"

namespace tokvc {

/// Grouped integer content tokens, one row per 10 ms frame.
struct TokenSeq {
  torch::Tensor ids;  // [frames, groups], int64
  int frame_rate = 100;

  [[nodiscard]] long frames() const { return ids.defined() ? ids.size(0) : 0; }
  [[nodiscard]] long groups() const { return ids.defined() ? ids.size(1) : 0; }
};

/// Per-group code-vector tables; concatenating one row per group gives a
/// content frame.
struct CodebookSet {
  std::vector<torch::Tensor> tables;  // each [codebook_size, code_dim], float

  [[nodiscard]] long groups() const { return static_cast<long>(tables.size()); }
  [[nodiscard]] long content_dim() const;
};

/// Concatenated code-vectors, [frames, content_dim]. Throws InvalidArgument
/// when the group count differs or an id is out of range.
torch::Tensor embed_tokens(const TokenSeq& tokens, const CodebookSet& codebooks);

/// Time average of [frames, dim] prompt features. Each column is summed in
/// sorted order, so the result is bitwise independent of frame order.
torch::Tensor mean_pool(const torch::Tensor& prompt);
/// Batched form: prompt [B, frames, dim], mask [B, frames] (true = valid).
torch::Tensor mean_pool(const torch::Tensor& prompt, const torch::Tensor& mask);

struct KMeansResult {
  torch::Tensor centroids;        // [k, dim], float64
  std::vector<long> assignment;   // per point
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a given seed.
/// Throws InvalidArgument when there are fewer points than clusters.
KMeansResult kmeans(const torch::Tensor& points, long k, std::uint64_t seed,
                    int max_iterations = 100);

struct TokenizerConfig {
  long groups = 2;
  long codebook_size = 64;
  long content_dim = 512;
  long prompt_dim = 1024;
  /// Subtract each frame's mean within a band before clustering, so tokens
  /// carry band shape rather than absolute band level.
  bool normalize_bands = true;
  std::uint64_t seed = 1234;
  dsp::MelConfig mel;
};

/// Stand-in for a frozen self-supervised quantizer and timbre extractor:
/// k-means over contiguous mel bands gives grouped token ids, fixed random
/// projections give code-vectors and prompt features.
class SyntheticTokenizer {
 public:
  static SyntheticTokenizer fit(std::span<const dsp::Waveform> corpus, TokenizerConfig cfg);

  [[nodiscard]] TokenSeq tokenize(const dsp::Waveform& w) const;
  [[nodiscard]] TokenSeq tokenize_mel(const torch::Tensor& mel) const;
  /// [frames, prompt_dim] prompt features of a waveform.
  [[nodiscard]] torch::Tensor prompt_features(const dsp::Waveform& w) const;
  [[nodiscard]] torch::Tensor prompt_features_mel(const torch::Tensor& mel) const;

  [[nodiscard]] const CodebookSet& codebooks() const { return codebooks_; }
  [[nodiscard]] const TokenizerConfig& config() const { return cfg_; }
  /// Cluster centres in band-feature space, one [k, band_dims] per group.
  [[nodiscard]] const std::vector<torch::Tensor>& centroids() const { return centroids_; }
  /// [n_mels, prompt_dim] projection used by prompt_features().
  [[nodiscard]] const torch::Tensor& prompt_projection() const { return prompt_proj_; }

  /// Named tensors for embedding in checkpoints.
  [[nodiscard]] std::vector<std::pair<std::string, torch::Tensor>> tensors() const;
  static SyntheticTokenizer from_tensors(
      TokenizerConfig cfg, const std::vector<std::pair<std::string, torch::Tensor>>& named);

 private:
  [[nodiscard]] std::pair<long, long> band(long group) const;
  [[nodiscard]] torch::Tensor band_features(const torch::Tensor& mel, long group) const;
  void build_projections();

  TokenizerConfig cfg_;
  std::vector<torch::Tensor> centroids_;
  CodebookSet codebooks_;
  torch::Tensor prompt_proj_;
};

// Feature files: magic "FTR1", u32 rows, u32 cols, little-endian f32 payload.
// Token files: magic "TOK1", u32 frames, u32 groups, little-endian i32 payload.
void write_feature_file(const std::filesystem::path& path, const torch::Tensor& matrix);
torch::Tensor read_feature_file(const std::filesystem::path& path);
void write_token_file(const std::filesystem::path& path, const TokenSeq& tokens);
TokenSeq read_token_file(const std::filesystem::path& path);

}  // namespace tokvc
