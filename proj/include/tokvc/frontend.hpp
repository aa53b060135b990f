#pragma once

// Conformer frontend: content projection, prompt prenet, Conformer blocks
// with relative-position self-attention on the content stream and
// position-agnostic cross-attention over the prompt, auxiliary mel head.
//
// Sequences are batch-first, [B, T, D]. Masks are [B, T] booleans with true
// marking valid frames; an undefined mask means "all valid".

#include <vector>

#include <torch/torch.h>

namespace tokvc {

struct FrontendConfig {
  long content_dim = 512;
  long prompt_dim = 1024;
  long n_blocks = 2;
  long attn_dim = 184;
  long n_heads = 2;
  long ff_mult = 4;
  long conv_kernel = 31;
  std::vector<long> prenet_dims{128, 256, 512, 512};
  long prenet_kernel = 5;
  long n_mels = 80;
  double dropout = 0.1;

  void validate() const;
};

/// Stride-1 1-D CNN over prompt features. Each block computes
/// (residual(x) + relu(conv(x))) / sqrt(2); the residual is identity when
/// widths agree and a 1x1 convolution otherwise.
class PromptPrenetImpl : public torch::nn::Module {
 public:
  explicit PromptPrenetImpl(const FrontendConfig& cfg);

  /// [B, Tp, prompt_dim] -> [B, Tp, prenet_dims.back()]
  torch::Tensor forward(const torch::Tensor& prompt, const torch::Tensor& mask = {});
  /// Single block, [B, C, T] layout; exposed for tests.
  torch::Tensor block(size_t index, const torch::Tensor& x);
  torch::Tensor residual(size_t index, const torch::Tensor& x);

  torch::nn::ModuleList convs{nullptr};
  torch::nn::ModuleList skips{nullptr};
};
TORCH_MODULE(PromptPrenet);

struct AttentionResult {
  torch::Tensor output;   // [B, Tq, D] after the output projection
  torch::Tensor context;  // [B, Tq, D] weighted values before the output projection
  torch::Tensor weights;  // [B, H, Tq, Tk]
};

/// Multi-head scaled dot-product attention with no positional encoding on
/// either side. Each query's context is a convex combination of the value
/// projections, so the result is invariant to the order of key/value frames.
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(long query_dim, long kv_dim, long attn_dim, long n_heads, double dropout);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& kv,
                        const torch::Tensor& kv_mask = {});
  AttentionResult attend(const torch::Tensor& query, const torch::Tensor& kv,
                         const torch::Tensor& kv_mask = {});

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
  torch::nn::Dropout dropout{nullptr};
  long n_heads;
};
TORCH_MODULE(CrossAttention);

/// Sinusoidal table for relative offsets T-1, T-2, ..., -(T-1): [2T-1, dim].
torch::Tensor relative_position_table(long length, long dim);

/// Re-indexes [.., T, 2T-1] scores against the relative table so that entry
/// (i, j) holds the score for offset i - j, giving [.., T, T].
torch::Tensor relative_shift(const torch::Tensor& scores);

/// Self-attention with relative positional encoding (Transformer-XL style
/// content and position biases).
class RelPositionSelfAttentionImpl : public torch::nn::Module {
 public:
  RelPositionSelfAttentionImpl(long dim, long n_heads, double dropout);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& pos_table,
                        const torch::Tensor& mask = {});

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
  torch::nn::Linear pos_proj{nullptr};
  torch::Tensor pos_bias_u, pos_bias_v;
  torch::nn::Dropout dropout{nullptr};
  long n_heads;
};
TORCH_MODULE(RelPositionSelfAttention);

class ConformerBlockImpl : public torch::nn::Module {
 public:
  ConformerBlockImpl(const FrontendConfig& cfg, long kv_dim);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& pos_table,
                        const torch::Tensor& mask, const torch::Tensor& prompt,
                        const torch::Tensor& prompt_mask);

  torch::nn::Sequential ff1{nullptr}, ff2{nullptr};
  RelPositionSelfAttention self_attn{nullptr};
  CrossAttention cross_attn{nullptr};
  torch::nn::Linear conv_in{nullptr}, conv_out{nullptr};
  torch::nn::Conv1d depthwise{nullptr};
  torch::nn::LayerNorm conv_norm{nullptr};
  torch::nn::LayerNorm ln_ff1{nullptr}, ln_self{nullptr}, ln_cross{nullptr}, ln_conv{nullptr},
      ln_ff2{nullptr}, ln_out{nullptr};
  torch::nn::Dropout dropout{nullptr};
};
TORCH_MODULE(ConformerBlock);

struct FrontendOutput {
  torch::Tensor hidden;    // [B, T, attn_dim]
  torch::Tensor mel_pred;  // [B, T, n_mels]
};

class FrontendImpl : public torch::nn::Module {
 public:
  explicit FrontendImpl(FrontendConfig cfg);

  FrontendOutput forward(const torch::Tensor& content, const torch::Tensor& content_mask,
                         const torch::Tensor& prompt, const torch::Tensor& prompt_mask);

  /// Runs the blocks on an already-computed prenet output; used to check
  /// invariance to the order of key/value frames.
  FrontendOutput forward_with_prompt_hidden(const torch::Tensor& content,
                                            const torch::Tensor& content_mask,
                                            const torch::Tensor& prompt_hidden,
                                            const torch::Tensor& prompt_mask);

  [[nodiscard]] const FrontendConfig& config() const { return cfg_; }

  torch::nn::Linear content_proj{nullptr};
  PromptPrenet prenet{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::Linear mel_head{nullptr};

 private:
  FrontendConfig cfg_;
};
TORCH_MODULE(Frontend);

}  // namespace tokvc
