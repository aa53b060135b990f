#include "tokvc/frontend.hpp"

#include <cmath>
#include <limits>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace nn = torch::nn;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

torch::Tensor zero_invalid(const torch::Tensor& x, const torch::Tensor& mask) {
  if (!mask.defined()) return x;
  return x * mask.unsqueeze(-1).to(x.dtype());
}

// [B, Tk] validity -> additive [B, 1, 1, Tk] bias.
torch::Tensor key_bias(const torch::Tensor& mask, const torch::TensorOptions& opts) {
  auto bias = torch::zeros(mask.sizes(), opts);
  bias.masked_fill_(mask.logical_not(), -std::numeric_limits<float>::infinity());
  return bias.unsqueeze(1).unsqueeze(1);
}

torch::Tensor split_heads(const torch::Tensor& x, long heads) {
  const auto b = x.size(0), t = x.size(1), d = x.size(2);
  return x.view({b, t, heads, d / heads}).transpose(1, 2);
}

torch::Tensor merge_heads(const torch::Tensor& x) {
  const auto b = x.size(0), h = x.size(1), t = x.size(2), dk = x.size(3);
  return x.transpose(1, 2).contiguous().view({b, t, h * dk});
}

nn::Sequential feed_forward(long dim, long mult, double p) {
  return nn::Sequential(nn::Linear(dim, dim * mult), nn::SiLU(), nn::Dropout(p),
                        nn::Linear(dim * mult, dim), nn::Dropout(p));
}

}  // namespace

void FrontendConfig::validate() const {
  if (attn_dim <= 0 || n_heads <= 0 || attn_dim % n_heads != 0) {
    throw InvalidArgument("attn_dim must be a positive multiple of n_heads");
  }
  if (n_blocks < 1 || prenet_dims.empty() || conv_kernel % 2 == 0 || prenet_kernel % 2 == 0) {
    throw InvalidArgument("frontend needs >= 1 block, a non-empty prenet and odd kernels");
  }
}

// ---------------------------------------------------------------- prenet

PromptPrenetImpl::PromptPrenetImpl(const FrontendConfig& cfg) {
  convs = register_module("convs", nn::ModuleList());
  skips = register_module("skips", nn::ModuleList());
  long in = cfg.prompt_dim;
  for (long out : cfg.prenet_dims) {
    convs->push_back(nn::Conv1d(nn::Conv1dOptions(in, out, cfg.prenet_kernel).padding(cfg.prenet_kernel / 2)));
    if (in == out) {
      skips->push_back(nn::Identity());
    } else {
      skips->push_back(nn::Conv1d(nn::Conv1dOptions(in, out, 1).bias(false)));
    }
    in = out;
  }
}

torch::Tensor PromptPrenetImpl::residual(size_t index, const torch::Tensor& x) {
  auto skip = skips[index];
  if (auto conv = skip->as<nn::Conv1d>()) return conv->forward(x);
  return x;
}

torch::Tensor PromptPrenetImpl::block(size_t index, const torch::Tensor& x) {
  const auto h = torch::relu(convs[index]->as<nn::Conv1d>()->forward(x));
  return (residual(index, x) + h) * kInvSqrt2;
}

torch::Tensor PromptPrenetImpl::forward(const torch::Tensor& prompt, const torch::Tensor& mask) {
  if (prompt.dim() != 3 || prompt.size(1) < 1) {
    throw InvalidArgument("prompt prenet expects [B, frames >= 1, dim]");
  }
  auto x = zero_invalid(prompt, mask).transpose(1, 2);
  const auto m = mask.defined() ? mask.unsqueeze(1).to(x.dtype()) : torch::Tensor();
  for (size_t i = 0; i < convs->size(); ++i) {
    x = block(i, x);
    if (m.defined()) x = x * m;
  }
  return x.transpose(1, 2);
}

// ---------------------------------------------------------------- cross attention

CrossAttentionImpl::CrossAttentionImpl(long query_dim, long kv_dim, long attn_dim, long heads, double p)
    : n_heads(heads) {
  q_proj = register_module("q_proj", nn::Linear(query_dim, attn_dim));
  k_proj = register_module("k_proj", nn::Linear(kv_dim, attn_dim));
  v_proj = register_module("v_proj", nn::Linear(kv_dim, attn_dim));
  out_proj = register_module("out_proj", nn::Linear(attn_dim, query_dim));
  dropout = register_module("dropout", nn::Dropout(p));
}

AttentionResult CrossAttentionImpl::attend(const torch::Tensor& query, const torch::Tensor& kv,
                                           const torch::Tensor& kv_mask) {
  if (kv.dim() != 3 || kv.size(1) < 1) throw InvalidArgument("cross-attention needs at least one key/value frame");
  if (query.dim() != 3 || query.size(0) != kv.size(0)) throw InvalidArgument("cross-attention batch mismatch");
  const auto q = split_heads(q_proj->forward(query), n_heads);
  const auto k = split_heads(k_proj->forward(kv), n_heads);
  const auto v = split_heads(v_proj->forward(kv), n_heads);
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(q.size(-1)));
  if (kv_mask.defined()) scores = scores + key_bias(kv_mask, scores.options());
  const auto weights = torch::softmax(scores, -1);
  const auto context = merge_heads(torch::matmul(dropout->forward(weights), v));
  return {out_proj->forward(context), context, weights};
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& kv,
                                          const torch::Tensor& kv_mask) {
  return attend(query, kv, kv_mask).output;
}

// ---------------------------------------------------------------- relative self attention

torch::Tensor relative_position_table(long length, long dim) {
  const auto offsets = torch::arange(length - 1, -length, -1, torch::kFloat32).unsqueeze(1);
  const auto freq = torch::exp(torch::arange(0, dim, 2, torch::kFloat32) *
                               (-std::log(10000.0) / static_cast<double>(dim)));
  auto table = torch::zeros({2 * length - 1, dim});
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, torch::indexing::None, 2)},
                   torch::sin(offsets * freq));
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(1, torch::indexing::None, 2)},
                   torch::cos(offsets * freq).narrow(1, 0, dim / 2));
  return table;
}

torch::Tensor relative_shift(const torch::Tensor& scores) {
  auto sizes = scores.sizes().vec();
  const long t = sizes[sizes.size() - 2];
  const long w = sizes.back();  // 2t - 1
  auto pad_sizes = sizes;
  pad_sizes.back() = 1;
  auto padded = torch::cat({torch::zeros(pad_sizes, scores.options()), scores}, -1);
  auto view_sizes = std::vector<long>(sizes.begin(), sizes.end() - 2);
  view_sizes.push_back(w + 1);
  view_sizes.push_back(t);
  padded = padded.view(view_sizes);
  auto shifted = padded.narrow(-2, 1, w).reshape(sizes);
  return shifted.narrow(-1, 0, t);
}

RelPositionSelfAttentionImpl::RelPositionSelfAttentionImpl(long dim, long heads, double p)
    : n_heads(heads) {
  q_proj = register_module("q_proj", nn::Linear(dim, dim));
  k_proj = register_module("k_proj", nn::Linear(dim, dim));
  v_proj = register_module("v_proj", nn::Linear(dim, dim));
  out_proj = register_module("out_proj", nn::Linear(dim, dim));
  pos_proj = register_module("pos_proj", nn::Linear(nn::LinearOptions(dim, dim).bias(false)));
  const long dk = dim / heads;
  pos_bias_u = register_parameter("pos_bias_u", torch::empty({heads, dk}));
  pos_bias_v = register_parameter("pos_bias_v", torch::empty({heads, dk}));
  const double bound = std::sqrt(6.0 / static_cast<double>(heads + dk));
  torch::NoGradGuard guard;
  pos_bias_u.uniform_(-bound, bound);
  pos_bias_v.uniform_(-bound, bound);
  dropout = register_module("dropout", nn::Dropout(p));
}

torch::Tensor RelPositionSelfAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& pos_table,
                                                    const torch::Tensor& mask) {
  const long b = x.size(0), t = x.size(1), d = x.size(2);
  const long dk = d / n_heads;
  const auto q = q_proj->forward(x).view({b, t, n_heads, dk});
  const auto k = split_heads(k_proj->forward(x), n_heads);
  const auto v = split_heads(v_proj->forward(x), n_heads);
  const auto p = pos_proj->forward(pos_table).view({1, -1, n_heads, dk}).transpose(1, 2);

  const auto q_u = (q + pos_bias_u).transpose(1, 2);
  const auto q_v = (q + pos_bias_v).transpose(1, 2);
  const auto content_scores = torch::matmul(q_u, k.transpose(-2, -1));
  const auto position_scores = relative_shift(torch::matmul(q_v, p.transpose(-2, -1)));
  auto scores = (content_scores + position_scores) / std::sqrt(static_cast<double>(dk));
  if (mask.defined()) scores = scores + key_bias(mask, scores.options());
  const auto weights = torch::softmax(scores, -1);
  return out_proj->forward(merge_heads(torch::matmul(dropout->forward(weights), v)));
}

// ---------------------------------------------------------------- conformer block

ConformerBlockImpl::ConformerBlockImpl(const FrontendConfig& cfg, long kv_dim) {
  const long d = cfg.attn_dim;
  ff1 = register_module("ff1", feed_forward(d, cfg.ff_mult, cfg.dropout));
  ff2 = register_module("ff2", feed_forward(d, cfg.ff_mult, cfg.dropout));
  self_attn = register_module("self_attn", RelPositionSelfAttention(d, cfg.n_heads, cfg.dropout));
  cross_attn = register_module("cross_attn", CrossAttention(d, kv_dim, d, cfg.n_heads, cfg.dropout));
  conv_in = register_module("conv_in", nn::Linear(d, 2 * d));
  depthwise = register_module(
      "depthwise", nn::Conv1d(nn::Conv1dOptions(d, d, cfg.conv_kernel).padding(cfg.conv_kernel / 2).groups(d)));
  conv_norm = register_module("conv_norm", nn::LayerNorm(nn::LayerNormOptions({d})));
  conv_out = register_module("conv_out", nn::Linear(d, d));
  auto ln = [&](const char* name) { return register_module(name, nn::LayerNorm(nn::LayerNormOptions({d}))); };
  ln_ff1 = ln("ln_ff1");
  ln_self = ln("ln_self");
  ln_cross = ln("ln_cross");
  ln_conv = ln("ln_conv");
  ln_ff2 = ln("ln_ff2");
  ln_out = ln("ln_out");
  dropout = register_module("dropout", nn::Dropout(cfg.dropout));
}

torch::Tensor ConformerBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& pos_table,
                                          const torch::Tensor& mask, const torch::Tensor& prompt,
                                          const torch::Tensor& prompt_mask) {
  auto x = x_in + 0.5 * ff1->forward(ln_ff1->forward(x_in));
  x = x + dropout->forward(self_attn->forward(ln_self->forward(x), pos_table, mask));
  x = x + dropout->forward(cross_attn->forward(ln_cross->forward(x), prompt, prompt_mask));

  auto c = torch::glu(conv_in->forward(ln_conv->forward(x)), -1);
  c = zero_invalid(c, mask);
  c = depthwise->forward(c.transpose(1, 2)).transpose(1, 2);
  c = conv_out->forward(torch::silu(conv_norm->forward(c)));
  x = x + dropout->forward(c);

  x = x + 0.5 * ff2->forward(ln_ff2->forward(x));
  return zero_invalid(ln_out->forward(x), mask);
}

// ---------------------------------------------------------------- frontend

FrontendImpl::FrontendImpl(FrontendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  content_proj = register_module("content_proj", nn::Linear(cfg_.content_dim, cfg_.attn_dim));
  prenet = register_module("prenet", PromptPrenet(cfg_));
  blocks = register_module("blocks", nn::ModuleList());
  for (long i = 0; i < cfg_.n_blocks; ++i) blocks->push_back(ConformerBlock(cfg_, cfg_.prenet_dims.back()));
  mel_head = register_module("mel_head", nn::Linear(cfg_.attn_dim, cfg_.n_mels));
}

FrontendOutput FrontendImpl::forward(const torch::Tensor& content, const torch::Tensor& content_mask,
                                     const torch::Tensor& prompt, const torch::Tensor& prompt_mask) {
  if (prompt.dim() != 3 || prompt.size(-1) != cfg_.prompt_dim) {
    throw InvalidArgument("frontend: prompt features must be [B, Tp, " + std::to_string(cfg_.prompt_dim) + "]");
  }
  return forward_with_prompt_hidden(content, content_mask, prenet->forward(prompt, prompt_mask), prompt_mask);
}

FrontendOutput FrontendImpl::forward_with_prompt_hidden(const torch::Tensor& content,
                                                        const torch::Tensor& content_mask,
                                                        const torch::Tensor& prompt_hidden,
                                                        const torch::Tensor& prompt_mask) {
  if (content.dim() != 3 || content.size(1) < 1 || content.size(-1) != cfg_.content_dim) {
    throw InvalidArgument("frontend: content must be [B, frames >= 1, " + std::to_string(cfg_.content_dim) + "]");
  }
  if (prompt_hidden.size(0) != content.size(0)) throw InvalidArgument("frontend: batch size mismatch");
  auto x = zero_invalid(content_proj->forward(content), content_mask);
  const auto pos = relative_position_table(content.size(1), cfg_.attn_dim).to(x.dtype());
  for (const auto& m : *blocks) {
    x = m->as<ConformerBlock>()->forward(x, pos, content_mask, prompt_hidden, prompt_mask);
  }
  return {x, mel_head->forward(x)};
}

}  // namespace tokvc
