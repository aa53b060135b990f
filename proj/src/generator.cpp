#include "tokvc/generator.hpp"

#include <numeric>

#include "tokvc/dsp.hpp"
#include "tokvc/errors.hpp"

namespace tokvc {

namespace nn = torch::nn;

namespace {

constexpr double kLeakySlope = 0.1;
constexpr double kInitStd = 0.01;

nn::Conv1d same_conv(long channels, long kernel, long dilation) {
  auto conv = nn::Conv1d(nn::Conv1dOptions(channels, channels, kernel)
                             .dilation(dilation)
                             .padding(dilation * (kernel - 1) / 2));
  torch::NoGradGuard guard;
  conv->weight.normal_(0.0, kInitStd);
  return conv;
}

}  // namespace

std::string to_string(ActivationKind k) {
  return k == ActivationKind::kAdaptiveSnake ? "adaptive_snake" : "snake";
}

std::string to_string(Architecture a) { return a == Architecture::kBigVGAN ? "bigvgan" : "hifigan"; }

ActivationKind parse_activation(const std::string& s) {
  if (s == "adaptive_snake") return ActivationKind::kAdaptiveSnake;
  if (s == "snake") return ActivationKind::kSnake;
  throw InvalidArgument("unknown activation '" + s + "' (adaptive_snake | snake)");
}

Architecture parse_architecture(const std::string& s) {
  if (s == "bigvgan") return Architecture::kBigVGAN;
  if (s == "hifigan") return Architecture::kHifiGAN;
  throw InvalidArgument("unknown architecture '" + s + "' (bigvgan | hifigan)");
}

long GeneratorConfig::hop() const {
  return std::accumulate(upsample_factors.begin(), upsample_factors.end(), 1L, std::multiplies<>());
}

void GeneratorConfig::validate(int sample_rate) const {
  if (upsample_factors.empty() || upsample_factors.size() != upsample_kernels.size()) {
    throw InvalidArgument("upsample factors and kernels must be non-empty and equally long");
  }
  for (size_t i = 0; i < upsample_factors.size(); ++i) {
    if (upsample_factors[i] < 1 || upsample_kernels[i] < upsample_factors[i]) {
      throw InvalidArgument("each upsample kernel must be at least its factor");
    }
  }
  if (hop() * 100 != sample_rate) {
    throw InvalidArgument("product of upsample factors (" + std::to_string(hop()) +
                          ") must equal sample_rate / 100");
  }
  if (base_channels >> upsample_factors.size() < 1) {
    throw InvalidArgument("base_channels too small to halve at every stage");
  }
  if (amp_kernel_sizes.empty() || amp_dilations.empty()) throw InvalidArgument("AMP kernels and dilations required");
  for (long k : amp_kernel_sizes) {
    if (k % 2 == 0) throw InvalidArgument("AMP kernel sizes must be odd");
  }
  if (convs_per_dilation != 1 && convs_per_dilation != 2) throw InvalidArgument("convs_per_dilation must be 1 or 2");
  if (in_dim < 1 || cond_dim < 1) throw InvalidArgument("generator dims must be positive");
}

long parameter_count(const nn::Module& m) {
  long n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------- activation

AntiAliasedActivationImpl::AntiAliasedActivationImpl(long channels, const GeneratorConfig& cfg) {
  if (cfg.activation == ActivationKind::kAdaptiveSnake) {
    adaptive = register_module("snake", AdaptiveSnake(AdaptiveSnakeOptions{channels, cfg.cond_dim, true}));
  } else {
    plain = register_module("snake", Snake(SnakeOptions{channels, true}));
  }
  const auto f = dsp::halfband_filter(cfg.lp_transition, cfg.lp_atten_db);
  std::vector<float> t(f.taps.begin(), f.taps.end());
  taps = register_buffer("lp_taps", torch::tensor(t));
}

torch::Tensor AntiAliasedActivationImpl::forward(const torch::Tensor& x, const torch::Tensor& s) {
  auto up = dsp::upsample2x(x, taps);
  up = adaptive ? adaptive->forward(up, s) : plain->forward(up);
  return dsp::downsample2x(up, taps);
}

// ---------------------------------------------------------------- residual blocks

AMPBlockImpl::AMPBlockImpl(long channels, long kernel, const GeneratorConfig& cfg)
    : convs_per_dilation(cfg.convs_per_dilation) {
  acts = register_module("acts", nn::ModuleList());
  convs = register_module("convs", nn::ModuleList());
  for (long d : cfg.amp_dilations) {
    acts->push_back(AntiAliasedActivation(channels, cfg));
    convs->push_back(same_conv(channels, kernel, d));
    if (convs_per_dilation == 2) {
      acts->push_back(AntiAliasedActivation(channels, cfg));
      convs->push_back(same_conv(channels, kernel, 1));
    }
  }
}

torch::Tensor AMPBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& s) {
  auto x = x_in;
  for (size_t i = 0; i < convs->size(); i += convs_per_dilation) {
    auto h = x;
    for (long j = 0; j < convs_per_dilation; ++j) {
      h = acts[i + j]->as<AntiAliasedActivation>()->forward(h, s);
      h = convs[i + j]->as<nn::Conv1d>()->forward(h);
    }
    x = x + h;
  }
  return x;
}

HifiResBlockImpl::HifiResBlockImpl(long channels, long kernel, const GeneratorConfig& cfg)
    : convs_per_dilation(cfg.convs_per_dilation) {
  convs = register_module("convs", nn::ModuleList());
  for (long d : cfg.amp_dilations) {
    convs->push_back(same_conv(channels, kernel, d));
    if (convs_per_dilation == 2) convs->push_back(same_conv(channels, kernel, 1));
  }
}

torch::Tensor HifiResBlockImpl::forward(const torch::Tensor& x_in) {
  auto x = x_in;
  for (size_t i = 0; i < convs->size(); i += convs_per_dilation) {
    auto h = x;
    for (long j = 0; j < convs_per_dilation; ++j) {
      h = convs[i + j]->as<nn::Conv1d>()->forward(torch::leaky_relu(h, kLeakySlope));
    }
    x = x + h;
  }
  return x;
}

// ---------------------------------------------------------------- generator

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate(static_cast<int>(cfg_.hop() * 100));
  long ch = cfg_.base_channels;
  conv_pre = register_module("conv_pre", nn::Conv1d(nn::Conv1dOptions(cfg_.in_dim, ch, 7).padding(3)));
  ups = register_module("ups", nn::ModuleList());
  blocks = register_module("blocks", nn::ModuleList());
  for (size_t i = 0; i < cfg_.upsample_factors.size(); ++i) {
    const long u = cfg_.upsample_factors[i];
    const long k = cfg_.upsample_kernels[i];
    const long pad = (k - u + 1) / 2;
    const long out_pad = 2 * pad - (k - u);
    auto up = nn::ConvTranspose1d(nn::ConvTranspose1dOptions(ch, ch / 2, k).stride(u).padding(pad).output_padding(out_pad));
    {
      torch::NoGradGuard guard;
      up->weight.normal_(0.0, kInitStd);
    }
    ups->push_back(up);
    ch /= 2;
    for (long kernel : cfg_.amp_kernel_sizes) {
      if (cfg_.architecture == Architecture::kBigVGAN) {
        blocks->push_back(AMPBlock(ch, kernel, cfg_));
      } else {
        blocks->push_back(HifiResBlock(ch, kernel, cfg_));
      }
    }
  }
  if (cfg_.architecture == Architecture::kBigVGAN) {
    act_post = register_module("act_post", AntiAliasedActivation(ch, cfg_));
  }
  conv_post = register_module("conv_post", nn::Conv1d(nn::Conv1dOptions(ch, 1, 7).padding(3)));
}

torch::Tensor GeneratorImpl::stage(size_t index, const torch::Tensor& x_in, const torch::Tensor& speaker) {
  auto x = x_in;
  if (cfg_.architecture == Architecture::kHifiGAN) x = torch::leaky_relu(x, kLeakySlope);
  x = ups[index]->as<nn::ConvTranspose1d>()->forward(x);
  const size_t per_stage = cfg_.amp_kernel_sizes.size();
  torch::Tensor acc;
  for (size_t j = 0; j < per_stage; ++j) {
    const auto& m = blocks[index * per_stage + j];
    auto y = cfg_.architecture == Architecture::kBigVGAN ? m->as<AMPBlock>()->forward(x, speaker)
                                                         : m->as<HifiResBlock>()->forward(x);
    acc = acc.defined() ? acc + y : y;
  }
  return acc / static_cast<double>(per_stage);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& hidden, const torch::Tensor& speaker) {
  if (hidden.dim() != 3 || hidden.size(1) < 1 || hidden.size(2) != cfg_.in_dim) {
    throw InvalidArgument("generator: hidden must be [B, frames >= 1, " + std::to_string(cfg_.in_dim) + "]");
  }
  if (speaker.dim() != 2 || speaker.size(1) != cfg_.cond_dim ||
      (speaker.size(0) != hidden.size(0) && speaker.size(0) != 1)) {
    throw InvalidArgument("generator: speaker vector must be [B, " + std::to_string(cfg_.cond_dim) + "]");
  }
  auto x = conv_pre->forward(hidden.transpose(1, 2));
  for (size_t i = 0; i < cfg_.upsample_factors.size(); ++i) x = stage(i, x, speaker);
  if (cfg_.architecture == Architecture::kBigVGAN) {
    x = act_post->forward(x, speaker);
  } else {
    x = torch::leaky_relu(x, 0.01);
  }
  return torch::tanh(conv_post->forward(x)).squeeze(1);
}

}  // namespace tokvc
