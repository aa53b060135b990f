#include "tokvc/discriminators.hpp"

#include "tokvc/errors.hpp"

namespace tokvc {

namespace nn = torch::nn;

namespace {

constexpr double kSlope = 0.1;
constexpr long kMsdGroups[] = {1, 4, 16, 16, 16, 16, 1};
constexpr long kMsdKernels[] = {15, 41, 41, 41, 41, 41, 5};
constexpr long kMsdStrides[] = {1, 2, 2, 4, 4, 1, 1};

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

}  // namespace

void DiscriminatorConfig::validate() const {
  if (periods.empty() || mpd_channels.empty()) throw InvalidArgument("MPD needs periods and channels");
  for (long p : periods) {
    if (p < 1) throw InvalidArgument("MPD periods must be positive");
  }
  if (msd_channels.size() != 7) throw InvalidArgument("MSD expects seven conv widths");
  long in = 1;
  for (size_t i = 0; i < 7; ++i) {
    if (in % kMsdGroups[i] != 0 || msd_channels[i] % kMsdGroups[i] != 0) {
      throw InvalidArgument("MSD width " + std::to_string(msd_channels[i]) + " incompatible with groups");
    }
    in = msd_channels[i];
  }
  if (msd_scales < 1) throw InvalidArgument("MSD needs at least one scale");
}

torch::Tensor fold_by_period(const torch::Tensor& wav, long period) {
  if (wav.dim() != 2 || wav.size(1) == 0) throw InvalidArgument("discriminator input must be [B, T>0]");
  auto x = wav.unsqueeze(1);
  const long t = x.size(-1);
  const long pad = (period - t % period) % period;
  if (pad > 0) {
    namespace F = nn::functional;
    F::PadFuncOptions::mode_t mode = torch::kReplicate;
    if (pad < t) mode = torch::kReflect;
    x = F::pad(x, F::PadFuncOptions({0, pad}).mode(mode));
  }
  return x.view({x.size(0), 1, x.size(-1) / period, period});
}

torch::Tensor halve_rate(const torch::Tensor& wav) {
  return torch::avg_pool1d(wav.unsqueeze(1), {2}, {2}, {0}, /*ceil_mode=*/true).squeeze(1);
}

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(long p, const std::vector<long>& channels) : period(p) {
  convs = register_module("convs", nn::ModuleList());
  long in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const bool last = i + 1 == channels.size();
    convs->push_back(nn::Conv2d(nn::Conv2dOptions(in, channels[i], {5, 1})
                                    .stride({last ? 1 : 3, 1})
                                    .padding({2, 0})));
    in = channels[i];
  }
  post = register_module("post", nn::Conv2d(nn::Conv2dOptions(in, 1, {3, 1}).padding({1, 0})));
}

torch::Tensor PeriodDiscriminatorImpl::forward(const torch::Tensor& wav, std::vector<torch::Tensor>& feats) {
  auto x = fold_by_period(wav, period);
  for (const auto& m : *convs) {
    x = torch::leaky_relu(m->as<nn::Conv2d>()->forward(x), kSlope);
    feats.push_back(x);
  }
  x = post->forward(x);
  feats.push_back(x);
  return x.flatten(1);
}

ScaleDiscriminatorImpl::ScaleDiscriminatorImpl(const std::vector<long>& channels) {
  convs = register_module("convs", nn::ModuleList());
  long in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    convs->push_back(nn::Conv1d(nn::Conv1dOptions(in, channels[i], kMsdKernels[i])
                                    .stride(kMsdStrides[i])
                                    .groups(kMsdGroups[i])
                                    .padding(kMsdKernels[i] / 2)));
    in = channels[i];
  }
  post = register_module("post", nn::Conv1d(nn::Conv1dOptions(in, 1, 3).padding(1)));
}

torch::Tensor ScaleDiscriminatorImpl::forward(const torch::Tensor& wav, std::vector<torch::Tensor>& feats) {
  auto x = wav.unsqueeze(1);
  for (const auto& m : *convs) {
    x = torch::leaky_relu(m->as<nn::Conv1d>()->forward(x), kSlope);
    feats.push_back(x);
  }
  x = post->forward(x);
  feats.push_back(x);
  return x.flatten(1);
}

MultiPeriodDiscriminatorImpl::MultiPeriodDiscriminatorImpl(const DiscriminatorConfig& cfg) {
  cfg.validate();
  discs = register_module("discs", nn::ModuleList());
  for (long p : cfg.periods) discs->push_back(PeriodDiscriminator(p, cfg.mpd_channels));
}

DiscOutputs MultiPeriodDiscriminatorImpl::forward(const torch::Tensor& wav) {
  DiscOutputs out;
  for (const auto& m : *discs) {
    out.feats.emplace_back();
    out.scores.push_back(m->as<PeriodDiscriminator>()->forward(wav, out.feats.back()));
  }
  return out;
}

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(const DiscriminatorConfig& cfg) {
  cfg.validate();
  discs = register_module("discs", nn::ModuleList());
  for (long i = 0; i < cfg.msd_scales; ++i) discs->push_back(ScaleDiscriminator(cfg.msd_channels));
}

DiscOutputs MultiScaleDiscriminatorImpl::forward(const torch::Tensor& wav) {
  if (wav.dim() != 2 || wav.size(1) == 0) throw InvalidArgument("discriminator input must be [B, T>0]");
  DiscOutputs out;
  auto x = wav;
  for (size_t i = 0; i < discs->size(); ++i) {
    if (i > 0) x = halve_rate(x);
    out.feats.emplace_back();
    out.scores.push_back(discs[i]->as<ScaleDiscriminator>()->forward(x, out.feats.back()));
  }
  return out;
}

DiscriminatorsImpl::DiscriminatorsImpl(const DiscriminatorConfig& cfg) {
  mpd = register_module("mpd", MultiPeriodDiscriminator(cfg));
  msd = register_module("msd", MultiScaleDiscriminator(cfg));
}

DiscOutputs DiscriminatorsImpl::forward(const torch::Tensor& wav) {
  auto a = mpd->forward(wav);
  auto b = msd->forward(wav);
  for (size_t i = 0; i < b.size(); ++i) {
    a.scores.push_back(std::move(b.scores[i]));
    a.feats.push_back(std::move(b.feats[i]));
  }
  return a;
}

// ---------------------------------------------------------------- losses

void LossWeights::validate() const {
  if (adv < 0 || feat_match < 0 || mel < 0 || aux_mel < 0 || aux_warmup_steps < 0) {
    throw InvalidArgument("loss weights must be non-negative");
  }
}

torch::Tensor lsgan_d_loss(const std::vector<torch::Tensor>& real, const std::vector<torch::Tensor>& fake) {
  if (real.size() != fake.size() || real.empty()) throw InvalidArgument("lsgan_d_loss: score lists differ");
  torch::Tensor total;
  for (size_t i = 0; i < real.size(); ++i) {
    require_same_shape(real[i], fake[i], "lsgan_d_loss");
    auto term = (real[i] - 1.0).pow(2).mean() + fake[i].pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor lsgan_g_loss(const std::vector<torch::Tensor>& fake) {
  if (fake.empty()) throw InvalidArgument("lsgan_g_loss: no scores");
  torch::Tensor total;
  for (const auto& f : fake) {
    auto term = (f - 1.0).pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor feature_matching_loss(const std::vector<std::vector<torch::Tensor>>& real,
                                    const std::vector<std::vector<torch::Tensor>>& fake) {
  if (real.size() != fake.size() || real.empty()) throw InvalidArgument("feature_matching_loss: list mismatch");
  torch::Tensor total;
  for (size_t d = 0; d < real.size(); ++d) {
    if (real[d].size() != fake[d].size() || real[d].empty()) {
      throw InvalidArgument("feature_matching_loss: layer count mismatch");
    }
    torch::Tensor layers;
    for (size_t l = 0; l < real[d].size(); ++l) {
      require_same_shape(real[d][l], fake[d][l], "feature_matching_loss");
      auto term = (real[d][l] - fake[d][l]).abs().mean();
      layers = layers.defined() ? layers + term : term;
    }
    auto term = layers / static_cast<double>(real[d].size());
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor mel_l1(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& frame_mask) {
  require_same_shape(pred, target, "mel_l1");
  const auto diff = (pred - target).abs();
  if (!frame_mask.defined()) return diff.mean();
  const auto m = frame_mask.unsqueeze(-1).to(diff.dtype());
  const auto count = m.sum() * static_cast<double>(diff.size(-1));
  return (diff * m).sum() / count.clamp_min(1.0);
}

double aux_weight(long step, const LossWeights& w) {
  if (step < 0) throw InvalidArgument("aux_weight: negative step");
  return step < w.aux_warmup_steps ? w.aux_mel : 0.0;
}

}  // namespace tokvc
