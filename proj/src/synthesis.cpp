#include "tokvc/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "tokvc/data.hpp"
#include "tokvc/errors.hpp"

namespace tokvc {

VoiceConverter::VoiceConverter(Config cfg, SyntheticTokenizer tokenizer, Vocoder model)
    : cfg_(std::move(cfg)), tokenizer_(std::move(tokenizer)), model_(std::move(model)) {
  model_->eval();
}

VoiceConverter VoiceConverter::from_checkpoint(const Checkpoint& ckpt) {
  auto cfg = parse_config(ckpt.config_text);
  cfg.validate();
  auto tok = SyntheticTokenizer::from_tensors(cfg.model.tokenizer, ckpt.with_prefix("tok/"));
  Vocoder model(cfg.model);
  load_module_state(*model, ckpt, "gen/");
  return {std::move(cfg), std::move(tok), std::move(model)};
}

VoiceConverter VoiceConverter::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

dsp::Waveform VoiceConverter::prepare(const dsp::Waveform& w) const {
  if (w.samples.empty()) throw InvalidArgument("empty waveform");
  if (w.sample_rate == cfg_.model.mel.sample_rate) return w;
  dsp::Waveform out;
  out.sample_rate = cfg_.model.mel.sample_rate;
  out.samples = dsp::resample(w.samples, w.sample_rate, out.sample_rate);
  return out;
}

dsp::Waveform VoiceConverter::synthesize(const TokenSeq& tokens, const torch::Tensor& prompt) const {
  if (tokens.frames() < 1) throw InvalidArgument("synthesize: no token frames");
  if (prompt.dim() != 2 || prompt.size(0) < 1 || prompt.size(1) != cfg_.model.tokenizer.prompt_dim) {
    throw InvalidArgument("synthesize: prompt must be [frames >= 1, " +
                          std::to_string(cfg_.model.tokenizer.prompt_dim) + "]");
  }
  torch::NoGradGuard guard;
  const auto content = embed_batch(tokens.ids.unsqueeze(0), tokenizer_.codebooks());
  Vocoder model = model_;
  const auto out = model->forward(content, {}, prompt.to(torch::kFloat32).unsqueeze(0), {});
  const auto wav = out.wav[0].contiguous();
  if (!torch::isfinite(wav).all().item<bool>()) throw NumericFailure("synthesis produced non-finite samples");
  dsp::Waveform w;
  w.sample_rate = cfg_.model.mel.sample_rate;
  w.samples.assign(wav.data_ptr<float>(), wav.data_ptr<float>() + wav.numel());
  return w;
}

dsp::Waveform VoiceConverter::resynthesize(const dsp::Waveform& source, const std::optional<dsp::Waveform>& prompt) const {
  const auto src = prepare(source);
  const auto tokens = tokenizer_.tokenize(src);
  const auto feats = tokenizer_.prompt_features(prompt ? prepare(*prompt) : src);
  return synthesize(tokens, feats);
}

dsp::Waveform VoiceConverter::convert(const dsp::Waveform& source, const dsp::Waveform& reference) const {
  if (reference.duration_s() < cfg_.reference_floor_s) {
    throw InvalidArgument("reference is " + std::to_string(reference.duration_s()) + " s; at least " +
                          std::to_string(cfg_.reference_floor_s) + " s required");
  }
  return resynthesize(source, reference);
}

double secs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("secs: embeddings must have equal, non-zero length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw InvalidArgument("secs: zero embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double secs(const torch::Tensor& a, const torch::Tensor& b) {
  const auto x = a.to(torch::kFloat64).contiguous().flatten();
  const auto y = b.to(torch::kFloat64).contiguous().flatten();
  return secs(std::span<const double>(x.data_ptr<double>(), x.numel()),
              std::span<const double>(y.data_ptr<double>(), y.numel()));
}

double eval_pcorr(const dsp::Waveform& source, const dsp::Waveform& converted, const dsp::PitchConfig& cfg) {
  return dsp::pitch_correlation(dsp::track_pitch(source, cfg), dsp::track_pitch(converted, cfg));
}

}  // namespace tokvc
