#include "tokvc/model.hpp"

#include "tokvc/errors.hpp"
#include "tokvc/features.hpp"

namespace tokvc {

VocoderImpl::VocoderImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.sync();
  cfg_.validate();
  frontend = register_module("frontend", Frontend(cfg_.frontend));
  generator = register_module("generator", Generator(cfg_.generator));
}

torch::Tensor VocoderImpl::speaker_vector(const torch::Tensor& prompt, const torch::Tensor& prompt_mask) {
  if (prompt.dim() != 3) throw InvalidArgument("speaker_vector: prompt must be [B, frames, dim]");
  if (!prompt_mask.defined()) {
    return mean_pool(prompt, torch::ones({prompt.size(0), prompt.size(1)}, torch::kBool));
  }
  return mean_pool(prompt, prompt_mask);
}

FrontendOutput VocoderImpl::run_frontend(const torch::Tensor& content, const torch::Tensor& content_mask,
                                         const torch::Tensor& prompt, const torch::Tensor& prompt_mask) {
  return frontend->forward(content, content_mask, prompt, prompt_mask);
}

VocoderOutput VocoderImpl::forward(const torch::Tensor& content, const torch::Tensor& content_mask,
                                   const torch::Tensor& prompt, const torch::Tensor& prompt_mask) {
  auto fe = run_frontend(content, content_mask, prompt, prompt_mask);
  VocoderOutput out;
  out.speaker = speaker_vector(prompt, prompt_mask);
  out.wav = generator->forward(fe.hidden, out.speaker);
  out.mel_pred = fe.mel_pred;
  out.hidden = fe.hidden;
  return out;
}

ParamCounts count_params(const ModelConfig& cfg) {
  Vocoder v(cfg);
  return {parameter_count(*v->frontend), parameter_count(*v->generator)};
}

}  // namespace tokvc
