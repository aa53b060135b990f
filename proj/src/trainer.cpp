#include "tokvc/trainer.hpp"

#include <cmath>
#include <fstream>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace fs = std::filesystem;

nlohmann::json StepMetrics::to_json() const {
  return {{"step", step},       {"epoch", epoch},         {"d_loss", d_loss},
          {"g_loss", g_loss},   {"adv", adv},             {"feat_match", feat_match},
          {"mel", mel},         {"aux_mel", aux_mel},     {"aux_weight", aux_weight},
          {"grad_norm_g", grad_norm_g}, {"grad_norm_d", grad_norm_d},
          {"lr_g", lr_g},       {"lr_d", lr_d},           {"batch_s", batch_s}};
}

StepMetrics StepMetrics::from_json(const nlohmann::json& j) {
  StepMetrics m;
  m.step = j.at("step").get<long>();
  m.epoch = j.value("epoch", 0L);
  m.d_loss = j.at("d_loss").get<double>();
  m.g_loss = j.at("g_loss").get<double>();
  m.adv = j.at("adv").get<double>();
  m.feat_match = j.at("feat_match").get<double>();
  m.mel = j.at("mel").get<double>();
  m.aux_mel = j.at("aux_mel").get<double>();
  m.aux_weight = j.at("aux_weight").get<double>();
  m.grad_norm_g = j.value("grad_norm_g", 0.0);
  m.grad_norm_d = j.value("grad_norm_d", 0.0);
  m.lr_g = j.value("lr_g", 0.0);
  m.lr_d = j.value("lr_d", 0.0);
  m.batch_s = j.value("batch_s", 0.0);
  return m;
}

bool StepMetrics::finite() const {
  for (double v : {d_loss, g_loss, adv, feat_match, mel, aux_mel}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void enable_deterministic_mode() {
  torch::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, false);
}

namespace {

double checked(const torch::Tensor& t, const char* term, long step) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) {
    throw NumericFailure("non-finite loss term '" + std::string(term) + "' at step " + std::to_string(step));
  }
  return v;
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(g.options()).lr(lr);
}

torch::optim::AdamWOptions adam_options(const TrainConfig& t, double lr) {
  return torch::optim::AdamWOptions(lr).betas({t.beta1, t.beta2}).weight_decay(t.weight_decay);
}

}  // namespace

Trainer::Trainer(Config cfg, SyntheticTokenizer tokenizer, std::vector<Utterance> utterances)
    : cfg_(std::move(cfg)),
      tokenizer_(std::move(tokenizer)),
      utterances_(std::move(utterances)),
      mel_(cfg_.model.mel) {
  cfg_.model.sync();
  cfg_.validate();
  if (cfg_.train.deterministic) enable_deterministic_mode();
  torch::manual_seed(cfg_.train.seed);
  model = Vocoder(cfg_.model);
  disc = Discriminators(cfg_.train.disc);
  opt_g_ = std::make_unique<torch::optim::AdamW>(model->parameters(), adam_options(cfg_.train, cfg_.train.lr_g));
  opt_d_ = std::make_unique<torch::optim::AdamW>(disc->parameters(), adam_options(cfg_.train, cfg_.train.lr_d));
  if (!utterances_.empty()) stream_ = std::make_unique<DataStream>(utterances_, cfg_.train.data, cfg_.train.seed);
  apply_schedule(0);
}

void Trainer::apply_schedule(long epoch) {
  epoch_ = epoch;
  const double decay = std::pow(cfg_.train.lr_decay, static_cast<double>(epoch));
  set_lr(*opt_g_, cfg_.train.lr_g * decay);
  set_lr(*opt_d_, cfg_.train.lr_d * decay);
}

Trainer::Forward Trainer::forward(const Batch& batch, bool need_grad) {
  std::optional<torch::NoGradGuard> guard;
  if (!need_grad) guard.emplace();
  torch::manual_seed(mix_seed(cfg_.train.seed, static_cast<std::uint64_t>(step_), 1));
  model->train();
  const auto content = embed_batch(batch.tokens, tokenizer_.codebooks());
  auto fe = model->run_frontend(content, batch.content_mask, batch.prompt, batch.prompt_mask);

  const long hop = cfg_.model.mel.hop;
  long seg = cfg_.train.data.segment_frames;
  for (long n : batch.lengths) seg = std::min(seg, n);
  Rng rng(mix_seed(cfg_.train.seed, static_cast<std::uint64_t>(step_), 2));
  std::vector<torch::Tensor> hidden, real;
  for (long b = 0; b < batch.size(); ++b) {
    const long start = std::uniform_int_distribution<long>(0, batch.lengths[b] - seg)(rng);
    hidden.push_back(fe.hidden[b].narrow(0, start, seg));
    real.push_back(batch.wav[b].narrow(0, start * hop, seg * hop));
  }
  const auto speaker = VocoderImpl::speaker_vector(batch.prompt, batch.prompt_mask);
  Forward f;
  f.fake = model->generator->forward(torch::stack(hidden), speaker);
  f.real = torch::stack(real);
  f.mel_pred = fe.mel_pred;
  return f;
}

double Trainer::update_discriminator(const Forward& f, StepMetrics& m) {
  opt_d_->zero_grad();
  const auto real = disc->forward(f.real);
  const auto fake = disc->forward(f.fake.detach());
  const auto loss = lsgan_d_loss(real.scores, fake.scores);
  m.d_loss = checked(loss, "d_loss", step_);
  loss.backward();
  m.grad_norm_d = torch::nn::utils::clip_grad_norm_(disc->parameters(), cfg_.train.grad_clip);
  opt_d_->step();
  return m.d_loss;
}

void Trainer::update_generator(const Forward& f, const Batch& batch, StepMetrics& m) {
  const auto& w = cfg_.train.loss;
  opt_g_->zero_grad();
  set_requires_grad(*disc, false);
  DiscOutputs real;
  {
    torch::NoGradGuard guard;
    real = disc->forward(f.real);
  }
  const auto fake = disc->forward(f.fake);
  const auto adv = lsgan_g_loss(fake.scores);
  const auto fm = feature_matching_loss(real.feats, fake.feats);
  torch::Tensor real_mel;
  {
    torch::NoGradGuard guard;
    real_mel = mel_(f.real);
  }
  const auto mel = mel_l1(mel_(f.fake), real_mel);
  const auto aux = mel_l1(f.mel_pred, batch.mel, batch.content_mask);
  m.aux_weight = aux_weight(step_, w);
  m.adv = checked(adv, "adv", step_);
  m.feat_match = checked(fm, "feat_match", step_);
  m.mel = checked(mel, "mel", step_);
  m.aux_mel = checked(aux, "aux_mel", step_);
  auto total = w.adv * adv + w.feat_match * fm + w.mel * mel;
  if (m.aux_weight != 0.0) total = total + m.aux_weight * aux;
  m.g_loss = checked(total, "g_loss", step_);
  total.backward();
  set_requires_grad(*disc, true);
  m.grad_norm_g = torch::nn::utils::clip_grad_norm_(model->parameters(), cfg_.train.grad_clip);
  if (!std::isfinite(m.grad_norm_g)) {
    throw NumericFailure("non-finite generator gradient norm at step " + std::to_string(step_));
  }
  opt_g_->step();
}

StepMetrics Trainer::train_step(const Batch& batch) {
  StepMetrics m;
  const auto f = forward(batch, true);
  update_discriminator(f, m);
  if (!std::isfinite(m.grad_norm_d)) {
    throw NumericFailure("non-finite discriminator gradient norm at step " + std::to_string(step_));
  }
  update_generator(f, batch, m);
  ++step_;
  m.step = step_;
  m.epoch = epoch_;
  m.lr_g = cfg_.train.lr_g * std::pow(cfg_.train.lr_decay, static_cast<double>(epoch_));
  m.lr_d = cfg_.train.lr_d * std::pow(cfg_.train.lr_decay, static_cast<double>(epoch_));
  m.batch_s = batch.total_s();
  return m;
}

StepMetrics Trainer::step() {
  if (!stream_) throw InvalidArgument("trainer has no training data");
  const auto batch = stream_->next();
  apply_schedule(stream_->epoch());
  return train_step(batch);
}

StepMetrics Trainer::discriminator_step(const Batch& batch) {
  StepMetrics m;
  const auto f = forward(batch, false);
  update_discriminator(f, m);
  return m;
}

StepMetrics Trainer::generator_step(const Batch& batch) {
  StepMetrics m;
  const auto f = forward(batch, true);
  update_generator(f, batch, m);
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.step = step_;
  c.config_text = dump_config(cfg_);
  auto add = [&c](NamedTensors ts) {
    for (auto& t : ts) c.tensors.push_back(std::move(t));
  };
  add(module_state(*model, "gen/"));
  add(module_state(*disc, "disc/"));
  add(optimizer_state(*opt_g_, "optg/"));
  add(optimizer_state(*opt_d_, "optd/"));
  for (const auto& [n, t] : tokenizer_.tensors()) c.tensors.emplace_back("tok/" + n, t);
  c.tensors.emplace_back("train/epoch", torch::tensor(static_cast<int64_t>(epoch_)));
  return c;
}

void Trainer::save(const fs::path& path) const { save_checkpoint(path, checkpoint()); }

void Trainer::restore(const Checkpoint& ckpt) {
  load_module_state(*model, ckpt, "gen/");
  load_module_state(*disc, ckpt, "disc/");
  load_optimizer_state(*opt_g_, ckpt, "optg/");
  load_optimizer_state(*opt_d_, ckpt, "optd/");
  step_ = ckpt.step;
  apply_schedule(ckpt.has("train/epoch") ? ckpt.get("train/epoch").item<long>() : 0);
  if (!utterances_.empty()) {
    stream_ = std::make_unique<DataStream>(utterances_, cfg_.train.data, cfg_.train.seed);
    stream_->skip(step_);
  }
}

fs::path Trainer::run(const fs::path& out_dir, const std::function<void(const StepMetrics&)>& on_step) {
  fs::create_directories(out_dir);
  const auto log_path = out_dir / "metrics.jsonl";
  // On resume, drop records past the restored step so replayed steps are not logged twice.
  std::vector<std::string> kept;
  if (step_ > 0 && fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("step", 0L) <= step_) kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  for (const auto& line : kept) log << line << '\n';
  if (!log) throw FormatError("cannot write " + log_path.string());
  fs::path last;
  auto ckpt_path = [&out_dir](long s) {
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_%08ld.tvck", s);
    return out_dir / name;
  };
  while (step_ < cfg_.train.steps) {
    const auto m = step();
    if (step_ % cfg_.train.log_every == 0) log << m.to_json().dump() << '\n' << std::flush;
    if (on_step) on_step(m);
    if (step_ % cfg_.train.checkpoint_every == 0) {
      last = ckpt_path(step_);
      save(last);
    }
  }
  if (last.empty() || last != ckpt_path(step_)) {
    last = ckpt_path(step_);
    save(last);
  }
  return last;
}

fs::path train(const Config& cfg, const Manifest& manifest, const SyntheticTokenizer& tokenizer,
               const fs::path& out_dir, const std::optional<fs::path>& resume) {
  if (manifest.entries.empty()) throw InvalidArgument("train: empty manifest");
  std::vector<Utterance> utts;
  for (const auto& e : manifest.entries) utts.push_back(load_utterance(e, &tokenizer, cfg.model.mel));
  Trainer trainer(cfg, tokenizer, std::move(utts));
  if (resume) trainer.restore(load_checkpoint(*resume));
  return trainer.run(out_dir);
}

std::vector<StepMetrics> read_metrics_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metrics log " + path.string());
  std::vector<StepMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(StepMetrics::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad metrics record: " + e.what());
    }
  }
  return out;
}

}  // namespace tokvc
