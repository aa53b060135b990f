#pragma once

// Adversarial training: discriminator and generator updates, schedules,
// checkpoints, metric logging and deterministic resumption.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "tokvc/checkpoint.hpp"
#include "tokvc/config.hpp"
#include "tokvc/data.hpp"
#include "tokvc/discriminators.hpp"
#include "tokvc/features.hpp"
#include "tokvc/model.hpp"

namespace tokvc {

struct StepMetrics {
  long step = 0;  // step count after the update
  long epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double adv = 0.0;
  double feat_match = 0.0;
  double mel = 0.0;
  double aux_mel = 0.0;
  double aux_weight = 0.0;
  double grad_norm_g = 0.0;
  double grad_norm_d = 0.0;
  double lr_g = 0.0;
  double lr_d = 0.0;
  double batch_s = 0.0;

  [[nodiscard]] nlohmann::json to_json() const;
  static StepMetrics from_json(const nlohmann::json& j);
  /// Every loss term is finite.
  [[nodiscard]] bool finite() const;
};

/// Turns on single-threaded, deterministic kernels.
void enable_deterministic_mode();

class Trainer {
 public:
  /// Initialises both networks from `cfg.train.seed`.
  Trainer(Config cfg, SyntheticTokenizer tokenizer, std::vector<Utterance> utterances);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Discriminator update on real and detached fake audio, then generator
  /// update on adv + feature matching + mel + aux_weight(step) * aux mel.
  StepMetrics train_step(const Batch& batch);
  /// Draws the next batch from the internal stream and trains on it.
  StepMetrics step();

  /// Single-network updates; the other network's parameters are untouched.
  StepMetrics discriminator_step(const Batch& batch);
  StepMetrics generator_step(const Batch& batch);

  /// Runs until `config().train.steps`, writing checkpoints and a metrics log
  /// (one JSON object per line) into `out_dir`. Returns the final checkpoint.
  std::filesystem::path run(const std::filesystem::path& out_dir,
                            const std::function<void(const StepMetrics&)>& on_step = {});

  [[nodiscard]] Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;
  /// Restores networks, optimizers and the step counter, and fast-forwards
  /// the data stream to the same position.
  void restore(const Checkpoint& ckpt);

  [[nodiscard]] long current_step() const { return step_; }
  [[nodiscard]] const Config& config() const { return cfg_; }
  [[nodiscard]] const SyntheticTokenizer& tokenizer() const { return tokenizer_; }

  Vocoder model{nullptr};
  Discriminators disc{nullptr};

 private:
  struct Forward {
    torch::Tensor fake, real;  // [B, segment samples]
    torch::Tensor mel_pred;    // [B, T, n_mels]
  };
  Forward forward(const Batch& batch, bool need_grad);
  void apply_schedule(long epoch);
  double update_discriminator(const Forward& f, StepMetrics& m);
  void update_generator(const Forward& f, const Batch& batch, StepMetrics& m);

  Config cfg_;
  SyntheticTokenizer tokenizer_;
  std::vector<Utterance> utterances_;
  std::unique_ptr<DataStream> stream_;
  std::unique_ptr<torch::optim::AdamW> opt_g_, opt_d_;
  dsp::MelAnalyzer mel_;
  long step_ = 0;
  long epoch_ = 0;
};

/// Reads every manifest entry (computing features with `tokenizer`) and
/// trains from scratch or from `resume`.
std::filesystem::path train(const Config& cfg, const Manifest& manifest, const SyntheticTokenizer& tokenizer,
                            const std::filesystem::path& out_dir,
                            const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Parses a metrics log written by Trainer::run.
std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path);

}  // namespace tokvc
