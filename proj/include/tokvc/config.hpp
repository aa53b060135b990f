#pragma once

// Aggregated configuration with a flat "section.key = value" text form.

#include <cstdint>
#include <string>
#include <vector>

#include "tokvc/discriminators.hpp"
#include "tokvc/dsp.hpp"
#include "tokvc/features.hpp"
#include "tokvc/frontend.hpp"
#include "tokvc/generator.hpp"

namespace tokvc {

struct ModelConfig {
  dsp::MelConfig mel;
  TokenizerConfig tokenizer;
  FrontendConfig frontend;
  GeneratorConfig generator;

  /// Copies shared dimensions between sections (content/prompt dims, mel
  /// settings, generator input and conditioning widths).
  void sync();
  void validate() const;
};

enum class TargetMode { kComplement, kFull };

struct DataConfig {
  double min_duration_s = 6.0;
  double max_duration_s = 30.0;
  /// Prompt segments start within this many frames of an utterance edge.
  long prompt_max_offset_frames = 100;
  /// Shortest utterance (frames) the prompt sampler accepts.
  long prompt_min_frames = 600;
  TargetMode target = TargetMode::kComplement;
  /// Generator training window per example, in frames.
  long segment_frames = 32;
  double max_batch_s = 36.0;

  void validate() const;
};

struct TrainConfig {
  long steps = 1000000;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  /// Multiplicative learning-rate decay applied once per epoch.
  double lr_decay = 0.999;
  double grad_clip = 1000.0;
  std::uint64_t seed = 1;
  long checkpoint_every = 10000;
  long log_every = 1;
  bool deterministic = true;
  LossWeights loss;
  DiscriminatorConfig disc;
  DataConfig data;

  void validate() const;
};

struct Config {
  ModelConfig model;
  TrainConfig train;
  double reference_floor_s = 1.0;

  /// Full-size settings (the defaults).
  static Config paper_scale();
  /// Small model and discriminators for CPU experiments and tests.
  static Config desk_scale();

  void validate() const;
};

/// Every key with its current value, one "key = value" per line, sorted by section.
std::string dump_config(const Config& cfg);

/// Applies "key = value" lines on top of `base`. Blank lines and '#' comments
/// are ignored; an unknown key or malformed value throws InvalidArgument.
Config parse_config(const std::string& text, Config base = {});
Config load_config_file(const std::string& path, Config base = {});

/// Single "key=value" override.
void set_config_value(Config& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace tokvc
