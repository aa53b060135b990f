#pragma once

// Corpus manifests, prompt-segment sampling, training examples and
// duration-budgeted batching.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "tokvc/config.hpp"
#include "tokvc/dsp.hpp"
#include "tokvc/features.hpp"

namespace tokvc {

using Rng = std::mt19937_64;

/// SplitMix64-style combination of seeds into an independent stream seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

struct ManifestEntry {
  std::string id;
  std::filesystem::path audio;
  double duration_s = 0.0;
  std::filesystem::path tokens;  // optional TOK1 file
  std::filesystem::path prompt;  // optional FTR1 file
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  [[nodiscard]] size_t size() const { return entries.size(); }
};

/// Recursively scans `root` for .wav files (sorted by path), reads their
/// durations and keeps those in [min_s, max_s]. Ids are paths relative to
/// `root` without extension. Throws InvalidArgument if the directory is
/// missing and FormatError if nothing survives the filter.
Manifest build_manifest(const std::filesystem::path& root, double min_s = 6.0, double max_s = 30.0);

// Manifest text: one record per line, tab-separated
//   id  audio_path  duration_s  [tokens_path  [prompt_path]]
// Lines starting with '#' are comments.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct PromptSegment {
  long start = 0;
  long len = 0;

  [[nodiscard]] long end() const { return start + len; }
};

enum class Edge { kBegin, kEnd };

struct SamplerConfig {
  /// Largest distance (frames) between the segment and its utterance edge.
  long max_offset = 100;
  /// Shortest utterance (frames) accepted; at least 2 * max_offset.
  long min_frames = 600;
};

struct PromptDraw {
  PromptSegment segment;
  Edge edge = Edge::kBegin;
  long offset = 0;
};

/// L ~ U[ceil(D/3), floor(D/2)], edge ~ {begin, end}, offset ~ U[0, max_offset];
/// begin gives [o, o+L), end gives [D-o-L, D-o). Throws InvalidArgument when
/// D < min_frames.
PromptDraw draw_prompt_segment(long frames, Rng& rng, const SamplerConfig& cfg = {});
PromptSegment sample_prompt_segment(long frames, Rng& rng, const SamplerConfig& cfg = {});

/// Everything the trainer needs from one utterance, aligned at 100 frames/s:
/// frame f covers samples [240 f, 240 (f + 1)).
struct Utterance {
  std::string id;
  TokenSeq tokens;      // [D, groups]
  torch::Tensor prompt;  // [D, prompt_dim]
  torch::Tensor mel;     // [D, n_mels] target log-mel
  torch::Tensor wav;     // [D * hop], zero-padded to whole frames

  [[nodiscard]] long frames() const { return tokens.frames(); }
};

/// Builds an Utterance from audio. Precomputed token / prompt files named in
/// the entry are used when present; otherwise the tokenizer computes them.
/// Throws FormatError when features are missing and no tokenizer is given,
/// or when their frame counts disagree with the audio.
Utterance load_utterance(const ManifestEntry& entry, const SyntheticTokenizer* tokenizer,
                         const dsp::MelConfig& mel_cfg);
Utterance make_utterance(std::string id, const dsp::Waveform& w, const SyntheticTokenizer& tokenizer);

struct TrainingExample {
  std::string id;
  PromptSegment prompt_segment;
  long target_start = 0;  // frames, in utterance coordinates
  long target_len = 0;
  torch::Tensor tokens;   // [target_len, groups]
  torch::Tensor prompt;   // [prompt len, prompt_dim]
  torch::Tensor mel;      // [target_len, n_mels]
  torch::Tensor wav;      // [target_len * hop]

  [[nodiscard]] double duration_s() const { return static_cast<double>(target_len) / 100.0; }
};

/// Draws a prompt segment and cuts the example. With TargetMode::kComplement
/// the target is the longer contiguous side of the utterance outside the
/// prompt, so content and prompt frames never overlap.
TrainingExample make_training_example(const Utterance& utt, Rng& rng, const DataConfig& cfg);
/// Same cut for a given segment.
TrainingExample make_training_example(const Utterance& utt, const PromptSegment& seg, const DataConfig& cfg);

struct Batch {
  std::vector<std::string> ids;
  torch::Tensor tokens;        // [B, T, groups] int64, zero padded
  torch::Tensor content_mask;  // [B, T] bool
  torch::Tensor prompt;        // [B, Tp, prompt_dim]
  torch::Tensor prompt_mask;   // [B, Tp] bool
  torch::Tensor mel;           // [B, T, n_mels]
  torch::Tensor wav;           // [B, T * hop]
  std::vector<long> lengths;   // target frames per example

  [[nodiscard]] long size() const { return static_cast<long>(lengths.size()); }
  [[nodiscard]] double total_s() const;
};

/// Pads and stacks examples into one batch.
Batch collate(const std::vector<TrainingExample>& examples);

/// Greedy packing in the given order: examples join the current batch until
/// the next would push its total target duration past `max_total_s`.
/// Throws InvalidArgument when one example alone exceeds the budget.
std::vector<Batch> make_batches(const std::vector<TrainingExample>& examples, double max_total_s = 36.0);

/// Concatenated code-vectors for batched ids: [B, T, groups] -> [B, T, content_dim].
torch::Tensor embed_batch(const torch::Tensor& ids, const CodebookSet& codebooks);

/// Endless deterministic batch sequence. Epoch e visits utterances in a
/// permutation seeded by (seed, e); the example for utterance i in epoch e
/// uses its own stream seeded by (seed, i, e).
class DataStream {
 public:
  DataStream(const std::vector<Utterance>& utterances, DataConfig cfg, std::uint64_t seed);

  Batch next();
  /// Skips ahead so that the next batch is batch number `count` (0-based).
  void skip(long count);

  [[nodiscard]] long epoch() const { return epoch_; }
  [[nodiscard]] long batches_served() const { return served_; }

 private:
  void start_epoch();

  const std::vector<Utterance>* utts_;
  DataConfig cfg_;
  std::uint64_t seed_;
  std::vector<long> order_;
  size_t cursor_ = 0;
  long epoch_ = -1;
  long served_ = 0;
  std::optional<TrainingExample> pending_;
};

}  // namespace tokvc
