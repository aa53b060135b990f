// tokvc command-line interface.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
// Diagnostics go to stderr; results go to stdout as one JSON object per line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokvc/checkpoint.hpp"
#include "tokvc/config.hpp"
#include "tokvc/data.hpp"
#include "tokvc/errors.hpp"
#include "tokvc/features.hpp"
#include "tokvc/model.hpp"
#include "tokvc/synthesis.hpp"
#include "tokvc/toy.hpp"
#include "tokvc/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tokvc;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::string checkpoint;
  std::string preset = "paper";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

Config resolve_config(const Globals& g) {
  try {
    Config base;
    if (g.preset == "desk") {
      base = Config::desk_scale();
    } else if (g.preset == "paper") {
      base = Config::paper_scale();
    } else {
      throw UsageError("unknown preset '" + g.preset + "' (paper | desk)");
    }
    Config cfg = g.config_path.empty() ? base : load_config_file(g.config_path, base);
    for (const auto& kv : g.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) cfg.train.seed = *g.seed;
    if (g.deterministic) cfg.train.deterministic = true;
    cfg.model.sync();
    cfg.validate();
    return cfg;
  } catch (const FormatError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

std::string require_checkpoint(const Globals& g) {
  if (g.checkpoint.empty()) throw UsageError("--checkpoint is required");
  return g.checkpoint;
}

dsp::Waveform read_audio(const std::string& path, int rate) { return dsp::read_wav(path, rate); }

/// Tokenizer from a tokenizer file or a training checkpoint (both use the
/// checkpoint container).
SyntheticTokenizer load_tokenizer(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  const auto cfg = parse_config(ckpt.config_text);
  return SyntheticTokenizer::from_tensors(cfg.model.tokenizer, ckpt.with_prefix("tok/"));
}

Manifest manifest_from(const std::string& manifest, const std::string& data_dir, const Config& cfg) {
  if (!manifest.empty()) return read_manifest(manifest);
  if (!data_dir.empty()) return build_manifest(data_dir, cfg.train.data.min_duration_s, cfg.train.data.max_duration_s);
  throw UsageError("give --manifest or --data");
}

SyntheticTokenizer fit_on(const Manifest& m, const Config& cfg) {
  std::vector<dsp::Waveform> audio;
  for (const auto& e : m.entries) audio.push_back(dsp::read_wav(e.audio, cfg.model.mel.sample_rate));
  return SyntheticTokenizer::fit(audio, cfg.model.tokenizer);
}

void save_tokenizer(const fs::path& path, const SyntheticTokenizer& tok, const Config& cfg) {
  Checkpoint c;
  c.config_text = dump_config(cfg);
  for (const auto& [n, t] : tok.tensors()) c.tensors.emplace_back("tok/" + n, t);
  save_checkpoint(path, c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-based neural vocoder and prompt-driven voice conversion"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--checkpoint", g.checkpoint, "Model checkpoint");
  app.add_option("--preset", g.preset, "Base configuration: paper | desk")->capture_default_str();
  app.add_option("--set", g.overrides, "Override a configuration key (key=value), repeatable");
  app.add_option("--seed", g.seed, "Training seed");
  app.add_flag("--deterministic", g.deterministic, "Single-threaded deterministic kernels");

  auto* dump = app.add_subcommand("dump-config", "Print every configuration key with its value");
  auto* count = app.add_subcommand("count-params", "Report trainable parameter counts");

  auto* toy = app.add_subcommand("make-toy-corpus", "Write a synthetic harmonic-complex corpus");
  std::string toy_out;
  ToyCorpusConfig toy_cfg;
  toy->add_option("--out", toy_out, "Output directory")->required();
  toy->add_option("--utterances", toy_cfg.utterances)->capture_default_str();
  toy->add_option("--speakers", toy_cfg.speakers)->capture_default_str();
  toy->add_option("--min-s", toy_cfg.min_s)->capture_default_str();
  toy->add_option("--max-s", toy_cfg.max_s)->capture_default_str();
  toy->add_option("--corpus-seed", toy_cfg.seed)->capture_default_str();

  auto* fit = app.add_subcommand("fit-tokenizer", "Fit the synthetic content tokenizer");
  std::string manifest_path, data_dir, tok_out;
  fit->add_option("--manifest", manifest_path, "Manifest file");
  fit->add_option("--data", data_dir, "Directory of .wav files");
  fit->add_option("--out", tok_out, "Tokenizer file to write")->required();

  auto* extract = app.add_subcommand("extract-features", "Write token (TOK1) and prompt (FTR1) feature files");
  std::string tokenizer_path, feat_dir, manifest_out;
  std::vector<std::string> extract_inputs;
  extract->add_option("--tokenizer", tokenizer_path, "Tokenizer file (defaults to --checkpoint)");
  extract->add_option("--manifest", manifest_path, "Manifest whose entries to process");
  extract->add_option("inputs", extract_inputs, "Audio files");
  extract->add_option("--out-dir", feat_dir, "Destination directory")->required();
  extract->add_option("--manifest-out", manifest_out, "Write a manifest referencing the feature files");

  auto* trn = app.add_subcommand("train", "Train the vocoder");
  std::string train_out, resume;
  trn->add_option("--manifest", manifest_path, "Manifest file");
  trn->add_option("--data", data_dir, "Directory of .wav files");
  trn->add_option("--tokenizer", tokenizer_path, "Tokenizer file (fitted on the training data if absent)");
  trn->add_option("--out", train_out, "Run directory (checkpoints, metrics.jsonl)")->required();
  trn->add_option("--resume", resume, "Checkpoint to resume from");

  auto* resyn = app.add_subcommand("resynth", "Re-synthesise audio from its own tokens");
  std::string in_path, prompt_path, out_path;
  resyn->add_option("--in", in_path, "Source audio")->required();
  resyn->add_option("--prompt", prompt_path, "Prompt audio (defaults to the source)");
  resyn->add_option("--out", out_path, "Output .wav")->required();

  auto* conv = app.add_subcommand("convert", "Convert a source to the voice of a reference");
  std::string ref_path;
  conv->add_option("--source", in_path, "Source audio")->required();
  conv->add_option("--reference", ref_path, "Target speaker reference")->required();
  conv->add_option("--out", out_path, "Output .wav")->required();

  auto* pc = app.add_subcommand("eval-pcorr", "Pitch correlation between source and converted audio");
  std::string conv_path;
  pc->add_option("--source", in_path, "Source audio")->required();
  pc->add_option("--converted", conv_path, "Converted audio")->required();

  auto* es = app.add_subcommand("eval-secs", "Cosine similarity of two speaker-embedding feature files");
  std::string emb_a, emb_b;
  es->add_option("--a", emb_a, "FTR1 embedding (rows are averaged)")->required();
  es->add_option("--b", emb_b, "FTR1 embedding (rows are averaged)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (dump->parsed()) {
      std::cout << dump_config(resolve_config(g));
    } else if (count->parsed()) {
      const auto cfg = resolve_config(g);
      const auto n = count_params(cfg.model);
      emit({{"frontend", n.frontend}, {"generator", n.generator}, {"total", n.total()}});
    } else if (toy->parsed()) {
      const auto corpus = make_toy_corpus(toy_cfg);
      const auto speakers = toy_speakers(toy_cfg.speakers, toy_cfg.seed);
      fs::create_directories(toy_out);
      std::ofstream spk(fs::path(toy_out) / "speakers.tsv");
      spk << "# speaker\tf0_hz\ttilt_db_per_octave\n";
      for (size_t i = 0; i < speakers.size(); ++i) {
        spk << i << '\t' << speakers[i].f0_hz << '\t' << speakers[i].tilt_db_per_octave << '\n';
      }
      for (const auto& u : corpus) dsp::write_wav(fs::path(toy_out) / (u.id + ".wav"), u.wav);
      emit({{"utterances", corpus.size()}, {"dir", toy_out}});
    } else if (fit->parsed()) {
      const auto cfg = resolve_config(g);
      const auto m = manifest_from(manifest_path, data_dir, cfg);
      save_tokenizer(tok_out, fit_on(m, cfg), cfg);
      emit({{"tokenizer", tok_out}, {"utterances", m.size()}});
    } else if (extract->parsed()) {
      const auto tpath = tokenizer_path.empty() ? require_checkpoint(g) : tokenizer_path;
      const auto tok = load_tokenizer(tpath);
      Manifest m;
      if (!manifest_path.empty()) m = read_manifest(manifest_path);
      for (const auto& p : extract_inputs) {
        m.entries.push_back({fs::path(p).stem().string(), p, dsp::wav_duration_s(p), {}, {}});
      }
      if (m.entries.empty()) throw UsageError("extract-features: no inputs");
      fs::create_directories(feat_dir);
      for (auto& e : m.entries) {
        const auto w = dsp::read_wav(e.audio, tok.config().mel.sample_rate);
        auto stem = e.id;
        for (auto& ch : stem) {
          if (ch == '/') ch = '_';
        }
        e.tokens = fs::path(feat_dir) / (stem + ".tok");
        e.prompt = fs::path(feat_dir) / (stem + ".ftr");
        const auto mel = dsp::mel_spectrogram(w, tok.config().mel);
        const auto ids = tok.tokenize_mel(mel);
        write_token_file(e.tokens, ids);
        write_feature_file(e.prompt, tok.prompt_features_mel(mel));
        emit({{"id", e.id}, {"frames", ids.frames()}, {"tokens", e.tokens.string()}, {"prompt", e.prompt.string()}});
      }
      if (!manifest_out.empty()) write_manifest(manifest_out, m);
    } else if (trn->parsed()) {
      const auto cfg = resolve_config(g);
      const auto m = manifest_from(manifest_path, data_dir, cfg);
      const auto tok = tokenizer_path.empty() ? fit_on(m, cfg) : load_tokenizer(tokenizer_path);
      std::optional<fs::path> from;
      if (!resume.empty()) from = resume;
      const auto last = train(cfg, m, tok, train_out, from);
      emit({{"checkpoint", last.string()}, {"metrics", (fs::path(train_out) / "metrics.jsonl").string()}});
    } else if (resyn->parsed()) {
      const auto vc = VoiceConverter::load(require_checkpoint(g));
      const int sr = vc.config().model.mel.sample_rate;
      std::optional<dsp::Waveform> prompt;
      if (!prompt_path.empty()) prompt = read_audio(prompt_path, sr);
      const auto src = read_audio(in_path, sr);
      const auto out = vc.resynthesize(src, prompt);
      dsp::write_wav(out_path, out);
      emit({{"out", out_path}, {"samples", out.samples.size()}, {"duration_s", out.duration_s()}});
    } else if (conv->parsed()) {
      const auto vc = VoiceConverter::load(require_checkpoint(g));
      const int sr = vc.config().model.mel.sample_rate;
      const auto out = vc.convert(read_audio(in_path, sr), read_audio(ref_path, sr));
      dsp::write_wav(out_path, out);
      emit({{"out", out_path}, {"samples", out.samples.size()}, {"duration_s", out.duration_s()}});
    } else if (pc->parsed()) {
      const auto a = dsp::read_wav(in_path, dsp::kDefaultSampleRate);
      const auto b = dsp::read_wav(conv_path, dsp::kDefaultSampleRate);
      emit({{"source", in_path}, {"converted", conv_path}, {"pcorr", eval_pcorr(a, b)}});
    } else if (es->parsed()) {
      const auto a = read_feature_file(emb_a).to(torch::kFloat64).mean(0);
      const auto b = read_feature_file(emb_b).to(torch::kFloat64).mean(0);
      emit({{"a", emb_a}, {"b", emb_b}, {"secs", secs(a, b)}});
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const UndefinedMetric& e) {
    std::cerr << "undefined metric: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
