#include "tokvc/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

// ---------------------------------------------------------------- manifest

Manifest build_manifest(const fs::path& root, double min_s, double max_s) {
  if (!fs::is_directory(root)) throw InvalidArgument("not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Manifest m;
  for (const auto& f : files) {
    const double d = dsp::wav_duration_s(f);
    if (d < min_s || d > max_s) continue;
    auto id = fs::relative(f, root).replace_extension().generic_string();
    m.entries.push_back({std::move(id), f, d, {}, {}});
  }
  if (m.entries.empty()) {
    throw FormatError("no utterances between " + std::to_string(min_s) + " and " + std::to_string(max_s) +
                      " s under " + root.string());
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "# id\taudio\tduration_s\ttokens\tprompt\n";
  out.precision(17);
  for (const auto& e : m.entries) {
    out << e.id << '\t' << e.audio.string() << '\t' << e.duration_s;
    if (!e.tokens.empty() || !e.prompt.empty()) out << '\t' << e.tokens.string();
    if (!e.prompt.empty()) out << '\t' << e.prompt.string();
    out << '\n';
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  int lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 3 || cols.size() > 5) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 to 5 tab-separated fields");
    }
    ManifestEntry e;
    e.id = cols[0];
    e.audio = cols[1];
    try {
      e.duration_s = std::stod(cols[2]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad duration");
    }
    if (cols.size() > 3) e.tokens = cols[3];
    if (cols.size() > 4) e.prompt = cols[4];
    seen.push_back(e.id);
    m.entries.push_back(std::move(e));
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw FormatError(path.string() + ": duplicate utterance id");
  }
  return m;
}

// ---------------------------------------------------------------- sampler

PromptDraw draw_prompt_segment(long frames, Rng& rng, const SamplerConfig& cfg) {
  if (cfg.max_offset < 0 || cfg.min_frames < 2 * cfg.max_offset) {
    throw InvalidArgument("sampler needs min_frames >= 2 * max_offset");
  }
  if (frames < cfg.min_frames || frames < 2) {
    throw InvalidArgument("prompt sampler needs at least " + std::to_string(cfg.min_frames) + " frames, got " +
                          std::to_string(frames));
  }
  const long lo = (frames + 2) / 3;
  const long hi = frames / 2;
  PromptDraw d;
  d.segment.len = std::uniform_int_distribution<long>(lo, hi)(rng);
  d.edge = std::bernoulli_distribution(0.5)(rng) ? Edge::kEnd : Edge::kBegin;
  d.offset = std::uniform_int_distribution<long>(0, cfg.max_offset)(rng);
  d.segment.start = d.edge == Edge::kBegin ? d.offset : frames - d.offset - d.segment.len;
  return d;
}

PromptSegment sample_prompt_segment(long frames, Rng& rng, const SamplerConfig& cfg) {
  return draw_prompt_segment(frames, rng, cfg).segment;
}

// ---------------------------------------------------------------- utterances

namespace {

torch::Tensor padded_samples(const dsp::Waveform& w, long frames, long hop) {
  auto t = torch::zeros({frames * hop}, torch::kFloat32);
  std::copy(w.samples.begin(), w.samples.end(), t.data_ptr<float>());
  return t;
}

}  // namespace

Utterance make_utterance(std::string id, const dsp::Waveform& w, const SyntheticTokenizer& tokenizer) {
  torch::NoGradGuard guard;
  const auto& mc = tokenizer.config().mel;
  if (w.sample_rate != mc.sample_rate) throw InvalidArgument("utterance sample rate differs from mel config");
  if (w.samples.empty()) throw InvalidArgument("empty utterance " + id);
  Utterance u;
  u.id = std::move(id);
  u.mel = dsp::mel_spectrogram(w, mc);
  u.tokens = tokenizer.tokenize_mel(u.mel);
  u.prompt = tokenizer.prompt_features_mel(u.mel);
  u.wav = padded_samples(w, u.mel.size(0), mc.hop);
  return u;
}

Utterance load_utterance(const ManifestEntry& entry, const SyntheticTokenizer* tokenizer,
                         const dsp::MelConfig& mel_cfg) {
  const auto w = dsp::read_wav(entry.audio, mel_cfg.sample_rate);
  const bool have_files = !entry.tokens.empty() && !entry.prompt.empty();
  if (!have_files) {
    if (tokenizer == nullptr) throw FormatError("no features for " + entry.id + " and no tokenizer to compute them");
    return make_utterance(entry.id, w, *tokenizer);
  }
  torch::NoGradGuard guard;
  Utterance u;
  u.id = entry.id;
  u.mel = dsp::mel_spectrogram(w, mel_cfg);
  u.tokens = read_token_file(entry.tokens);
  u.prompt = read_feature_file(entry.prompt);
  const long d = u.mel.size(0);
  if (u.tokens.frames() != d || u.prompt.size(0) != d) {
    throw FormatError("feature frame counts for " + entry.id + " disagree with audio (" + std::to_string(d) +
                      " frames)");
  }
  u.wav = padded_samples(w, d, mel_cfg.hop);
  return u;
}

// ---------------------------------------------------------------- examples

TrainingExample make_training_example(const Utterance& utt, Rng& rng, const DataConfig& cfg) {
  const long d = utt.frames();
  if (d == 0 || !utt.prompt.defined() || !utt.mel.defined() || !utt.wav.defined()) {
    throw FormatError("utterance " + utt.id + " lacks features");
  }
  const auto draw = draw_prompt_segment(d, rng, {cfg.prompt_max_offset_frames, cfg.prompt_min_frames});
  return make_training_example(utt, draw.segment, cfg);
}

TrainingExample make_training_example(const Utterance& utt, const PromptSegment& seg, const DataConfig& cfg) {
  const long d = utt.frames();
  if (d == 0 || !utt.prompt.defined() || !utt.mel.defined() || !utt.wav.defined()) {
    throw FormatError("utterance " + utt.id + " lacks features");
  }
  if (seg.start < 0 || seg.len < 1 || seg.end() > d) throw InvalidArgument("prompt segment out of bounds");
  const long hop = utt.wav.size(0) / d;
  TrainingExample ex;
  ex.id = utt.id;
  ex.prompt_segment = seg;
  if (cfg.target == TargetMode::kFull) {
    ex.target_start = 0;
    ex.target_len = d;
  } else {
    const long left = seg.start;
    const long right = d - seg.end();
    if (right >= left) {
      ex.target_start = seg.end();
      ex.target_len = right;
    } else {
      ex.target_start = 0;
      ex.target_len = left;
    }
  }
  ex.tokens = utt.tokens.ids.narrow(0, ex.target_start, ex.target_len);
  ex.prompt = utt.prompt.narrow(0, seg.start, seg.len);
  ex.mel = utt.mel.narrow(0, ex.target_start, ex.target_len);
  ex.wav = utt.wav.narrow(0, ex.target_start * hop, ex.target_len * hop);
  return ex;
}

double Batch::total_s() const {
  return std::accumulate(lengths.begin(), lengths.end(), 0L) / 100.0;
}

Batch collate(const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw InvalidArgument("collate: no examples");
  const long b = static_cast<long>(examples.size());
  long t = 0, tp = 0;
  for (const auto& e : examples) {
    t = std::max(t, e.target_len);
    tp = std::max(tp, e.prompt.size(0));
  }
  const auto& first = examples.front();
  const long hop = first.wav.size(0) / first.target_len;
  Batch out;
  out.tokens = torch::zeros({b, t, first.tokens.size(1)}, torch::kLong);
  out.content_mask = torch::zeros({b, t}, torch::kBool);
  out.prompt = torch::zeros({b, tp, first.prompt.size(1)}, torch::kFloat32);
  out.prompt_mask = torch::zeros({b, tp}, torch::kBool);
  out.mel = torch::zeros({b, t, first.mel.size(1)}, torch::kFloat32);
  out.wav = torch::zeros({b, t * hop}, torch::kFloat32);
  for (long i = 0; i < b; ++i) {
    const auto& e = examples[i];
    const long n = e.target_len;
    const long p = e.prompt.size(0);
    out.ids.push_back(e.id);
    out.lengths.push_back(n);
    out.tokens[i].narrow(0, 0, n).copy_(e.tokens);
    out.content_mask[i].narrow(0, 0, n).fill_(true);
    out.prompt[i].narrow(0, 0, p).copy_(e.prompt);
    out.prompt_mask[i].narrow(0, 0, p).fill_(true);
    out.mel[i].narrow(0, 0, n).copy_(e.mel);
    out.wav[i].narrow(0, 0, n * hop).copy_(e.wav);
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<TrainingExample>& examples, double max_total_s) {
  std::vector<Batch> out;
  std::vector<TrainingExample> cur;
  double total = 0.0;
  for (const auto& e : examples) {
    if (e.duration_s() > max_total_s) {
      throw InvalidArgument("example " + e.id + " (" + std::to_string(e.duration_s()) +
                            " s) exceeds the batch budget");
    }
    if (!cur.empty() && total + e.duration_s() > max_total_s) {
      out.push_back(collate(cur));
      cur.clear();
      total = 0.0;
    }
    cur.push_back(e);
    total += e.duration_s();
  }
  if (!cur.empty()) out.push_back(collate(cur));
  return out;
}

torch::Tensor embed_batch(const torch::Tensor& ids, const CodebookSet& codebooks) {
  if (ids.dim() != 3 || ids.size(2) != codebooks.groups()) {
    throw InvalidArgument("embed_batch: ids must be [B, T, " + std::to_string(codebooks.groups()) + "]");
  }
  std::vector<torch::Tensor> parts;
  for (long g = 0; g < codebooks.groups(); ++g) {
    const auto& table = codebooks.tables[g];
    const auto col = ids.select(2, g);
    if (col.numel() > 0 && (col.min().item<long>() < 0 || col.max().item<long>() >= table.size(0))) {
      throw InvalidArgument("embed_batch: token id out of range in group " + std::to_string(g));
    }
    parts.push_back(table.index_select(0, col.flatten()).view({ids.size(0), ids.size(1), table.size(1)}));
  }
  return torch::cat(parts, -1);
}

// ---------------------------------------------------------------- stream

DataStream::DataStream(const std::vector<Utterance>& utterances, DataConfig cfg, std::uint64_t seed)
    : utts_(&utterances), cfg_(std::move(cfg)), seed_(seed) {
  if (utterances.empty()) throw InvalidArgument("data stream needs at least one utterance");
  cfg_.validate();
}

void DataStream::start_epoch() {
  ++epoch_;
  order_.resize(utts_->size());
  std::iota(order_.begin(), order_.end(), 0L);
  Rng rng(mix_seed(seed_, 0x5eedULL, static_cast<std::uint64_t>(epoch_)));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

Batch DataStream::next() {
  std::vector<TrainingExample> cur;
  double total = 0.0;
  while (true) {
    if (!pending_) {
      if (epoch_ < 0 || cursor_ == order_.size()) {
        if (!cur.empty() && epoch_ >= 0) break;  // batches never span epochs
        start_epoch();
      }
      const long i = order_[cursor_++];
      Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(epoch_)));
      pending_ = make_training_example((*utts_)[i], rng, cfg_);
      if (pending_->duration_s() > cfg_.max_batch_s) {
        throw InvalidArgument("example " + pending_->id + " exceeds the batch budget");
      }
    }
    if (!cur.empty() && total + pending_->duration_s() > cfg_.max_batch_s) break;
    total += pending_->duration_s();
    cur.push_back(std::move(*pending_));
    pending_.reset();
  }
  ++served_;
  return collate(cur);
}

void DataStream::skip(long count) {
  while (served_ < count) next();
}

}  // namespace tokvc
