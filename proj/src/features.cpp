#include "tokvc/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <ATen/CPUGeneratorImpl.h>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace {

torch::Tensor seeded_normal(std::vector<long> shape, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn(shape, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

void write_header(std::ofstream& out, const char magic[4], std::uint32_t a, std::uint32_t b) {
  static_assert(std::endian::native == std::endian::little);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&a), 4);
  out.write(reinterpret_cast<const char*>(&b), 4);
}

struct RawFile {
  std::uint32_t a = 0, b = 0;
  std::vector<char> payload;
};

RawFile read_raw(const std::filesystem::path& path, const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(buf.data(), magic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic, expected " + std::string(magic, 4));
  }
  RawFile raw;
  std::memcpy(&raw.a, buf.data() + 4, 4);
  std::memcpy(&raw.b, buf.data() + 8, 4);
  const std::uint64_t expected = std::uint64_t{raw.a} * raw.b * 4;
  if (buf.size() - 12 != expected) {
    throw FormatError(path.string() + ": payload is " + std::to_string(buf.size() - 12) +
                      " bytes, header implies " + std::to_string(expected));
  }
  raw.payload.assign(buf.begin() + 12, buf.end());
  return raw;
}

}  // namespace

long CodebookSet::content_dim() const {
  long d = 0;
  for (const auto& t : tables) d += t.size(1);
  return d;
}

torch::Tensor embed_tokens(const TokenSeq& tokens, const CodebookSet& codebooks) {
  if (tokens.groups() != codebooks.groups()) {
    throw InvalidArgument("embed_tokens: token groups (" + std::to_string(tokens.groups()) +
                          ") differ from codebook groups (" +
                          std::to_string(codebooks.groups()) + ")");
  }
  std::vector<torch::Tensor> parts;
  for (long g = 0; g < codebooks.groups(); ++g) {
    const auto ids = tokens.ids.select(1, g).to(torch::kLong);
    const long size = codebooks.tables[g].size(0);
    if (ids.numel() > 0 && (ids.min().item<long>() < 0 || ids.max().item<long>() >= size)) {
      throw InvalidArgument("embed_tokens: id out of range for group " + std::to_string(g) +
                            " (codebook size " + std::to_string(size) + ")");
    }
    parts.push_back(codebooks.tables[g].index_select(0, ids));
  }
  return torch::cat(parts, 1);
}

torch::Tensor mean_pool(const torch::Tensor& prompt) {
  if (prompt.dim() != 2 || prompt.size(0) < 1) {
    throw InvalidArgument("mean_pool: prompt must be [frames >= 1, dim]");
  }
  const auto sorted = std::get<0>(prompt.to(torch::kFloat64).sort(0)).contiguous();
  const long frames = sorted.size(0);
  const long dim = sorted.size(1);
  const double* p = sorted.data_ptr<double>();
  std::vector<double> acc(dim, 0.0);
  for (long f = 0; f < frames; ++f) {
    for (long d = 0; d < dim; ++d) acc[d] += p[f * dim + d];
  }
  for (auto& a : acc) a /= static_cast<double>(frames);
  return torch::tensor(acc, torch::kFloat64).to(prompt.scalar_type());
}

torch::Tensor mean_pool(const torch::Tensor& prompt, const torch::Tensor& mask) {
  if (prompt.dim() != 3 || mask.dim() != 2 || mask.size(0) != prompt.size(0) ||
      mask.size(1) != prompt.size(1)) {
    throw InvalidArgument("mean_pool: expected prompt [B, T, D] and mask [B, T]");
  }
  std::vector<torch::Tensor> rows;
  for (long b = 0; b < prompt.size(0); ++b) {
    const auto idx = mask[b].nonzero().squeeze(1);
    rows.push_back(mean_pool(prompt[b].index_select(0, idx)));
  }
  return torch::stack(rows);
}

KMeansResult kmeans(const torch::Tensor& points_in, long k, std::uint64_t seed, int max_iterations) {
  if (points_in.dim() != 2) throw InvalidArgument("kmeans: points must be [n, dim]");
  if (k < 1) throw InvalidArgument("kmeans: k must be positive");
  const auto points = points_in.to(torch::kFloat64).contiguous();
  const long n = points.size(0);
  const long dim = points.size(1);
  if (n < k) {
    throw InvalidArgument("kmeans: " + std::to_string(n) + " points cannot fill " +
                          std::to_string(k) + " clusters");
  }
  const double* x = points.data_ptr<double>();
  auto dist2 = [&](const double* a, const double* b) {
    double s = 0.0;
    for (long d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };

  std::mt19937_64 rng(seed);
  std::vector<double> c(k * dim);
  // k-means++ seeding.
  {
    std::uniform_int_distribution<long> pick(0, n - 1);
    const long first = pick(rng);
    std::copy_n(x + first * dim, dim, c.begin());
    std::vector<double> best(n);
    for (long i = 0; i < n; ++i) best[i] = dist2(x + i * dim, c.data());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Spread below this is rounding noise: extra centres then duplicate the
    // first one and stay empty instead of splitting identical frames.
    double norm2 = 0.0;
    for (long i = 0; i < n * dim; ++i) norm2 += x[i] * x[i];
    const double negligible = 1e-9 * (static_cast<double>(n) + norm2);
    for (long j = 1; j < k; ++j) {
      double total = 0.0;
      for (double v : best) total += v;
      long chosen = first;
      if (total > negligible) {
        double r = unit(rng) * total;
        for (chosen = 0; chosen < n - 1; ++chosen) {
          r -= best[chosen];
          if (r <= 0.0) break;
        }
      }
      std::copy_n(x + chosen * dim, dim, c.begin() + j * dim);
      for (long i = 0; i < n; ++i) best[i] = std::min(best[i], dist2(x + i * dim, c.data() + j * dim));
    }
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  std::vector<double> sums(k * dim);
  std::vector<long> counts(k);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (long i = 0; i < n; ++i) {
      long arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (long j = 0; j < k; ++j) {
        const double d = dist2(x + i * dim, c.data() + j * dim);
        if (d < bd) {
          bd = d;
          arg = j;
        }
      }
      if (res.assignment[i] != arg) {
        res.assignment[i] = arg;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (long i = 0; i < n; ++i) {
      const long j = res.assignment[i];
      ++counts[j];
      for (long d = 0; d < dim; ++d) sums[j * dim + d] += x[i * dim + d];
    }
    for (long j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;  // empty cluster keeps its previous centre
      for (long d = 0; d < dim; ++d) c[j * dim + d] = sums[j * dim + d] / counts[j];
    }
  }
  res.centroids = torch::from_blob(c.data(), {k, dim}, torch::kFloat64).clone();
  return res;
}

// ---------------------------------------------------------------- tokenizer

std::pair<long, long> SyntheticTokenizer::band(long group) const {
  const long n = cfg_.mel.n_mels;
  return {group * n / cfg_.groups, (group + 1) * n / cfg_.groups};
}

torch::Tensor SyntheticTokenizer::band_features(const torch::Tensor& mel, long group) const {
  const auto [lo, hi] = band(group);
  auto f = mel.narrow(1, lo, hi - lo).to(torch::kFloat64);
  if (cfg_.normalize_bands) f = f - f.mean(1, true);
  return f;
}

void SyntheticTokenizer::build_projections() {
  codebooks_.tables.clear();
  const long code_dim = cfg_.content_dim / cfg_.groups;
  for (long g = 0; g < cfg_.groups; ++g) {
    const auto [lo, hi] = band(g);
    const auto proj = seeded_normal({hi - lo, code_dim}, cfg_.seed + 101 * (g + 1)) /
                      std::sqrt(static_cast<double>(hi - lo));
    codebooks_.tables.push_back(torch::matmul(centroids_[g].to(torch::kFloat32), proj));
  }
  prompt_proj_ = seeded_normal({cfg_.mel.n_mels, cfg_.prompt_dim}, cfg_.seed + 7) /
                 std::sqrt(static_cast<double>(cfg_.mel.n_mels));
}

SyntheticTokenizer SyntheticTokenizer::fit(std::span<const dsp::Waveform> corpus, TokenizerConfig cfg) {
  if (corpus.empty()) throw InvalidArgument("fit_synthetic_tokenizer: empty corpus");
  if (cfg.codebook_size < 1) throw InvalidArgument("fit_synthetic_tokenizer: codebook_size must be >= 1");
  if (cfg.groups < 1 || cfg.groups > cfg.mel.n_mels) throw InvalidArgument("fit_synthetic_tokenizer: bad group count");
  if (cfg.content_dim % cfg.groups != 0) {
    throw InvalidArgument("fit_synthetic_tokenizer: content_dim must divide evenly across groups");
  }
  SyntheticTokenizer tok;
  tok.cfg_ = cfg;
  const dsp::MelAnalyzer mel(cfg.mel);
  std::vector<torch::Tensor> mels;
  {
    torch::NoGradGuard guard;
    for (const auto& w : corpus) {
      mels.push_back(mel(torch::tensor(w.samples)));
    }
  }
  const auto all = torch::cat(mels, 0);
  for (long g = 0; g < cfg.groups; ++g) {
    auto res = kmeans(tok.band_features(all, g), cfg.codebook_size, cfg.seed + g);
    tok.centroids_.push_back(res.centroids);
  }
  tok.build_projections();
  return tok;
}

TokenSeq SyntheticTokenizer::tokenize_mel(const torch::Tensor& mel) const {
  TokenSeq out;
  std::vector<torch::Tensor> cols;
  for (long g = 0; g < cfg_.groups; ++g) {
    const auto f = band_features(mel, g);
    const auto d = torch::cdist(f, centroids_[g]);
    cols.push_back(d.argmin(1));
  }
  out.ids = torch::stack(cols, 1).to(torch::kLong);
  return out;
}

TokenSeq SyntheticTokenizer::tokenize(const dsp::Waveform& w) const {
  torch::NoGradGuard guard;
  return tokenize_mel(dsp::mel_spectrogram(w, cfg_.mel));
}

torch::Tensor SyntheticTokenizer::prompt_features_mel(const torch::Tensor& mel) const {
  return torch::matmul(mel.to(torch::kFloat32), prompt_proj_);
}

torch::Tensor SyntheticTokenizer::prompt_features(const dsp::Waveform& w) const {
  torch::NoGradGuard guard;
  return prompt_features_mel(dsp::mel_spectrogram(w, cfg_.mel));
}

std::vector<std::pair<std::string, torch::Tensor>> SyntheticTokenizer::tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (long g = 0; g < cfg_.groups; ++g) {
    out.emplace_back("tokenizer.centroids." + std::to_string(g), centroids_[g]);
  }
  return out;
}

SyntheticTokenizer SyntheticTokenizer::from_tensors(
    TokenizerConfig cfg, const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  SyntheticTokenizer tok;
  tok.cfg_ = cfg;
  for (long g = 0; g < cfg.groups; ++g) {
    const auto key = "tokenizer.centroids." + std::to_string(g);
    auto it = std::find_if(named.begin(), named.end(), [&](const auto& p) { return p.first == key; });
    if (it == named.end()) throw FormatError("tokenizer tensor missing: " + key);
    tok.centroids_.push_back(it->second.to(torch::kFloat64));
  }
  tok.build_projections();
  return tok;
}

// ---------------------------------------------------------------- files

void write_feature_file(const std::filesystem::path& path, const torch::Tensor& matrix) {
  if (matrix.dim() != 2) throw InvalidArgument("feature files hold 2-D matrices");
  const auto m = matrix.to(torch::kFloat32).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_header(out, "FTR1", static_cast<std::uint32_t>(m.size(0)), static_cast<std::uint32_t>(m.size(1)));
  out.write(reinterpret_cast<const char*>(m.data_ptr<float>()), m.numel() * 4);
  if (!out) throw FormatError("write failed for " + path.string());
}

torch::Tensor read_feature_file(const std::filesystem::path& path) {
  auto raw = read_raw(path, "FTR1");
  auto t = torch::empty({static_cast<long>(raw.a), static_cast<long>(raw.b)}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), raw.payload.data(), raw.payload.size());
  return t;
}

void write_token_file(const std::filesystem::path& path, const TokenSeq& tokens) {
  const auto ids = tokens.ids.to(torch::kInt32).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_header(out, "TOK1", static_cast<std::uint32_t>(ids.size(0)), static_cast<std::uint32_t>(ids.size(1)));
  out.write(reinterpret_cast<const char*>(ids.data_ptr<std::int32_t>()), ids.numel() * 4);
  if (!out) throw FormatError("write failed for " + path.string());
}

TokenSeq read_token_file(const std::filesystem::path& path) {
  auto raw = read_raw(path, "TOK1");
  auto t = torch::empty({static_cast<long>(raw.a), static_cast<long>(raw.b)}, torch::kInt32);
  std::memcpy(t.data_ptr<std::int32_t>(), raw.payload.data(), raw.payload.size());
  TokenSeq seq;
  seq.ids = t.to(torch::kLong);
  return seq;
}

}  // namespace tokvc
