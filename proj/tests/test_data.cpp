#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tokvc/data.hpp"
#include "tokvc/errors.hpp"

using namespace tokvc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tokvc_data_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_silence(const fs::path& p, double seconds) {
  dsp::Waveform w;
  w.samples.assign(static_cast<size_t>(seconds * w.sample_rate), 0.0f);
  fs::create_directories(p.parent_path());
  dsp::write_wav(p, w);
}

// Every stream encodes its frame index so cuts can be traced back.
Utterance indexed_utterance(long frames, const std::string& id = "u") {
  Utterance u;
  u.id = id;
  const auto idx = torch::arange(frames, torch::kLong);
  u.tokens.ids = torch::stack({idx, idx}, 1);
  u.prompt = idx.to(torch::kFloat32).unsqueeze(1).repeat({1, 3});
  u.mel = idx.to(torch::kFloat32).unsqueeze(1).repeat({1, 4});
  u.wav = torch::arange(frames * 240, torch::kFloat32);
  return u;
}

TrainingExample example_of(long frames, const std::string& id = "e") {
  auto u = indexed_utterance(frames + 2, id);
  DataConfig cfg;
  return make_training_example(u, PromptSegment{frames, 2}, cfg);
}

}  // namespace

TEST(Manifest, DurationFilterAndErrors) {
  const auto root = scratch("manifest");
  write_silence(root / "a" / "short.wav", 5.0);
  write_silence(root / "a" / "ok.wav", 10.0);
  write_silence(root / "b" / "long.wav", 31.0);
  const auto m = build_manifest(root);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries[0].id, "a/ok");
  EXPECT_NEAR(m.entries[0].duration_s, 10.0, 1e-9);

  const auto empty = scratch("empty");
  write_silence(empty / "x.wav", 5.0);
  EXPECT_THROW(build_manifest(empty), FormatError);
  EXPECT_THROW(build_manifest(empty / "missing"), InvalidArgument);
  fs::remove_all(root);
  fs::remove_all(empty);
}

TEST(Manifest, TextRoundTripAndDuplicates) {
  const auto dir = scratch("tsv");
  Manifest m;
  m.entries.push_back({"s1/u1", "/data/u1.wav", 7.25, "/f/u1.tok", "/f/u1.ftr"});
  m.entries.push_back({"s1/u2", "/data/u2.wav", 12.5, {}, {}});
  write_manifest(dir / "m.tsv", m);
  const auto r = read_manifest(dir / "m.tsv");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.entries[0].id, "s1/u1");
  EXPECT_EQ(r.entries[0].prompt, fs::path("/f/u1.ftr"));
  EXPECT_DOUBLE_EQ(r.entries[1].duration_s, 12.5);
  EXPECT_TRUE(r.entries[1].tokens.empty());

  m.entries.push_back(m.entries[0]);
  write_manifest(dir / "dup.tsv", m);
  EXPECT_THROW(read_manifest(dir / "dup.tsv"), FormatError);
  std::ofstream(dir / "bad.tsv") << "only\ttwo\n";
  EXPECT_THROW(read_manifest(dir / "bad.tsv"), FormatError);
  fs::remove_all(dir);
}

TEST(Sampler, WorkedExamples) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto d = draw_prompt_segment(1200, rng);
    EXPECT_GE(d.segment.len, 400);
    EXPECT_LE(d.segment.len, 600);
    if (d.edge == Edge::kBegin) {
      EXPECT_EQ(d.segment.start, d.offset);
    } else {
      EXPECT_EQ(d.segment.end(), 1200 - d.offset);
    }
    if (d.edge == Edge::kBegin && d.offset == 0 && d.segment.len == 400) {
      EXPECT_EQ(d.segment.start, 0);
      EXPECT_EQ(d.segment.end(), 400);
    }
  }
  EXPECT_THROW(draw_prompt_segment(599, rng), InvalidArgument);
  EXPECT_NO_THROW(draw_prompt_segment(600, rng));
}

TEST(Sampler, MonteCarloBoundsAndCoverage) {
  Rng rng(11);
  long lo = 1000, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto d = draw_prompt_segment(900, rng);
    EXPECT_GE(d.segment.start, 0);
    EXPECT_LE(d.segment.end(), 900);
    EXPECT_LE(d.offset, 100);
    lo = std::min(lo, d.segment.len);
    hi = std::max(hi, d.segment.len);
  }
  EXPECT_EQ(lo, 300);
  EXPECT_EQ(hi, 450);
}

TEST(Sampler, LengthUniformAndEdgeBalanced) {
  Rng rng(2024);
  const long d = 1200, lo = 400, hi = 600;
  const int n = 100000;
  std::vector<long> counts(hi - lo + 1, 0);
  long begins = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = draw_prompt_segment(d, rng);
    ++counts[s.segment.len - lo];
    begins += s.edge == Edge::kBegin;
  }
  const double expected = static_cast<double>(n) / counts.size();
  double chi2 = 0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 0.001 quantile of chi-squared (Wilson-Hilferty), z = 3.0902.
  const double df = counts.size() - 1;
  const double a = 2.0 / (9.0 * df);
  const double crit = df * std::pow(1.0 - a + 3.0902 * std::sqrt(a), 3);
  EXPECT_LT(chi2, crit);
  // Five binomial standard deviations.
  EXPECT_LT(std::abs(begins - n / 2.0), 5.0 * std::sqrt(n * 0.25));
}

TEST(Sampler, GeneralisedOffsetWindow) {
  Rng rng(3);
  SamplerConfig cfg{20, 200};
  for (int i = 0; i < 1000; ++i) {
    const auto d = draw_prompt_segment(200, rng, cfg);
    EXPECT_LE(d.offset, 20);
    EXPECT_GE(d.segment.start, 0);
    EXPECT_LE(d.segment.end(), 200);
  }
  EXPECT_THROW(draw_prompt_segment(199, rng, cfg), InvalidArgument);
}

TEST(TrainingExample, AlignmentExamples) {
  const auto u = indexed_utterance(1000);
  DataConfig cfg;
  const auto a = make_training_example(u, PromptSegment{0, 400}, cfg);
  EXPECT_EQ(a.target_start, 400);
  EXPECT_EQ(a.target_len, 600);
  EXPECT_EQ(a.wav.size(0), 144000);
  EXPECT_EQ(a.wav[0].item<float>(), 400.0f * 240);
  EXPECT_EQ(a.tokens.size(0), 600);
  EXPECT_EQ(a.prompt.size(0), 400);
  EXPECT_EQ(a.mel[0][0].item<float>(), 400.0f);

  const auto b = make_training_example(u, PromptSegment{550, 450}, cfg);
  EXPECT_EQ(b.target_start, 0);
  EXPECT_EQ(b.target_len, 550);
  EXPECT_EQ(b.wav.size(0), 550 * 240);
  EXPECT_EQ(b.prompt.size(0), 450);

  cfg.target = TargetMode::kFull;
  const auto c = make_training_example(u, PromptSegment{0, 400}, cfg);
  EXPECT_EQ(c.target_len, 1000);
}

TEST(TrainingExample, ContentAndPromptFramesAreDisjoint) {
  const auto u = indexed_utterance(1500);
  DataConfig cfg;
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto ex = make_training_example(u, rng, cfg);
    const auto content = ex.tokens.select(1, 0);
    const long pstart = ex.prompt_segment.start, pend = ex.prompt_segment.end();
    const auto inside = content.ge(pstart).logical_and(content.lt(pend));
    EXPECT_FALSE(inside.any().item<bool>());
    EXPECT_EQ(ex.prompt.size(0), ex.prompt_segment.len);
    EXPECT_EQ(ex.prompt[0][0].item<float>(), static_cast<float>(pstart));
    EXPECT_EQ(ex.wav.size(0), ex.target_len * 240);
  }
}

TEST(TrainingExample, MissingFeaturesError) {
  auto u = indexed_utterance(700);
  u.prompt = torch::Tensor();
  Rng rng(1);
  EXPECT_THROW(make_training_example(u, rng, DataConfig{}), FormatError);
}

TEST(Batching, BudgetAndMasks) {
  const std::vector<TrainingExample> three{example_of(1000, "a"), example_of(1000, "b"), example_of(1000, "c")};
  EXPECT_EQ(make_batches(three, 36.0).size(), 1u);
  const std::vector<TrainingExample> two{example_of(2000, "a"), example_of(2000, "b")};
  EXPECT_EQ(make_batches(two, 36.0).size(), 2u);
  const std::vector<TrainingExample> big{example_of(3700, "big")};
  EXPECT_THROW(make_batches(big, 36.0), InvalidArgument);

  const std::vector<TrainingExample> mixed{example_of(5, "x"), example_of(9, "y")};
  const auto batches = make_batches(mixed, 36.0);
  ASSERT_EQ(batches.size(), 1u);
  const auto& b = batches[0];
  EXPECT_LE(b.total_s(), 36.0);
  EXPECT_EQ(b.tokens.sizes(), torch::IntArrayRef({2, 9, 2}));
  auto expected = torch::ones({2, 9}, torch::kBool);
  expected[0].narrow(0, 5, 4).fill_(false);
  EXPECT_TRUE(torch::equal(b.content_mask, expected));
  EXPECT_TRUE(b.prompt_mask.all().item<bool>());
  EXPECT_EQ(b.wav[0].narrow(0, 5 * 240, 4 * 240).abs().sum().item<float>(), 0.0f);
}

TEST(DataStream, DeterministicAndSkippable) {
  std::vector<Utterance> utts;
  for (int i = 0; i < 6; ++i) utts.push_back(indexed_utterance(700 + 50 * i, "u" + std::to_string(i)));
  DataConfig cfg;
  cfg.max_batch_s = 8.0;
  DataStream a(utts, cfg, 9), b(utts, cfg, 9), c(utts, cfg, 10);
  std::vector<Batch> seq;
  bool differs = false;
  for (int i = 0; i < 8; ++i) {
    seq.push_back(a.next());
    const auto other = b.next();
    EXPECT_EQ(seq.back().ids, other.ids);
    EXPECT_TRUE(torch::equal(seq.back().tokens, other.tokens));
    const auto third = c.next();
    differs = differs || third.ids != other.ids || !torch::equal(third.wav, other.wav);
  }
  EXPECT_TRUE(differs);
  EXPECT_GE(a.epoch(), 1);
  DataStream d(utts, cfg, 9);
  d.skip(5);
  const auto sixth = d.next();
  EXPECT_EQ(sixth.ids, seq[5].ids);
  EXPECT_TRUE(torch::equal(sixth.tokens, seq[5].tokens));
  EXPECT_EQ(d.batches_served(), 6);
}

TEST(Seeds, MixSeedSeparatesStreams) {
  EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
  EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
  EXPECT_NE(mix_seed(1, 2, 0), mix_seed(2, 1, 0));
}
