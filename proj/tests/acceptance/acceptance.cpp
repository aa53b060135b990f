// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokvc/activations.hpp"
#include "tokvc/checkpoint.hpp"
#include "tokvc/config.hpp"
#include "tokvc/data.hpp"
#include "tokvc/dsp.hpp"
#include "tokvc/errors.hpp"
#include "tokvc/features.hpp"
#include "tokvc/frontend.hpp"
#include "tokvc/generator.hpp"
#include "tokvc/model.hpp"
#include "tokvc/synthesis.hpp"
#include "tokvc/toy.hpp"
#include "tokvc/trainer.hpp"

using namespace tokvc;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

double composite(double x, const std::vector<double>& s, double alpha, double beta, const std::vector<double>& w,
                 double b) {
  double z = b;
  for (size_t i = 0; i < s.size(); ++i) z += w[i] * s[i];
  const double t = std::tanh(z);
  const double sn = std::sin((alpha + t) * x);
  return x + sn * sn / (beta + 0.5 * t);
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d1 = [](double v) { return torch::tensor({v}, torch::kFloat64); };
  const auto x1 = [](double v) { return torch::full({1, 1, 1}, v, torch::kFloat64); };

  // Worked values through the tensor path, with T(s) built from W and b.
  const auto t_of = [&](double target) {
    return condition_transform(torch::ones({1, 2}, torch::kFloat64), torch::zeros({1, 2}, torch::kFloat64),
                               d1(std::atanh(target)));
  };
  const double v1 = adaptive_snake(x1(kPi / 3), d1(1.0), d1(1.0), t_of(0.5)).item<double>();
  const double v2 = adaptive_snake(x1(kPi / 2), d1(1.0), d1(1.0), t_of(0.0)).item<double>();
  const double v3 = adaptive_snake(x1(0.9), d1(0.4), d1(1.0), t_of(-0.4)).item<double>();
  double worst_value = std::abs(v1 - 1.847198);
  worst_value = std::max(worst_value, std::abs(v2 - (kPi / 2 + 1.0)));
  worst_value = std::max(worst_value, std::abs(v3 - 0.9));

  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int d = 4;
  const double h = 1e-6;
  double worst_rel = 0.0;
  int draws = 0, skipped = 0;
  while (draws < 1000) {
    const double x = 2.0 * n01(rng);
    const double alpha = std::exp(0.5 * n01(rng));
    const double beta = std::exp(0.5 * n01(rng));
    std::vector<double> s(d), w(d);
    for (auto& v : s) v = n01(rng);
    for (auto& v : w) v = 0.5 * n01(rng);
    const double b = 0.5 * n01(rng);
    double z = b;
    for (int i = 0; i < d; ++i) z += w[i] * s[i];
    // Keep away from the divisor pole, where central differences are meaningless.
    if (std::abs(beta + 0.5 * std::tanh(z)) < 1e-3) {
      ++skipped;
      continue;
    }
    auto tx = torch::full({1, 1, 1}, x, torch::kFloat64).requires_grad_();
    auto ta = d1(alpha).requires_grad_();
    auto tb = d1(beta).requires_grad_();
    auto ts = torch::tensor(s, torch::kFloat64).view({1, d}).requires_grad_();
    auto tw = torch::tensor(w, torch::kFloat64).view({1, d}).requires_grad_();
    auto tbias = d1(b).requires_grad_();
    adaptive_snake(tx, ta, tb, condition_transform(ts, tw, tbias)).sum().backward();

    const auto check = [&](double analytic, const std::function<double(double)>& f) {
      const double numeric = (f(h) - f(-h)) / (2 * h);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      worst_rel = std::max(worst_rel, rel);
    };
    check(tx.grad().item<double>(), [&](double e) { return composite(x + e, s, alpha, beta, w, b); });
    check(ta.grad().item<double>(), [&](double e) { return composite(x, s, alpha + e, beta, w, b); });
    check(tb.grad().item<double>(), [&](double e) { return composite(x, s, alpha, beta + e, w, b); });
    check(tbias.grad().item<double>(), [&](double e) { return composite(x, s, alpha, beta, w, b + e); });
    for (int i = 0; i < d; ++i) {
      check(tw.grad()[0][i].item<double>(), [&](double e) {
        auto w2 = w;
        w2[i] += e;
        return composite(x, s, alpha, beta, w2, b);
      });
      check(ts.grad()[0][i].item<double>(), [&](double e) {
        auto s2 = s;
        s2[i] += e;
        return composite(x, s2, alpha, beta, w, b);
      });
    }
    ++draws;
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst_value <= 1e-6 && worst_rel <= 1e-5 && elapsed < 60.0;
  o.detail = "worked-value error " + fmt(worst_value) + " (<= 1e-6), max gradient rel err " + fmt(worst_rel) +
             " over " + std::to_string(draws) + " draws (<= 1e-5; " + std::to_string(skipped) +
             " near-pole draws redrawn), " + fmt(elapsed) + " s (< 60 s)";
  return o;
}

// ---------------------------------------------------------------- 2

long ulp_distance(float a, float b) {
  if (a == b) return 0;
  if (std::isnan(a) || std::isnan(b) || (std::signbit(a) != std::signbit(b))) return std::numeric_limits<long>::max();
  std::int32_t ia, ib;
  std::memcpy(&ia, &a, 4);
  std::memcpy(&ib, &b, 4);
  return std::abs(static_cast<long>(ia) - static_cast<long>(ib));
}

Outcome criterion2() {
  torch::manual_seed(2);
  const long channels = 16, per = 62500;  // 10^6 inputs
  AdaptiveSnake a(AdaptiveSnakeOptions{channels, 32, true});
  Snake p(SnakeOptions{channels, true});
  {
    torch::NoGradGuard g;
    const auto la = torch::randn({channels}) * 0.7;
    const auto lb = torch::randn({channels}) * 0.7;
    a->alpha_param.copy_(la);
    p->alpha_param.copy_(la);
    a->beta_param.copy_(lb);
    p->beta_param.copy_(lb);
    a->weight.zero_();
    a->bias.zero_();
  }
  torch::NoGradGuard g;
  const auto x = torch::randn({1, channels, per}) * 5;
  const auto s = torch::randn({1, 32}) * 3;
  const auto ya = a->forward(x, s).contiguous();
  const auto yp = p->forward(x).contiguous();
  const float* pa = ya.data_ptr<float>();
  const float* pp = yp.data_ptr<float>();
  long worst = 0;
  for (long i = 0; i < ya.numel(); ++i) worst = std::max(worst, ulp_distance(pa[i], pp[i]));
  return {worst <= 1, "max distance " + std::to_string(worst) + " ulp over " + std::to_string(ya.numel()) +
                          " inputs (<= 1 ulp)"};
}

// ---------------------------------------------------------------- 3

Outcome criterion3() {
  torch::manual_seed(3);
  const auto cfg = Config::paper_scale().model;
  const long attn = cfg.frontend.attn_dim;
  const long kv_dim = cfg.frontend.prenet_dims.back();
  CrossAttention att(attn, kv_dim, attn, cfg.frontend.n_heads, cfg.frontend.dropout);
  att->eval();
  torch::NoGradGuard g;
  const auto q = torch::randn({2, 50, attn});
  const auto kv = torch::randn({2, 300, kv_dim});
  const auto ref = att->forward(q, kv);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto out = att->forward(q, kv.index_select(1, torch::randperm(300)));
    worst = std::max(worst, (out - ref).abs().max().item<double>());
  }
  const auto prompt = torch::randn({3, 257, cfg.tokenizer.prompt_dim}) * 4;
  const auto spk = VocoderImpl::speaker_vector(prompt);
  bool bitwise = true;
  for (int i = 0; i < 100; ++i) {
    bitwise = bitwise && torch::equal(VocoderImpl::speaker_vector(prompt.index_select(1, torch::randperm(257))), spk);
  }
  return {worst <= 1e-5 && bitwise, "cross-attention max abs diff " + fmt(worst) +
                                        " over 100 permutations (<= 1e-5); speaker vector bit-identical: " +
                                        (bitwise ? "yes" : "no")};
}

// ---------------------------------------------------------------- 4

double band_power(const std::vector<float>& x, double lo, double hi) {
  const long n = static_cast<long>(x.size());
  std::vector<double> w(n);
  for (long i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
  double total = 0.0;
  for (long k = 0; k <= n / 2; ++k) {
    const double f = 2.0 * k / n;
    if (f < lo || f > hi) continue;
    std::complex<double> acc = 0.0;
    for (long i = 0; i < n; ++i) acc += w[i] * x[i] * std::polar(1.0, -2.0 * kPi * k * i / n);
    total += std::norm(acc);
  }
  return total;
}

std::vector<float> tone(long n, double freq_norm) {
  std::vector<float> x(n);
  for (long i = 0; i < n; ++i) x[i] = static_cast<float>(0.5 * std::sin(kPi * freq_norm * i));
  return x;
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& g = Config::paper_scale().model.generator;
  const auto f = dsp::halfband_filter(g.lp_transition, g.lp_atten_db);
  double worst_up = -1e9, worst_down = -1e9;
  for (double fr : {0.5, 0.7, 0.9}) {
    // Upsampling: the tone moves to fr/2 of the new Nyquist; its image would sit above 1/2.
    const auto up = dsp::upsample2x(tone(2048, fr), f);
    const std::vector<float> mid(up.begin() + 256, up.end() - 256);
    worst_up = std::max(worst_up, 10.0 * std::log10(band_power(mid, 0.5 + 1e-9, 1.0) / band_power(mid, 0.0, 0.5)));
    // Downsampling: a component at the mirror frequency above the new Nyquist must not alias back.
    const auto hi = tone(4096, 1.0 - fr / 2);
    const auto down = dsp::downsample2x(hi, f);
    const std::vector<float> dmid(down.begin() + 256, down.end() - 256);
    const std::vector<float> ref(hi.begin() + 512, hi.begin() + 512 + static_cast<long>(dmid.size()));
    worst_down = std::max(worst_down, 10.0 * std::log10(band_power(dmid, 0.0, 1.0) / band_power(ref, 0.0, 1.0)));
  }
  const auto x = tone(4000, 0.3);
  const auto y = dsp::downsample2x(dsp::upsample2x(x, f), f);
  double round_trip = 0.0;
  const size_t edge = f.taps.size();
  for (size_t i = edge; i + edge < x.size(); ++i) round_trip = std::max(round_trip, std::abs(double(y[i]) - x[i]));
  const double elapsed = seconds_since(t0);
  const bool pass = worst_up <= -60.0 && worst_down <= -60.0 && round_trip <= 1e-2 && y.size() == x.size() &&
                    elapsed < 60.0;
  return {pass, "worst image after 2x up " + fmt(worst_up) + " dB, worst alias after 2x down " + fmt(worst_down) +
                    " dB (<= -60 dB); round-trip max error " + fmt(round_trip) + " (<= 1e-2); " + fmt(elapsed) +
                    " s"};
}

// ---------------------------------------------------------------- 5

Outcome criterion5() {
  torch::manual_seed(5);
  const auto cfg = Config::desk_scale().model;
  Generator gen(cfg.generator);
  gen->eval();
  torch::NoGradGuard guard;
  bool ok = true;
  std::string lengths;
  for (long frames : {1L, 7L, 100L, 999L}) {
    const auto y = gen->forward(torch::randn({1, frames, cfg.generator.in_dim}),
                                torch::randn({1, cfg.generator.cond_dim}));
    ok = ok && y.size(1) == frames * 240;
    lengths += std::to_string(frames) + "->" + std::to_string(y.size(1)) + " ";
  }
  std::mt19937_64 rng(55);
  bool mel_ok = true;
  std::string mels;
  for (int i = 0; i < 10; ++i) {
    dsp::Waveform w;
    const long n = std::uniform_int_distribution<long>(1, 100000)(rng);
    w.samples.assign(n, 0.01f);
    const long frames = dsp::mel_spectrogram(w).size(0);
    // Centre padding: ceil(samples / hop) frames.
    mel_ok = mel_ok && frames == (n + 239) / 240;
    mels += std::to_string(n) + "->" + std::to_string(frames) + " ";
  }
  return {ok && mel_ok, "generator samples " + lengths + "; mel frames " + mels};
}

// ---------------------------------------------------------------- 6

Outcome criterion6() {
  const auto c = count_params(Config::paper_scale().model);
  const bool pass = c.total() >= 30000000 && c.total() <= 50000000;
  return {pass, "paper-scale parameters " + std::to_string(c.total()) + " (frontend " + std::to_string(c.frontend) +
                    ", generator " + std::to_string(c.generator) + "), required [30e6, 50e6]"};
}

// ---------------------------------------------------------------- 7, 8

struct ToyRun {
  Config cfg;
  std::vector<ToyUtterance> train, held_out;
  std::vector<ToySpeaker> speakers;
  std::optional<VoiceConverter> untrained, trained;
  std::vector<StepMetrics> metrics;
  std::string failure;
  double seconds = 0.0;
};

double resynthesis_mel_l1(const VoiceConverter& vc, const std::vector<ToyUtterance>& utts) {
  double total = 0.0;
  for (const auto& u : utts) {
    const auto y = vc.resynthesize(u.wav);
    const auto a = dsp::mel_spectrogram(u.wav, vc.config().model.mel);
    const auto b = dsp::mel_spectrogram(y, vc.config().model.mel);
    const long n = std::min(a.size(0), b.size(0));
    total += (a.narrow(0, 0, n) - b.narrow(0, 0, n)).abs().mean().item<double>();
  }
  return total / static_cast<double>(utts.size());
}

ToyRun& toy_run(const fs::path& work) {
  static std::optional<ToyRun> cached;
  if (cached) return *cached;
  cached.emplace();
  auto& r = *cached;
  const auto t0 = std::chrono::steady_clock::now();
  r.cfg = Config::desk_scale();
  r.cfg.train.seed = 1;
  ToyCorpusConfig cc;  // 64 utterances, 8 speakers, 2-4 s
  const auto corpus = make_toy_corpus(cc);
  r.speakers = toy_speakers(cc.speakers, cc.seed);
  // The last round of the round-robin (one utterance per speaker) is held out.
  const size_t split = corpus.size() - static_cast<size_t>(cc.speakers);
  r.train.assign(corpus.begin(), corpus.begin() + static_cast<long>(split));
  r.held_out.assign(corpus.begin() + static_cast<long>(split), corpus.end());

  std::vector<dsp::Waveform> waves;
  for (const auto& u : r.train) waves.push_back(u.wav);
  const auto tok = SyntheticTokenizer::fit(waves, r.cfg.model.tokenizer);
  std::vector<Utterance> utts;
  for (const auto& u : r.train) utts.push_back(make_utterance(u.id, u.wav, tok));

  fs::remove_all(work);
  fs::create_directories(work);
  Trainer trainer(r.cfg, tok, utts);
  std::cout << "  desk model: " << count_params(r.cfg.model).total() << " parameters; training "
            << r.cfg.train.steps << " steps on " << utts.size() << " utterances" << std::endl;
  trainer.save(work / "untrained.tvck");
  r.untrained.emplace(VoiceConverter::load(work / "untrained.tvck"));
  try {
    const auto last = trainer.run(work / "run", [&](const StepMetrics& m) {
      r.metrics.push_back(m);
      if (m.step % 100 == 0) {
        std::cout << "  step " << m.step << " aux_mel " << fmt(m.aux_mel) << " mel " << fmt(m.mel) << " d "
                  << fmt(m.d_loss) << " (" << fmt(seconds_since(t0)) << " s)" << std::endl;
      }
    });
    r.trained.emplace(VoiceConverter::load(last));
  } catch (const std::exception& e) {
    r.failure = e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome criterion7(const fs::path& work) {
  auto& r = toy_run(work);
  if (!r.trained) return {false, "training aborted: " + r.failure};
  double early = 0.0, late = 0.0;
  long n_early = 0, n_late = 0;
  bool finite = true;
  for (const auto& m : r.metrics) {
    finite = finite && m.finite();
    if (m.step >= 1 && m.step <= 100) {
      early += m.aux_mel;
      ++n_early;
    }
    if (m.step >= 1900 && m.step <= 2000) {
      late += m.aux_mel;
      ++n_late;
    }
  }
  if (n_early == 0 || n_late == 0) return {false, "metrics log lacks the comparison windows"};
  early /= n_early;
  late /= n_late;
  const double before = resynthesis_mel_l1(*r.untrained, r.held_out);
  const double after = resynthesis_mel_l1(*r.trained, r.held_out);
  const bool a = late <= 0.5 * early;
  const bool b = after <= 0.5 * before;
  const bool c = finite && static_cast<long>(r.metrics.size()) == r.cfg.train.steps;
  return {a && b && c, "(a) aux mel L1 steps 1900-2000 " + fmt(late) + " vs steps 1-100 " + fmt(early) + " (ratio " +
                           fmt(late / early) + ", <= 0.5); (b) held-out resynthesis mel L1 " + fmt(after) +
                           " trained vs " + fmt(before) + " untrained (ratio " + fmt(after / before) +
                           ", <= 0.5); (c) all loss terms finite over " + std::to_string(r.metrics.size()) +
                           " steps: " + (c ? "yes" : "no") + "; " + fmt(r.seconds / 60.0) + " min"};
}

Outcome criterion8(const fs::path& work) {
  auto& r = toy_run(work);
  if (!r.trained) return {false, "training aborted: " + r.failure};
  // Held-out utterance i belongs to speaker i. Prompts: the flattest and the
  // steepest speaker; source: the speaker nearest the middle.
  std::vector<size_t> order(r.held_out.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto tilt_of = [&](size_t i) { return r.speakers[r.held_out[i].speaker].tilt_db_per_octave; };
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return tilt_of(a) < tilt_of(b); });
  const auto& steep = r.held_out[order.front()];
  const auto& flat = r.held_out[order.back()];
  const auto& source = r.held_out[order[order.size() / 2]];
  const double prompt_diff = spectral_tilt(flat.wav) - spectral_tilt(steep.wav);
  const auto out_flat = r.trained->convert(source.wav, flat.wav);
  const auto out_steep = r.trained->convert(source.wav, steep.wav);
  const double out_diff = spectral_tilt(out_flat) - spectral_tilt(out_steep);
  const bool pass = prompt_diff != 0.0 && std::isfinite(out_diff) && (out_diff > 0) == (prompt_diff > 0) &&
                    out_diff != 0.0;
  return {pass, "prompt tilt difference " + fmt(prompt_diff) + " dB/oct (" + flat.id + " minus " + steep.id +
                    "), converted-output tilt difference " + fmt(out_diff) + " dB/oct for source " + source.id +
                    "; signs must agree"};
}

// ---------------------------------------------------------------- 9

Outcome criterion9() {
  Rng rng(99);
  const long d = 900;
  const int n = 100000;
  long begins = 0;
  double lo = 1.0, hi = 0.0;
  bool bounds = true;
  for (int i = 0; i < n; ++i) {
    const auto draw = draw_prompt_segment(d, rng);
    const auto& s = draw.segment;
    bounds = bounds && s.start >= 0 && s.end() <= d && draw.offset >= 0 && draw.offset <= 100 && s.len >= 300 &&
             s.len <= 450;
    const double frac = static_cast<double>(s.len) / d;
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
    begins += draw.edge == Edge::kBegin;
  }
  const double share = static_cast<double>(begins) / n;
  const bool pass = bounds && lo <= 0.34 && hi >= 0.49 && std::abs(share - 0.5) <= 0.02;
  return {pass, std::string("bounds ") + (bounds ? "held" : "violated") + "; L/D min " + fmt(lo) + " (<= 0.34) max " +
                    fmt(hi) + " (>= 0.49); begin-edge share " + fmt(share) + " (0.5 +- 0.02)"};
}

// ---------------------------------------------------------------- 10

Outcome criterion10() {
  const auto speakers = toy_speakers(3, 7);
  const auto x = toy_utterance(speakers[1], 3.0, 11);
  const double pc = eval_pcorr(x, x);
  const std::vector<double> v{0.3, -1.2, 2.0, 0.7}, neg{-0.3, 1.2, -2.0, -0.7};
  const std::vector<double> e1{1.0, 2.0, 0.0, 0.0}, e2{-2.0, 1.0, 0.0, 0.0};
  const double s1 = secs(v, v), s0 = secs(e1, e2), sm = secs(v, neg);
  const bool secs_ok = std::abs(s1 - 1.0) <= 1e-9 && std::abs(s0) <= 1e-9 && std::abs(sm + 1.0) <= 1e-9;

  dsp::Waveform saw;
  saw.samples.resize(72000);
  for (size_t i = 0; i < saw.samples.size(); ++i) {
    saw.samples[i] = static_cast<float>(2.0 * std::fmod(100.0 * i / 24000.0, 1.0) - 1.0) * 0.5f;
  }
  const auto c = dsp::track_pitch(saw);
  long voiced = 0;
  double worst = 0.0;
  for (size_t i = 0; i < c.size(); ++i) {
    if (!c.voiced[i]) continue;
    ++voiced;
    worst = std::max(worst, std::abs(c.f0[i] - 100.0) / 100.0);
  }
  const double voiced_share = static_cast<double>(voiced) / static_cast<double>(c.size());
  const bool pitch_ok = voiced_share >= 0.9 && worst <= 0.02;
  return {pc >= 0.999 && secs_ok && pitch_ok,
          "P.Corr(x, x) " + fmt(pc) + " (>= 0.999); SECS 1/0/-1 cases " + fmt(s1) + " / " + fmt(s0) + " / " +
              fmt(sm) + " (to 1e-9); sawtooth: " + fmt(100.0 * voiced_share) +
              "% frames voiced, worst f0 error " + fmt(100.0 * worst) + "% (<= 2%)"};
}

// ---------------------------------------------------------------- 11

Outcome criterion11(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  auto cfg = Config::desk_scale();
  cfg.train.seed = 11;
  ToyCorpusConfig cc;
  cc.utterances = 4;
  cc.speakers = 2;
  cc.max_s = 2.5;
  const auto corpus = make_toy_corpus(cc);
  std::vector<dsp::Waveform> waves;
  for (const auto& u : corpus) waves.push_back(u.wav);
  const auto tok = SyntheticTokenizer::fit(waves, cfg.model.tokenizer);
  std::vector<Utterance> utts;
  for (const auto& u : corpus) utts.push_back(make_utterance(u.id, u.wav, tok));

  // Checkpoint probe.
  Trainer a(cfg, tok, utts);
  for (int i = 0; i < 2; ++i) a.step();
  a.save(work / "k.tvck");
  const VoiceConverter live(a.config(), a.tokenizer(), a.model);
  const auto loaded = VoiceConverter::load(work / "k.tvck");
  const bool probe = live.resynthesize(corpus[0].wav).samples == loaded.resynthesize(corpus[0].wav).samples;

  // Resume: the step after the checkpoint must match exactly.
  const auto expected = a.step();
  Trainer b(cfg, tok, utts);
  b.restore(load_checkpoint(work / "k.tvck"));
  const auto got = b.step();
  const bool resume = got.to_json().dump() == expected.to_json().dump();

  // Feature files.
  const auto& u = utts[1];
  write_feature_file(work / "p.ftr", u.prompt);
  write_token_file(work / "t.tok", u.tokens);
  const bool feats = torch::equal(read_feature_file(work / "p.ftr"), u.prompt) &&
                     torch::equal(read_token_file(work / "t.tok").ids, u.tokens.ids);
  return {probe && resume && feats, std::string("checkpoint probe identical: ") + (probe ? "yes" : "no") +
                                        "; resumed step " + std::to_string(got.step) + " metrics identical: " +
                                        (resume ? "yes" : "no") + "; feature/token files bit-exact: " +
                                        (feats ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  std::string work = (fs::temp_directory_path() / "tokvc_acceptance").string();
  app.add_option("--criteria", criteria, "Criteria to run")->delimiter(',');
  app.add_option("--work-dir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  enable_deterministic_mode();
  const fs::path root(work);
  std::map<int, std::function<Outcome()>> table{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, criterion5},
      {6, criterion6},
      {7, [&] { return criterion7(root / "toy"); }},
      {8, [&] { return criterion8(root / "toy"); }},
      {9, criterion9},
      {10, criterion10},
      {11, [&] { return criterion11(root / "repro"); }},
  };
  int failed = 0;
  for (int c : criteria) {
    Outcome o;
    const auto it = table.find(c);
    if (it == table.end()) {
      o = {false, "unknown criterion"};
    } else {
      try {
        o = it->second();
      } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
      }
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
