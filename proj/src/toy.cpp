#include "tokvc/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <numbers>
#include <random>

#include <torch/torch.h>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace {

struct Vowel {
  double f1, f2, f3;
};

constexpr Vowel kVowels[] = {{730, 1090, 2440}, {270, 2290, 3010}, {300, 870, 2240}, {530, 1840, 2480},
                             {660, 1720, 2410}, {490, 1350, 1690}, {640, 1190, 2390}, {440, 1020, 2240}};

double formant_gain(double f, const Vowel& v) {
  auto bump = [f](double fc, double bw) { return std::exp(-0.5 * std::pow((f - fc) / bw, 2.0)); };
  return 0.15 + bump(v.f1, 90.0) + 0.8 * bump(v.f2, 120.0) + 0.5 * bump(v.f3, 160.0);
}

}  // namespace

std::vector<ToySpeaker> toy_speakers(long count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("toy corpus needs at least one speaker");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::vector<ToySpeaker> out;
  for (long i = 0; i < count; ++i) {
    // Tilt and f0 walk the grid in different orders so they are not collinear.
    const double a = (i + 0.5 + 0.3 * jitter(rng)) / count;
    const double b = ((i * 3 % count) + 0.5 + 0.3 * jitter(rng)) / count;
    out.push_back({90.0 + 150.0 * b, -12.0 + 9.0 * a});
  }
  return out;
}

dsp::Waveform toy_utterance(const ToySpeaker& spk, double duration_s, std::uint64_t seed, int sample_rate) {
  const long hop = sample_rate / 100;
  const long frames = std::max(1L, std::lround(duration_s * 100.0));
  const long n = frames * hop;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(std::size(kVowels)) - 1);

  // Piecewise vowel targets, 100-250 ms each, crossfaded over 30 ms.
  std::vector<long> bounds{0};
  std::vector<int> vowels{pick(rng)};
  while (bounds.back() < n) {
    bounds.push_back(bounds.back() + static_cast<long>((0.10 + 0.15 * uni(rng)) * sample_rate));
    vowels.push_back(pick(rng));
  }
  // Slow f0 contour: mean, declination and a random vibrato-like wobble.
  const double rate = 1.5 + 2.0 * uni(rng);
  const double depth = 0.06 + 0.08 * uni(rng);
  const double phase0 = 2.0 * std::numbers::pi * uni(rng);
  const double decl = -0.1 * uni(rng);

  const double nyq = sample_rate / 2.0;
  const int max_h = static_cast<int>(nyq / (spk.f0_hz * 0.7));
  std::vector<double> phase(max_h + 1);
  for (auto& p : phase) p = 2.0 * std::numbers::pi * uni(rng);
  const long block = hop / 4;  // envelope update interval
  std::vector<double> amp(max_h + 1, 0.0);
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  size_t seg = 0;
  const long xfade = static_cast<long>(0.03 * sample_rate);
  double f0 = spk.f0_hz;
  for (long s = 0; s < n; ++s) {
    if (s % block == 0) {
      const double t = static_cast<double>(s) / sample_rate;
      f0 = spk.f0_hz * (1.0 + depth * std::sin(2.0 * std::numbers::pi * rate * t + phase0) + decl * t / duration_s);
      while (seg + 1 < bounds.size() && s >= bounds[seg + 1]) ++seg;
      const double mixw = std::clamp(static_cast<double>(s - bounds[seg]) / xfade, 0.0, 1.0);
      const Vowel& cur = kVowels[vowels[seg + 1 < vowels.size() ? seg + 1 : seg]];
      const Vowel& prev = kVowels[vowels[seg]];
      const Vowel v{prev.f1 + mixw * (cur.f1 - prev.f1), prev.f2 + mixw * (cur.f2 - prev.f2),
                    prev.f3 + mixw * (cur.f3 - prev.f3)};
      for (int h = 1; h <= max_h; ++h) {
        const double f = h * f0;
        amp[h] = f < nyq * 0.95
                     ? std::pow(10.0, spk.tilt_db_per_octave * std::log2(static_cast<double>(h)) / 20.0) *
                           formant_gain(f, v)
                     : 0.0;
      }
    }
    double y = 0.0;
    for (int h = 1; h <= max_h; ++h) {
      if (amp[h] == 0.0) continue;
      phase[h] += 2.0 * std::numbers::pi * h * f0 / sample_rate;
      y += amp[h] * std::sin(phase[h]);
    }
    w.samples[s] = static_cast<float>(y);
  }
  // Short fades so the complex starts and stops cleanly.
  const long fade = std::min(n / 4, static_cast<long>(0.02 * sample_rate));
  double peak = 1e-12;
  for (long s = 0; s < n; ++s) {
    double g = 1.0;
    if (s < fade) g = static_cast<double>(s) / fade;
    if (n - 1 - s < fade) g = std::min(g, static_cast<double>(n - 1 - s) / fade);
    w.samples[s] *= static_cast<float>(g);
    peak = std::max(peak, std::abs(static_cast<double>(w.samples[s])));
  }
  for (auto& v : w.samples) v = static_cast<float>(v * 0.5 / peak);
  return w;
}

std::vector<ToyUtterance> make_toy_corpus(const ToyCorpusConfig& cfg) {
  if (cfg.utterances < 1 || !(cfg.min_s > 0 && cfg.min_s <= cfg.max_s)) {
    throw InvalidArgument("bad toy corpus settings");
  }
  const auto speakers = toy_speakers(cfg.speakers, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0xC0FFEEULL);
  std::uniform_real_distribution<double> dur(cfg.min_s, cfg.max_s);
  std::vector<ToyUtterance> out;
  for (long i = 0; i < cfg.utterances; ++i) {
    const long spk = i % cfg.speakers;
    const double d = dur(rng);
    char id[64];
    std::snprintf(id, sizeof id, "spk%02ld_utt%03ld", spk, i);
    out.push_back({id, spk, toy_utterance(speakers[spk], d, rng(), cfg.sample_rate)});
  }
  return out;
}

double spectral_tilt(const dsp::Waveform& w, double fmin, double fmax) {
  const long n_fft = 2048;
  if (static_cast<long>(w.samples.size()) < n_fft) throw InvalidArgument("spectral_tilt: waveform too short");
  torch::NoGradGuard guard;
  const auto x = torch::tensor(w.samples).to(torch::kFloat64);
  const auto spec = torch::stft(x, n_fft, n_fft / 4, n_fft, torch::hann_window(n_fft, torch::kFloat64),
                                false, true, true);
  const auto power = spec.abs().pow(2).mean(1);  // long-term average
  const auto p = power.contiguous();
  const double* pp = p.data_ptr<double>();
  // Average within 1/6-octave bands so harmonic density does not bias the fit.
  std::vector<double> xs, ys;
  for (double lo = fmin; lo * std::pow(2.0, 1.0 / 6.0) <= fmax; lo *= std::pow(2.0, 1.0 / 6.0)) {
    const double hi = lo * std::pow(2.0, 1.0 / 6.0);
    double acc = 0.0;
    long cnt = 0;
    for (long k = 0; k <= n_fft / 2; ++k) {
      const double f = static_cast<double>(k) * w.sample_rate / n_fft;
      if (f >= lo && f < hi) {
        acc += pp[k];
        ++cnt;
      }
    }
    if (cnt == 0) continue;
    xs.push_back(std::log2(std::sqrt(lo * hi)));
    ys.push_back(10.0 * std::log10(acc / cnt + 1e-20));
  }
  if (xs.size() < 2) throw InvalidArgument("spectral_tilt: frequency range too narrow");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace tokvc
