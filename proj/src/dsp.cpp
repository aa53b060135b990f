#include "tokvc/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "tokvc/errors.hpp"

namespace tokvc::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

template <typename T>
T read_le(const std::uint8_t* p) {
  static_assert(std::endian::native == std::endian::little);
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  bool is_float = false;
  std::size_t data_offset = 0;
  std::size_t data_bytes = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

WavInfo parse_header(const std::vector<std::uint8_t>& buf, const std::string& name) {
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(name + ": not a RIFF/WAVE file");
  }
  WavInfo info;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const auto* id = buf.data() + pos;
    const auto size = read_le<std::uint32_t>(buf.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16 || body + size > buf.size()) throw FormatError(name + ": truncated fmt chunk");
      auto format = read_le<std::uint16_t>(buf.data() + body);
      info.channels = read_le<std::uint16_t>(buf.data() + body + 2);
      info.sample_rate = static_cast<int>(read_le<std::uint32_t>(buf.data() + body + 4));
      info.bits = read_le<std::uint16_t>(buf.data() + body + 14);
      if (format == 0xFFFE && size >= 26) {
        format = read_le<std::uint16_t>(buf.data() + body + 24);
      }
      if (format == 1 && info.bits == 16) {
        info.is_float = false;
      } else if (format == 3 && info.bits == 32) {
        info.is_float = true;
      } else {
        throw FormatError(name + ": only 16-bit PCM and 32-bit float WAV are supported");
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(name + ": data chunk before fmt chunk");
      info.data_offset = body;
      info.data_bytes = std::min<std::size_t>(size, buf.size() - body);
      if (info.data_bytes != size) throw FormatError(name + ": truncated data chunk");
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || info.data_offset == 0) throw FormatError(name + ": missing fmt or data chunk");
  if (info.channels != 1) throw FormatError(name + ": only mono audio is supported");
  if (info.sample_rate <= 0) throw FormatError(name + ": invalid sample rate");
  return info;
}

double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

torch::Tensor pad_last(const torch::Tensor& x3, long left, long right) {
  namespace F = torch::nn::functional;
  F::PadFuncOptions::mode_t mode = torch::kReplicate;
  if (left < x3.size(-1) && right < x3.size(-1)) mode = torch::kReflect;
  return F::pad(x3, F::PadFuncOptions({left, right}).mode(mode));
}

torch::Tensor as_batch(const torch::Tensor& x) {
  if (x.dim() < 1 || x.size(-1) == 0) throw InvalidArgument("resampling requires a non-empty signal");
  return x.reshape({-1, 1, x.size(-1)});
}

torch::Tensor to_tensor(std::span<const float> x) {
  return torch::from_blob(const_cast<float*>(x.data()), {static_cast<long>(x.size())},
                          torch::kFloat32)
      .clone();
}

std::vector<float> to_vector(const torch::Tensor& t) {
  auto c = t.contiguous().to(torch::kFloat32);
  return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

torch::Tensor taps_tensor(const FirFilter& f) {
  std::vector<float> t(f.taps.begin(), f.taps.end());
  return torch::tensor(t);
}

}  // namespace

// ---------------------------------------------------------------- WAV I/O

Waveform read_wav(const std::filesystem::path& path, int target_rate) {
  const auto buf = slurp(path);
  const auto info = parse_header(buf, path.string());
  Waveform w;
  w.sample_rate = info.sample_rate;
  const auto* data = buf.data() + info.data_offset;
  if (info.is_float) {
    w.samples.resize(info.data_bytes / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = read_le<float>(data + 4 * i);
  } else {
    w.samples.resize(info.data_bytes / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      w.samples[i] = static_cast<float>(read_le<std::int16_t>(data + 2 * i)) / 32768.0f;
    }
  }
  for (float v : w.samples) {
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite sample");
  }
  if (target_rate > 0 && target_rate != w.sample_rate) {
    w.samples = resample(w.samples, w.sample_rate, target_rate);
    w.sample_rate = target_rate;
  }
  return w;
}

double wav_duration_s(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const auto info = parse_header(buf, path.string());
  const std::size_t frame_bytes = info.bits / 8;
  return static_cast<double>(info.data_bytes / frame_bytes) / info.sample_rate;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const bool is_float = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, is_float ? 3 : 1);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_le<std::uint16_t>(out, bits / 8);
  put_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_bytes);
  for (float v : w.samples) {
    if (is_float) {
      put_le<float>(out, v);
    } else {
      const float c = std::clamp(v, -1.0f, 1.0f);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(c * 32767.0f)));
    }
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

// ---------------------------------------------------------------- filters

FirFilter design_lowpass(double cutoff_norm, double transition_norm, double atten_db) {
  if (!(cutoff_norm > 0.0 && cutoff_norm < 1.0)) {
    throw InvalidDesign("cutoff must lie in (0, 1) of Nyquist");
  }
  if (!(transition_norm > 0.0)) throw InvalidDesign("transition width must be positive");
  if (cutoff_norm + transition_norm >= 1.0) {
    throw InvalidDesign("cutoff + transition must stay below Nyquist");
  }
  if (!(atten_db >= 40.0)) throw InvalidDesign("stopband attenuation must be at least 40 dB");

  // Kaiser's empirical order and shape formulas.
  const double beta = atten_db > 50.0 ? 0.1102 * (atten_db - 8.7)
                                      : 0.5842 * std::pow(atten_db - 21.0, 0.4) +
                                            0.07886 * (atten_db - 21.0);
  const double dw = kPi * transition_norm;
  auto n = static_cast<long>(std::ceil((atten_db - 7.95) / (2.285 * dw))) + 1;
  if (n % 2 == 0) ++n;

  const long half = n / 2;
  std::vector<double> right(half + 1);
  const double i0_beta = bessel_i0(beta);
  for (long m = 0; m <= half; ++m) {
    const double arg = cutoff_norm * static_cast<double>(m);
    const double sinc = m == 0 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
    const double r = static_cast<double>(m) / static_cast<double>(half);
    const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    right[m] = cutoff_norm * sinc * win;
  }
  double sum = right[0];
  for (long m = 1; m <= half; ++m) sum += 2.0 * right[m];

  FirFilter f;
  f.cutoff_norm = cutoff_norm;
  f.transition_norm = transition_norm;
  f.atten_db = atten_db;
  f.taps.resize(n);
  for (long m = 0; m <= half; ++m) {
    const double v = right[m] / sum;
    f.taps[half + m] = v;
    f.taps[half - m] = v;
  }
  return f;
}

FirFilter halfband_filter(double transition_norm, double atten_db) {
  return design_lowpass(0.5, transition_norm, atten_db);
}

torch::Tensor upsample2x(const torch::Tensor& x, const torch::Tensor& taps) {
  const auto xb = as_batch(x);
  const long n = xb.size(-1);
  const long k = taps.size(0);
  const long c = (k - 1) / 2;
  const long p = (c + 2) / 2;  // ceil((c + 1) / 2)
  const auto xp = pad_last(xb, p, p);
  const auto w = (taps * 2.0).to(x.dtype()).view({1, 1, k});
  auto y = torch::conv_transpose1d(xp, w, {}, /*stride=*/2);
  y = y.narrow(-1, 2 * p + c, 2 * n);
  auto shape = x.sizes().vec();
  shape.back() = 2 * n;
  return y.reshape(shape);
}

torch::Tensor downsample2x(const torch::Tensor& x, const torch::Tensor& taps) {
  const auto xb = as_batch(x);
  const long k = taps.size(0);
  const long c = (k - 1) / 2;
  const auto xp = pad_last(xb, c, c);
  const auto w = taps.to(x.dtype()).view({1, 1, k});
  auto y = torch::conv1d(xp, w, {}, /*stride=*/2);
  auto shape = x.sizes().vec();
  shape.back() = y.size(-1);
  return y.reshape(shape);
}

std::vector<float> upsample2x(std::span<const float> x, const FirFilter& f) {
  if (x.empty()) throw InvalidArgument("upsample2x: empty input");
  torch::NoGradGuard guard;
  return to_vector(upsample2x(to_tensor(x), taps_tensor(f)));
}

std::vector<float> downsample2x(std::span<const float> x, const FirFilter& f) {
  if (x.empty()) throw InvalidArgument("downsample2x: empty input");
  torch::NoGradGuard guard;
  return to_vector(downsample2x(to_tensor(x), taps_tensor(f)));
}

std::vector<float> resample(std::span<const float> x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw InvalidArgument("sample rates must be positive");
  if (from_rate == to_rate || x.empty()) return {x.begin(), x.end()};
  if (to_rate == 2 * from_rate) return upsample2x(x, halfband_filter());
  if (from_rate == 2 * to_rate) return downsample2x(x, halfband_filter());

  const int g = std::gcd(from_rate, to_rate);
  const long up = to_rate / g;
  const long down = from_rate / g;
  // Prototype filter at rate up * from_rate, cut at the narrower Nyquist.
  const double cutoff = 1.0 / static_cast<double>(std::max(up, down));
  const auto proto = design_lowpass(cutoff * 0.95, cutoff * 0.1, 80.0);
  const long k = static_cast<long>(proto.taps.size());
  const long c = (k - 1) / 2;
  const long n_in = static_cast<long>(x.size());
  const long n_out = (n_in * up + down - 1) / down;
  std::vector<float> y(n_out);
  for (long m = 0; m < n_out; ++m) {
    // y[m] = sum_n x[n] * up * h[c + m*down - n*up]
    const long pos = m * down + c;
    long n_hi = std::min(n_in - 1, pos / up);
    long n_lo = std::max(0L, (pos - (k - 1) + up - 1) / up);
    double acc = 0.0;
    for (long n = n_lo; n <= n_hi; ++n) acc += x[n] * proto.taps[pos - n * up];
    y[m] = static_cast<float>(acc * static_cast<double>(up));
  }
  return y;
}

// ---------------------------------------------------------------- mel

void MelConfig::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("sample_rate must be positive");
  if (!(hop > 0 && hop <= win && win <= n_fft)) throw InvalidArgument("require 0 < hop <= win <= n_fft");
  if (fmax > sample_rate / 2.0 || fmin < 0.0 || fmin >= fmax) {
    throw InvalidArgument("mel band must satisfy 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (hop * 100 != sample_rate) throw InvalidArgument("hop must give 10 ms frames (hop * 100 == sample_rate)");
  if (n_mels <= 0 || !(log_floor > 0.0)) throw InvalidArgument("n_mels and log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelAnalyzer::MelAnalyzer(MelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const long n_freq = cfg_.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg_.fmin);
  const double hi = hz_to_mel(cfg_.fmax);
  std::vector<double> edges(cfg_.n_mels + 2);
  for (int i = 0; i < cfg_.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg_.n_mels + 1));
  }
  std::vector<float> fb(cfg_.n_mels * n_freq, 0.0f);
  for (int m = 0; m < cfg_.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (long k = 0; k < n_freq; ++k) {
      const double f = static_cast<double>(k) * cfg_.sample_rate / cfg_.n_fft;
      const double rise = (f - left) / (centre - left);
      const double fall = (right - f) / (right - centre);
      const double w = std::max(0.0, std::min(rise, fall));
      fb[m * n_freq + k] = static_cast<float>(w * norm);
    }
  }
  fbank_ = torch::tensor(fb).view({cfg_.n_mels, n_freq});
  auto win = torch::hann_window(cfg_.win, torch::TensorOptions().dtype(torch::kFloat32));
  const long left_pad = (cfg_.n_fft - cfg_.win) / 2;
  window_ = torch::nn::functional::pad(
      win, torch::nn::functional::PadFuncOptions({left_pad, cfg_.n_fft - cfg_.win - left_pad}));
}

std::vector<double> MelAnalyzer::center_frequencies() const {
  const double lo = hz_to_mel(cfg_.fmin);
  const double hi = hz_to_mel(cfg_.fmax);
  std::vector<double> c(cfg_.n_mels);
  for (int m = 0; m < cfg_.n_mels; ++m) c[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg_.n_mels + 1));
  return c;
}

torch::Tensor MelAnalyzer::operator()(const torch::Tensor& wav) const {
  if (wav.numel() == 0) throw InvalidArgument("mel_spectrogram: empty waveform");
  const bool batched = wav.dim() == 2;
  auto x = batched ? wav : wav.view({1, -1});
  const long n = x.size(-1);
  const long half = cfg_.n_fft / 2;
  namespace F = torch::nn::functional;
  auto x3 = x.unsqueeze(1);
  F::PadFuncOptions::mode_t mode = torch::kConstant;
  if (half < n) mode = torch::kReflect;
  auto padded = F::pad(x3, F::PadFuncOptions({half, half}).mode(mode)).squeeze(1);
  auto spec = torch::stft(padded, cfg_.n_fft, cfg_.hop, cfg_.n_fft, window_.to(x.dtype()),
                          /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true);
  spec = spec.narrow(-1, 0, frame_count(n, cfg_.hop));
  auto mag = torch::sqrt(torch::view_as_real(spec).pow(2).sum(-1) + 1e-9);
  auto mel = torch::matmul(fbank_.to(x.dtype()), mag);  // [B, n_mels, frames]
  auto out = torch::log(torch::clamp_min(mel, cfg_.log_floor)).transpose(1, 2);
  return batched ? out : out.squeeze(0);
}

torch::Tensor mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (w.samples.empty()) throw InvalidArgument("mel_spectrogram: empty waveform");
  MelConfig c = cfg;
  if (c.sample_rate != w.sample_rate) {
    throw InvalidArgument("mel_spectrogram: waveform rate does not match MelConfig");
  }
  torch::NoGradGuard guard;
  return MelAnalyzer(c)(to_tensor(w.samples));
}

// ---------------------------------------------------------------- pitch

PitchContour track_pitch(const Waveform& w, const PitchConfig& cfg) {
  if (!(cfg.f0_min > 0.0 && cfg.f0_min < cfg.f0_max && cfg.f0_max <= w.sample_rate / 4.0)) {
    throw InvalidArgument("pitch range must satisfy 0 < f0_min < f0_max <= sample_rate / 4");
  }
  const long win = std::lround(cfg.window_s * w.sample_rate);
  const long n = static_cast<long>(w.samples.size());
  if (n < win) throw InvalidArgument("waveform shorter than one pitch analysis window");

  const long lag_min = std::max(2L, static_cast<long>(std::floor(w.sample_rate / cfg.f0_max)));
  const long lag_max = static_cast<long>(std::ceil(w.sample_rate / cfg.f0_min));
  const long frames = frame_count(n, cfg.hop);
  auto at = [&](long i) -> double { return (i >= 0 && i < n) ? w.samples[i] : 0.0; };

  PitchContour out;
  out.hop = cfg.hop;
  out.f0.assign(frames, 0.0);
  out.voiced.assign(frames, false);

  std::vector<double> seg(win + lag_max + 2);
  std::vector<double> r(lag_max + 2, 0.0);
  for (long f = 0; f < frames; ++f) {
    const long start = f * cfg.hop - win / 2;
    for (long i = 0; i < static_cast<long>(seg.size()); ++i) seg[i] = at(start + i);

    double e0 = 0.0;
    for (long i = 0; i < win; ++i) e0 += seg[i] * seg[i];
    if (std::sqrt(e0 / win) < cfg.silence_rms) continue;

    // Sliding energy of the lagged window.
    double el = 0.0;
    for (long i = lag_min - 1; i < lag_min - 1 + win; ++i) el += seg[i] * seg[i];
    for (long lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      if (lag > lag_min - 1) {
        el += seg[lag + win - 1] * seg[lag + win - 1] - seg[lag - 1] * seg[lag - 1];
      }
      double acc = 0.0;
      for (long i = 0; i < win; ++i) acc += seg[i] * seg[i + lag];
      const double denom = std::sqrt(e0 * std::max(el, 0.0));
      r[lag] = denom > 0.0 ? acc / denom : 0.0;
    }

    double best = -1.0;
    for (long lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, r[lag]);
    if (best < cfg.threshold) continue;
    // The shortest lag whose local peak is close to the global best avoids
    // choosing sub-multiples of f0.
    long pick = -1;
    for (long lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= 0.9 * best) {
        pick = lag;
        break;
      }
    }
    if (pick < 0) continue;
    const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
    const double denom = a - 2.0 * b + c;
    const double shift = std::abs(denom) > 1e-12 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
    const double f0 = w.sample_rate / (static_cast<double>(pick) + shift);
    if (f0 < cfg.f0_min || f0 > cfg.f0_max) continue;
    out.f0[f] = f0;
    out.voiced[f] = true;
  }
  return out;
}

double pitch_correlation(const PitchContour& a, const PitchContour& b) {
  if (a.hop != b.hop) throw InvalidArgument("pitch contours use different hops");
  const std::size_t n = std::min(a.size(), b.size());
  std::vector<double> xa, xb;
  for (std::size_t i = 0; i < n; ++i) {
    if (a.voiced[i] && b.voiced[i]) {
      xa.push_back(a.f0[i]);
      xb.push_back(b.f0[i]);
    }
  }
  if (xa.size() < 2) throw UndefinedMetric("fewer than two commonly voiced frames");
  const double ma = std::accumulate(xa.begin(), xa.end(), 0.0) / xa.size();
  const double mb = std::accumulate(xb.begin(), xb.end(), 0.0) / xb.size();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    sab += (xa[i] - ma) * (xb[i] - mb);
    saa += (xa[i] - ma) * (xa[i] - ma);
    sbb += (xb[i] - mb) * (xb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) throw UndefinedMetric("pitch contour has zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace tokvc::dsp
