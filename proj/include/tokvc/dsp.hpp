#pragma once

// Signal-processing primitives: WAV I/O, resampling, low-pass FIR design,
// anti-aliased 2x resampling, log-mel analysis and pitch tracking.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace tokvc::dsp {

inline constexpr int kDefaultSampleRate = 24000;

/// Mono audio with samples nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  [[nodiscard]] double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads a mono 16-bit PCM or 32-bit float WAV file. When `target_rate` is
/// positive and differs from the file rate the audio is resampled.
Waveform read_wav(const std::filesystem::path& path, int target_rate = 0);

/// Duration in seconds from the WAV header alone.
double wav_duration_s(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kPcm16);

/// Linear-phase low-pass FIR (Kaiser-windowed sinc). Frequencies are
/// fractions of Nyquist. The passband ends at cutoff - transition/2 and the
/// stopband begins at cutoff + transition/2.
struct FirFilter {
  std::vector<double> taps;
  double cutoff_norm = 0.5;
  double transition_norm = 0.1;
  double atten_db = 80.0;
};

FirFilter design_lowpass(double cutoff_norm, double transition_norm = 0.1,
                         double atten_db = 80.0);

/// Filter used by the 2x resamplers: half-band cutoff, passes the original band.
FirFilter halfband_filter(double transition_norm = 0.1, double atten_db = 80.0);

std::vector<float> upsample2x(std::span<const float> x, const FirFilter& f);
std::vector<float> downsample2x(std::span<const float> x, const FirFilter& f);

/// Batched forms over the last axis of a [..., T] tensor; `taps` is a 1-D
/// float tensor of the filter taps. Autograd flows through both.
torch::Tensor upsample2x(const torch::Tensor& x, const torch::Tensor& taps);
torch::Tensor downsample2x(const torch::Tensor& x, const torch::Tensor& taps);

/// Rational-ratio resampler (polyphase Kaiser filter). Exact 2x ratios use the
/// half-band resamplers above.
std::vector<float> resample(std::span<const float> x, int from_rate, int to_rate);

struct MelConfig {
  int sample_rate = kDefaultSampleRate;
  int n_fft = 1024;
  int hop = 240;
  int win = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 12000.0;
  double log_floor = 1e-5;

  /// Throws InvalidArgument unless hop <= win <= n_fft, fmax <= Nyquist and
  /// hop * 100 == sample_rate.
  void validate() const;
};

/// Number of analysis frames under the centred-frame convention: frame f is
/// centred on sample f * hop, giving ceil(num_samples / hop) frames.
inline long frame_count(long num_samples, int hop) {
  return (num_samples + hop - 1) / hop;
}

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Log-mel analyser with a cached area-normalised triangular filterbank.
class MelAnalyzer {
 public:
  explicit MelAnalyzer(MelConfig cfg = {});

  /// [N] -> [frames, n_mels] or [B, N] -> [B, frames, n_mels]. Differentiable.
  [[nodiscard]] torch::Tensor operator()(const torch::Tensor& wav) const;

  [[nodiscard]] const MelConfig& config() const { return cfg_; }
  /// [n_mels, n_fft/2 + 1]
  [[nodiscard]] const torch::Tensor& filterbank() const { return fbank_; }
  /// Peak frequency (Hz) of every triangular filter.
  [[nodiscard]] std::vector<double> center_frequencies() const;

 private:
  MelConfig cfg_;
  torch::Tensor fbank_;
  torch::Tensor window_;
};

/// [frames, n_mels] log-mel matrix of a waveform.
torch::Tensor mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

struct PitchConfig {
  double f0_min = 50.0;
  double f0_max = 600.0;
  double window_s = 0.025;
  int hop = 240;
  /// Minimum normalised autocorrelation peak for a frame to count as voiced.
  double threshold = 0.3;
  /// Frames with RMS below this are unvoiced regardless of periodicity.
  double silence_rms = 1e-4;
};

struct PitchContour {
  std::vector<double> f0;  // Hz, 0 when unvoiced
  std::vector<bool> voiced;
  int hop = 240;

  [[nodiscard]] std::size_t size() const { return f0.size(); }
};

/// Normalised-autocorrelation pitch tracker with parabolic peak refinement;
/// one estimate per hop, frames centred as in frame_count().
PitchContour track_pitch(const Waveform& w, const PitchConfig& cfg = {});

/// Pearson correlation of f0 over frames voiced in both contours.
double pitch_correlation(const PitchContour& a, const PitchContour& b);

}  // namespace tokvc::dsp
