#pragma once

// Synthetic speech-like corpus: harmonic complexes whose "speakers" differ in
// mean f0 and spectral tilt, with formant-like envelopes that change every
// 100-250 ms to give the content tokens something to track.

#include <cstdint>
#include <string>
#include <vector>

#include "tokvc/dsp.hpp"

namespace tokvc {

struct ToySpeaker {
  double f0_hz = 120.0;
  /// Harmonic amplitude slope in dB per octave.
  double tilt_db_per_octave = -6.0;
};

struct ToyCorpusConfig {
  long utterances = 64;
  long speakers = 8;
  double min_s = 2.0;
  double max_s = 4.0;
  int sample_rate = dsp::kDefaultSampleRate;
  std::uint64_t seed = 7;
};

struct ToyUtterance {
  std::string id;
  long speaker = 0;
  dsp::Waveform wav;
};

/// Speakers spread over f0 in [90, 240] Hz and tilt in [-12, -3] dB/octave.
std::vector<ToySpeaker> toy_speakers(long count, std::uint64_t seed);

/// One utterance of whole 10 ms frames, peak-normalised to 0.5.
dsp::Waveform toy_utterance(const ToySpeaker& speaker, double duration_s, std::uint64_t seed,
                            int sample_rate = dsp::kDefaultSampleRate);

/// Utterances are assigned to speakers round-robin.
std::vector<ToyUtterance> make_toy_corpus(const ToyCorpusConfig& cfg);

/// Least-squares slope of the long-term log power spectrum against log2
/// frequency over [fmin, fmax] Hz, in dB per octave.
double spectral_tilt(const dsp::Waveform& w, double fmin = 200.0, double fmax = 8000.0);

}  // namespace tokvc
