#pragma once

// Small shared setups for the trainer and inference tests.

#include <vector>

#include "tokvc/config.hpp"
#include "tokvc/data.hpp"
#include "tokvc/features.hpp"
#include "tokvc/toy.hpp"

namespace tokvc::fixtures {

// A few thousand parameters per network: enough structure to exercise every
// code path in well under a second per step.
inline Config tiny_config() {
  auto c = Config::desk_scale();
  c.model.tokenizer.codebook_size = 8;
  c.model.tokenizer.content_dim = 16;
  c.model.tokenizer.prompt_dim = 12;
  c.model.frontend.attn_dim = 16;
  c.model.frontend.n_blocks = 1;
  c.model.frontend.conv_kernel = 5;
  c.model.frontend.prenet_dims = {8, 8, 8, 8};
  c.model.generator.base_channels = 16;
  c.model.generator.amp_kernel_sizes = {3};
  c.train.disc.mpd_channels = {4, 8};
  c.train.disc.msd_channels = {16, 16, 16, 16, 16, 16, 16};
  c.train.data.segment_frames = 8;
  c.train.data.max_batch_s = 4.5;
  c.train.steps = 4;
  c.train.checkpoint_every = 2;
  c.train.loss.aux_warmup_steps = 2;
  c.model.sync();
  return c;
}

struct TinySetup {
  Config cfg;
  std::vector<ToyUtterance> corpus;
  SyntheticTokenizer tokenizer;
  std::vector<Utterance> utterances;
};

inline TinySetup tiny_setup(long utterances = 4) {
  TinySetup s;
  s.cfg = tiny_config();
  ToyCorpusConfig cc;
  cc.utterances = utterances;
  cc.speakers = 2;
  cc.min_s = 2.0;
  cc.max_s = 2.2;
  s.corpus = make_toy_corpus(cc);
  std::vector<dsp::Waveform> waves;
  for (const auto& u : s.corpus) waves.push_back(u.wav);
  s.tokenizer = SyntheticTokenizer::fit(waves, s.cfg.model.tokenizer);
  for (const auto& u : s.corpus) s.utterances.push_back(make_utterance(u.id, u.wav, s.tokenizer));
  return s;
}

}  // namespace tokvc::fixtures
