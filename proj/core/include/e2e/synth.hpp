// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Synthetic corpus generator. Each content unit gets a fixed random feature
// template; utterances are concatenated templates plus additive noise, so
// both model families can learn the mapping at desk scale. Everything is
// deterministic given the seed.

#ifndef E2E_SYNTH_HPP_
#define E2E_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "e2e/pipeline.hpp"
#include "e2e/tensor.hpp"
#include "e2e/units.hpp"

namespace e2e {

struct SynthConfig {
  uint64_t seed = 1;
  int n_utts = 0;
  int min_len = 3;  // units per utterance
  int max_len = 8;
  int feat_dim = 8;
  int tmpl_min_frames = 4;
  int tmpl_max_frames = 8;
  double noise_std = 0.1;
  // probability of following a fixed per-unit successor chain instead of
  // drawing uniformly; > 0 gives transcripts n-gram structure an external
  // LM can exploit
  double markov_peak = 0.0;
  std::string out_dir;
  std::string utt_prefix = "utt";
};

/// Per-content-unit prototype feature templates [L_u, feat_dim], L_u drawn
/// from [tmpl_min_frames, tmpl_max_frames]. Exposed so tests can check
/// nearest-template recovery on noise-free output.
std::vector<Tensor> make_unit_templates(uint64_t seed, int n_units, const SynthConfig& cfg);

/// Writes `n_utts` feature files under out_dir and returns the manifest.
/// Transcripts are the unit strings joined by single spaces.
Manifest synth_corpus(const SynthConfig& cfg, const UnitVocabulary& vocab);

}  // namespace e2e

#endif  // E2E_SYNTH_HPP_
