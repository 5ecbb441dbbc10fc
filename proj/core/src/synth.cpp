// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "e2e/features.hpp"

namespace e2e {

namespace {

// Portable approximate Gaussian (Irwin-Hall, 12 uniforms). We avoid
// std::normal_distribution here because its draw sequence is
// implementation-defined and the corpus must be byte-identical per seed.
double gauss(std::mt19937_64& rng) {
  double s = 0.0;
  for (int i = 0; i < 12; ++i)
    s += static_cast<double>(rng()) / static_cast<double>(std::mt19937_64::max());
  return s - 6.0;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

}  // namespace

std::vector<Tensor> make_unit_templates(uint64_t seed, int n_units, const SynthConfig& cfg) {
  if (cfg.tmpl_min_frames < 1 || cfg.tmpl_max_frames < cfg.tmpl_min_frames)
    throw std::invalid_argument("bad template frame range");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  std::vector<Tensor> templates;
  templates.reserve(static_cast<size_t>(n_units));
  for (int u = 0; u < n_units; ++u) {
    const int len = uniform_int(rng, cfg.tmpl_min_frames, cfg.tmpl_max_frames);
    Tensor t({len, cfg.feat_dim});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
    templates.push_back(std::move(t));
  }
  return templates;
}

Manifest synth_corpus(const SynthConfig& cfg, const UnitVocabulary& vocab) {
  const int n_units = vocab.content_size();
  if (n_units < 1) throw std::invalid_argument("vocabulary has no content units");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    throw std::invalid_argument("bad utterance length range");

  Manifest manifest;
  if (cfg.n_utts == 0) return manifest;
  std::filesystem::create_directories(cfg.out_dir);

  if (cfg.markov_peak < 0.0 || cfg.markov_peak >= 1.0)
    throw std::invalid_argument("markov_peak must lie in [0, 1)");

  const std::vector<Tensor> templates = make_unit_templates(cfg.seed, n_units, cfg);
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 2);

  // fixed successor chain (a random derangement-ish permutation); drawn from
  // its own stream so peak = 0 corpora stay byte-identical to older ones
  std::vector<int> succ(static_cast<size_t>(n_units));
  if (cfg.markov_peak > 0.0) {
    std::mt19937_64 chain_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 3);
    for (int u = 0; u < n_units; ++u) succ[static_cast<size_t>(u)] = u;
    for (size_t i = succ.size(); i > 1; --i) std::swap(succ[i - 1], succ[chain_rng() % i]);
    // no self-loops: a fixed point would synthesize long runs of one template
    for (size_t u = 0; u < succ.size(); ++u)
      if (succ[u] == static_cast<int>(u))
        std::swap(succ[u], succ[(u + 1) % succ.size()]);
  }

  // content ids skip the special symbols wherever they sit
  std::vector<int> content_ids;
  for (int id = 0; id < vocab.size(); ++id)
    if (!vocab.is_special(id)) content_ids.push_back(id);

  for (int n = 0; n < cfg.n_utts; ++n) {
    const int len = uniform_int(rng, cfg.min_len, cfg.max_len);
    std::vector<int> picks(static_cast<size_t>(len));
    int total_frames = 0;
    for (int i = 0; i < len; ++i) {
      int k;
      if (i > 0 && cfg.markov_peak > 0.0 &&
          static_cast<double>(rng()) / static_cast<double>(std::mt19937_64::max()) <
              cfg.markov_peak)
        k = succ[static_cast<size_t>(picks[static_cast<size_t>(i) - 1])];
      else
        k = uniform_int(rng, 0, n_units - 1);
      picks[static_cast<size_t>(i)] = k;
      total_frames += templates[static_cast<size_t>(k)].dim(0);
    }
    Tensor frames({total_frames, cfg.feat_dim});
    std::string transcript;
    int row = 0;
    for (int i = 0; i < len; ++i) {
      const Tensor& t = templates[static_cast<size_t>(picks[static_cast<size_t>(i)])];
      for (int r = 0; r < t.dim(0); ++r, ++row)
        for (int c = 0; c < cfg.feat_dim; ++c)
          frames.at(row, c) = t.at(r, c) + cfg.noise_std * gauss(rng);
      if (i) transcript += ' ';
      transcript += vocab.unit(content_ids[static_cast<size_t>(picks[static_cast<size_t>(i)])]);
    }

    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", cfg.utt_prefix.c_str(), n);
    ManifestRecord rec;
    rec.utt_id = idbuf;
    rec.path = (std::filesystem::path(cfg.out_dir) / (rec.utt_id + ".fbk")).string();
    rec.transcript = transcript;

    FeatureMatrix fm;
    fm.frames = std::move(frames);
    fm.source_id = rec.utt_id;
    save_features(rec.path, fm);
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

}  // namespace e2e
