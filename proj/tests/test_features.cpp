// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "e2e/features.hpp"
#include "test_util.hpp"

using namespace e2e;
using e2e::testing::rand_tensor;

namespace {

FbankConfig small_config() {
  FbankConfig c;
  c.sample_rate = 8000;
  c.n_mels = 10;
  c.frame_shift_ms = 10;
  c.frame_len_ms = 25;
  return c;
}

double mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_inv(double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); }

// Independent single-frame oracle: Hamming window, pre-emphasis against the
// previous sample, naive O(N^2) DFT, triangular mel bank from the mel-scale
// formula, natural log with floor.
std::vector<double> fbank_frame_oracle(const std::vector<double>& samples, int64_t start,
                                       const FbankConfig& cfg) {
  const int frame_len = cfg.sample_rate * cfg.frame_len_ms / 1000;
  int fft_size = 1;
  while (fft_size < frame_len) fft_size *= 2;
  std::vector<double> x(static_cast<size_t>(fft_size), 0.0);
  for (int i = 0; i < frame_len; ++i) {
    const double cur = samples[static_cast<size_t>(start + i)];
    const double prev = start + i > 0 ? samples[static_cast<size_t>(start + i - 1)] : 0.0;
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_len - 1));
    x[static_cast<size_t>(i)] = (cur - cfg.preemphasis * prev) * window;
  }
  const int bins = fft_size / 2 + 1;
  std::vector<double> power(static_cast<size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    std::complex<double> acc(0.0, 0.0);
    for (int i = 0; i < fft_size; ++i) {
      const double ang = -2.0 * std::numbers::pi * b * i / fft_size;
      acc += x[static_cast<size_t>(i)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    power[static_cast<size_t>(b)] = std::norm(acc);
  }
  const double high = cfg.high_freq_hz > 0 ? cfg.high_freq_hz : cfg.sample_rate / 2.0;
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] = mel_inv(
        mel(cfg.low_freq_hz) + (mel(high) - mel(cfg.low_freq_hz)) * m / (cfg.n_mels + 1));
  std::vector<double> out(static_cast<size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    double e = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / fft_size;
      double w = 0.0;
      if (f > edges[static_cast<size_t>(m)] && f < edges[static_cast<size_t>(m) + 1])
        w = (f - edges[static_cast<size_t>(m)]) /
            (edges[static_cast<size_t>(m) + 1] - edges[static_cast<size_t>(m)]);
      else if (f >= edges[static_cast<size_t>(m) + 1] && f < edges[static_cast<size_t>(m) + 2])
        w = (edges[static_cast<size_t>(m) + 2] - f) /
            (edges[static_cast<size_t>(m) + 2] - edges[static_cast<size_t>(m) + 1]);
      e += w * power[static_cast<size_t>(b)];
    }
    out[static_cast<size_t>(m)] = std::log(std::max(e, cfg.energy_floor));
  }
  return out;
}

}  // namespace

TEST_CASE("frame count follows 1 + floor((N - frame_len) / shift)") {
  FbankConfig cfg = small_config();
  const int frame_len = 200, shift = 80;
  std::vector<double> audio(static_cast<size_t>(frame_len + 3 * shift + 5), 0.01);
  FeatureMatrix f = extract_fbank(audio, cfg);
  CHECK(f.num_frames() == 4);
  CHECK(f.dim() == cfg.n_mels);

  std::vector<double> tiny(static_cast<size_t>(frame_len - 1), 0.01);
  CHECK_THROWS_WITH_AS(extract_fbank(tiny, cfg), doctest::Contains("too short"),
                       std::invalid_argument);
}

TEST_CASE("filterbank matches a naive-DFT oracle on random audio") {
  FbankConfig cfg = small_config();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0.0, 0.2);
  std::vector<double> audio(600);
  for (auto& s : audio) s = dist(rng);
  FeatureMatrix f = extract_fbank(audio, cfg);
  REQUIRE(f.num_frames() == 6);
  const int shift = cfg.sample_rate * cfg.frame_shift_ms / 1000;
  for (int t = 0; t < f.num_frames(); ++t) {
    auto oracle = fbank_frame_oracle(audio, static_cast<int64_t>(t) * shift, cfg);
    for (int m = 0; m < cfg.n_mels; ++m)
      CHECK(f.frames.at(t, m) == doctest::Approx(oracle[static_cast<size_t>(m)]).epsilon(1e-9));
  }
}

TEST_CASE("a pure tone at a band center peaks in that band") {
  FbankConfig cfg = small_config();
  auto centers = mel_center_frequencies(cfg);
  REQUIRE(static_cast<int>(centers.size()) == cfg.n_mels);
  for (int m : {2, 4, 7}) {
    const double f0 = centers[static_cast<size_t>(m)];
    std::vector<double> audio(800);
    for (size_t i = 0; i < audio.size(); ++i)
      audio[i] = std::sin(2.0 * std::numbers::pi * f0 * static_cast<double>(i) / cfg.sample_rate);
    FeatureMatrix f = extract_fbank(audio, cfg);
    int argmax = 0;
    for (int j = 1; j < cfg.n_mels; ++j)
      if (f.frames.at(2, j) > f.frames.at(2, argmax)) argmax = j;
    CHECK(argmax == m);
  }
}

TEST_CASE("band centers are equally spaced on the mel scale") {
  auto centers = mel_center_frequencies(small_config());
  const double step = mel(centers[1]) - mel(centers[0]);
  for (size_t i = 1; i < centers.size(); ++i) {
    CHECK(centers[i] > centers[i - 1]);
    CHECK(mel(centers[i]) - mel(centers[i - 1]) == doctest::Approx(step).epsilon(1e-9));
  }
}

TEST_CASE("silence hits the energy floor everywhere") {
  FbankConfig cfg = small_config();
  std::vector<double> audio(500, 0.0);
  FeatureMatrix f = extract_fbank(audio, cfg);
  for (int t = 0; t < f.num_frames(); ++t)
    for (int m = 0; m < cfg.n_mels; ++m)
      CHECK(f.frames.at(t, m) == doctest::Approx(std::log(cfg.energy_floor)));
}

TEST_CASE("CMVN accumulation is order-independent and merge is associative") {
  std::mt19937_64 rng(9);
  std::vector<FeatureMatrix> fs;
  for (int i = 0; i < 3; ++i) {
    FeatureMatrix f;
    f.frames = rand_tensor(rng, {4 + i, 5}, 2.0);
    fs.push_back(std::move(f));
  }
  CMVNStats fwd, rev;
  for (const auto& f : fs) fwd.accumulate(f);
  for (auto it = fs.rbegin(); it != fs.rend(); ++it) rev.accumulate(*it);
  for (size_t j = 0; j < 5; ++j) {
    CHECK(fwd.mean()[j] == doctest::Approx(rev.mean()[j]).epsilon(1e-12));
    CHECK(fwd.variance()[j] == doctest::Approx(rev.variance()[j]).epsilon(1e-12));
  }
  CMVNStats a, b, c, ab_c, a_bc;
  a.accumulate(fs[0]);
  b.accumulate(fs[1]);
  c.accumulate(fs[2]);
  ab_c = a;
  ab_c.merge(b);
  ab_c.merge(c);
  CMVNStats bc = b;
  bc.merge(c);
  a_bc = a;
  a_bc.merge(bc);
  for (size_t j = 0; j < 5; ++j)
    CHECK(ab_c.mean()[j] == doctest::Approx(a_bc.mean()[j]).epsilon(1e-12));
  CHECK(ab_c.count == a_bc.count);
}

TEST_CASE("applying CMVN yields zero mean and unit variance over the corpus") {
  std::mt19937_64 rng(21);
  FeatureMatrix f;
  f.frames = rand_tensor(rng, {50, 4}, 3.0);
  CMVNStats stats;
  stats.accumulate(f);
  FeatureMatrix norm = apply_cmvn(f, stats);
  for (int j = 0; j < 4; ++j) {
    double mu = 0.0, var = 0.0;
    for (int t = 0; t < 50; ++t) mu += norm.frames.at(t, j);
    mu /= 50;
    for (int t = 0; t < 50; ++t)
      var += (norm.frames.at(t, j) - mu) * (norm.frames.at(t, j) - mu);
    var /= 50;
    CHECK(std::abs(mu) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("CMVN stats file round trip") {
  std::mt19937_64 rng(33);
  FeatureMatrix f;
  f.frames = rand_tensor(rng, {7, 3});
  CMVNStats stats;
  stats.accumulate(f);
  const auto path = std::filesystem::temp_directory_path() / "e2e_cmvn_test.txt";
  stats.save(path.string());
  CMVNStats back = CMVNStats::load(path.string());
  CHECK(back.count == stats.count);
  for (size_t j = 0; j < 3; ++j) CHECK(back.sum[j] == doctest::Approx(stats.sum[j]));
  std::filesystem::remove(path);
}

TEST_CASE("feature container round trip with f32 storage and FBK1 magic") {
  std::mt19937_64 rng(41);
  FeatureMatrix f;
  f.frames = rand_tensor(rng, {6, 5});
  const auto path = std::filesystem::temp_directory_path() / "e2e_feat_test.fbk";
  save_features(path.string(), f);

  std::ifstream raw(path, std::ios::binary);
  char magic[4];
  raw.read(magic, 4);
  CHECK(std::string(magic, 4) == "FBK1");

  FeatureMatrix back = load_features(path.string(), "x");
  REQUIRE(back.num_frames() == 6);
  REQUIRE(back.dim() == 5);
  for (int64_t i = 0; i < f.frames.numel(); ++i)
    CHECK(back.frames[i] == static_cast<double>(static_cast<float>(f.frames[i])));
  std::filesystem::remove(path);
}

TEST_CASE("wav write/read round trip at 16-bit precision") {
  std::vector<double> samples(300);
  for (size_t i = 0; i < samples.size(); ++i)
    samples[i] = 0.5 * std::sin(0.02 * static_cast<double>(i));
  const auto path = std::filesystem::temp_directory_path() / "e2e_wav_test.wav";
  write_wav(path.string(), samples, 8000);
  WavData back = read_wav(path.string());
  CHECK(back.sample_rate == 8000);
  REQUIRE(back.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    CHECK(back.samples[i] == doctest::Approx(samples[i]).epsilon(1e-3));
  std::filesystem::remove(path);
}
