// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Log-mel filterbank extraction and global mean/variance normalization.

#ifndef E2E_FEATURES_HPP_
#define E2E_FEATURES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "e2e/tensor.hpp"

namespace e2e {

struct FeatureMatrix {
  Tensor frames;  // [T, D]
  int frame_shift_ms = 10;
  std::string source_id;

  int num_frames() const { return frames.dim(0); }
  int dim() const { return frames.dim(1); }
};

struct FbankConfig {
  int sample_rate = 16000;
  int n_mels = 40;
  int frame_shift_ms = 10;
  int frame_len_ms = 25;
  double preemphasis = 0.97;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // 0 = Nyquist
  double energy_floor = 1e-10;
  int fft_size = 0;  // 0 = next power of two >= frame length
};

/// Natural-log mel filterbank energies of mono PCM samples (floats in
/// [-1, 1] or raw 16-bit values; only relative energy matters).
/// T = 1 + floor((N - frame_len) / shift); throws if under one frame.
FeatureMatrix extract_fbank(const std::vector<double>& samples, const FbankConfig& config,
                            const std::string& source_id = "");

/// Center frequencies (Hz) of the mel bands for a config; test hook.
std::vector<double> mel_center_frequencies(const FbankConfig& config);

struct CMVNStats {
  std::vector<double> sum, sum_sq;
  int64_t count = 0;

  void accumulate(const FeatureMatrix& feats);
  void merge(const CMVNStats& other);  // associative partial-stats merge
  std::vector<double> mean() const;
  std::vector<double> variance() const;  // floored at 1e-10

  void save(const std::string& path) const;
  static CMVNStats load(const std::string& path);
};

FeatureMatrix apply_cmvn(const FeatureMatrix& feats, const CMVNStats& stats);

// Feature container: magic "FBK1", u32 T, u32 D, T*D f32 row-major,
// little endian.
void save_features(const std::string& path, const FeatureMatrix& feats);
FeatureMatrix load_features(const std::string& path, const std::string& source_id = "");

// 16-bit PCM mono WAV reader; returns samples scaled to [-1, 1].
struct WavData {
  std::vector<double> samples;
  int sample_rate = 0;
};
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate);

}  // namespace e2e

#endif  // E2E_FEATURES_HPP_
