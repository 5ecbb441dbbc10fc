// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/features.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace e2e {

namespace {

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// iterative radix-2 FFT, in place
void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

struct MelBank {
  int fft_size = 0;
  std::vector<std::vector<double>> weights;  // [n_mels][fft_size/2 + 1]
  std::vector<double> centers_hz;
};

MelBank build_mel_bank(const FbankConfig& cfg, int fft_size) {
  MelBank bank;
  bank.fft_size = fft_size;
  const double high = cfg.high_freq_hz > 0.0 ? cfg.high_freq_hz : cfg.sample_rate / 2.0;
  const double mel_lo = hz_to_mel(cfg.low_freq_hz);
  const double mel_hi = hz_to_mel(high);
  const int bins = fft_size / 2 + 1;
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
  bank.weights.assign(static_cast<size_t>(cfg.n_mels),
                      std::vector<double>(static_cast<size_t>(bins), 0.0));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double mid = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    bank.centers_hz.push_back(mid);
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      bank.weights[static_cast<size_t>(m)][static_cast<size_t>(b)] = w;
    }
  }
  return bank;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FbankConfig& config) {
  const int frame_len = config.sample_rate * config.frame_len_ms / 1000;
  const int fft_size = config.fft_size > 0 ? config.fft_size : next_pow2(frame_len);
  return build_mel_bank(config, fft_size).centers_hz;
}

FeatureMatrix extract_fbank(const std::vector<double>& samples, const FbankConfig& config,
                            const std::string& source_id) {
  const int frame_len = config.sample_rate * config.frame_len_ms / 1000;
  const int shift = config.sample_rate * config.frame_shift_ms / 1000;
  const int64_t n = static_cast<int64_t>(samples.size());
  if (n < frame_len)
    throw std::invalid_argument("audio too short: " + std::to_string(n) + " samples, need " +
                                std::to_string(frame_len));
  const int fft_size = config.fft_size > 0 ? config.fft_size : next_pow2(frame_len);
  if (fft_size < frame_len) throw std::invalid_argument("fft_size smaller than frame length");
  const MelBank bank = build_mel_bank(config, fft_size);
  const int T = 1 + static_cast<int>((n - frame_len) / shift);

  std::vector<double> window(static_cast<size_t>(frame_len));
  for (int i = 0; i < frame_len; ++i)
    window[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame_len - 1));

  FeatureMatrix out;
  out.frames = Tensor({T, config.n_mels});
  out.frame_shift_ms = config.frame_shift_ms;
  out.source_id = source_id;
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  const int bins = fft_size / 2 + 1;
  for (int t = 0; t < T; ++t) {
    const int64_t start = static_cast<int64_t>(t) * shift;
    for (int i = 0; i < frame_len; ++i) {
      const double cur = samples[static_cast<size_t>(start + i)];
      const double prev = (start + i > 0) ? samples[static_cast<size_t>(start + i - 1)] : 0.0;
      buf[static_cast<size_t>(i)] = (cur - config.preemphasis * prev) *
                                    window[static_cast<size_t>(i)];
    }
    for (int i = frame_len; i < fft_size; ++i) buf[static_cast<size_t>(i)] = 0.0;
    fft(buf);
    for (int m = 0; m < config.n_mels; ++m) {
      double energy = 0.0;
      const auto& w = bank.weights[static_cast<size_t>(m)];
      for (int b = 0; b < bins; ++b) {
        const double re = buf[static_cast<size_t>(b)].real();
        const double im = buf[static_cast<size_t>(b)].imag();
        energy += w[static_cast<size_t>(b)] * (re * re + im * im);
      }
      out.frames.at(t, m) = std::log(std::max(energy, config.energy_floor));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CMVN

void CMVNStats::accumulate(const FeatureMatrix& feats) {
  const int D = feats.dim();
  if (sum.empty()) {
    sum.assign(static_cast<size_t>(D), 0.0);
    sum_sq.assign(static_cast<size_t>(D), 0.0);
  }
  if (static_cast<int>(sum.size()) != D)
    throw std::invalid_argument("CMVN dimension mismatch: stats " +
                                std::to_string(sum.size()) + ", features " + std::to_string(D));
  for (int t = 0; t < feats.num_frames(); ++t)
    for (int j = 0; j < D; ++j) {
      const double x = feats.frames.at(t, j);
      sum[static_cast<size_t>(j)] += x;
      sum_sq[static_cast<size_t>(j)] += x * x;
    }
  count += feats.num_frames();
}

void CMVNStats::merge(const CMVNStats& other) {
  if (other.count == 0) return;
  if (sum.empty()) {
    *this = other;
    return;
  }
  if (sum.size() != other.sum.size()) throw std::invalid_argument("CMVN dimension mismatch");
  for (size_t j = 0; j < sum.size(); ++j) {
    sum[j] += other.sum[j];
    sum_sq[j] += other.sum_sq[j];
  }
  count += other.count;
}

std::vector<double> CMVNStats::mean() const {
  if (count == 0) throw std::invalid_argument("CMVN stats have zero frame count");
  std::vector<double> m(sum.size());
  for (size_t j = 0; j < sum.size(); ++j) m[j] = sum[j] / static_cast<double>(count);
  return m;
}

std::vector<double> CMVNStats::variance() const {
  const auto m = mean();
  std::vector<double> v(sum.size());
  for (size_t j = 0; j < sum.size(); ++j) {
    v[j] = std::max(sum_sq[j] / static_cast<double>(count) - m[j] * m[j], 1e-10);
  }
  return v;
}

FeatureMatrix apply_cmvn(const FeatureMatrix& feats, const CMVNStats& stats) {
  const auto m = stats.mean();
  const auto v = stats.variance();
  if (static_cast<int>(m.size()) != feats.dim())
    throw std::invalid_argument("CMVN dimension mismatch");
  FeatureMatrix out = feats;
  for (int t = 0; t < feats.num_frames(); ++t)
    for (int j = 0; j < feats.dim(); ++j)
      out.frames.at(t, j) =
          (feats.frames.at(t, j) - m[static_cast<size_t>(j)]) /
          std::sqrt(v[static_cast<size_t>(j)]);
  return out;
}

void CMVNStats::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write CMVN stats: " + path);
  os.precision(17);
  os << "CMVN " << sum.size() << " " << count << "\n";
  for (double x : sum) os << x << " ";
  os << "\n";
  for (double x : sum_sq) os << x << " ";
  os << "\n";
}

CMVNStats CMVNStats::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open CMVN stats: " + path);
  std::string tag;
  size_t dim = 0;
  CMVNStats s;
  is >> tag >> dim >> s.count;
  if (tag != "CMVN") throw std::runtime_error("not a CMVN stats file: " + path);
  s.sum.resize(dim);
  s.sum_sq.resize(dim);
  for (auto& x : s.sum) is >> x;
  for (auto& x : s.sum_sq) is >> x;
  if (!is) throw std::runtime_error("truncated CMVN stats: " + path);
  return s;
}

// ---------------------------------------------------------------------------
// Feature container

void save_features(const std::string& path, const FeatureMatrix& feats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write features: " + path);
  os.write("FBK1", 4);
  const uint32_t t = static_cast<uint32_t>(feats.num_frames());
  const uint32_t d = static_cast<uint32_t>(feats.dim());
  os.write(reinterpret_cast<const char*>(&t), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  for (int64_t i = 0; i < feats.frames.numel(); ++i) {
    const float f = static_cast<float>(feats.frames[i]);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw std::runtime_error("feature write failed: " + path);
}

FeatureMatrix load_features(const std::string& path, const std::string& source_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open features: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FBK1", 4) != 0)
    throw std::runtime_error("not a feature file: " + path);
  uint32_t t = 0, d = 0;
  is.read(reinterpret_cast<char*>(&t), 4);
  is.read(reinterpret_cast<char*>(&d), 4);
  FeatureMatrix out;
  out.frames = Tensor({static_cast<int>(t), static_cast<int>(d)});
  out.source_id = source_id;
  for (int64_t i = 0; i < out.frames.numel(); ++i) {
    float f;
    is.read(reinterpret_cast<char*>(&f), 4);
    out.frames[i] = static_cast<double>(f);
  }
  if (!is) throw std::runtime_error("truncated feature file: " + path);
  return out;
}

// ---------------------------------------------------------------------------
// WAV

WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open wav: " + path);
  auto read_u32 = [&is]() {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto read_u16 = [&is]() {
    uint16_t v;
    is.read(reinterpret_cast<char*>(&v), 2);
    return v;
  };
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("not a RIFF file: " + path);
  read_u32();  // riff size
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("not a WAVE file: " + path);

  WavData out;
  uint16_t channels = 0, bits = 0;
  bool got_fmt = false;
  while (is.read(tag, 4)) {
    const uint32_t size = read_u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const uint16_t format = read_u16();
      channels = read_u16();
      out.sample_rate = static_cast<int>(read_u32());
      read_u32();  // byte rate
      read_u16();  // block align
      bits = read_u16();
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      if (format != 1) throw std::runtime_error("wav is not PCM: " + path);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw std::runtime_error("wav data before fmt chunk: " + path);
      if (channels != 1) throw std::runtime_error("wav is not mono: " + path);
      if (bits != 16) throw std::runtime_error("wav is not 16-bit: " + path);
      const size_t n = size / 2;
      out.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t s;
        is.read(reinterpret_cast<char*>(&s), 2);
        out.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return out;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw std::runtime_error("wav has no data chunk: " + path);
}

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write wav: " + path);
  auto w32 = [&os](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto w16 = [&os](uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  w32(36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w32(16);
  w16(1);  // PCM
  w16(1);  // mono
  w32(static_cast<uint32_t>(sample_rate));
  w32(static_cast<uint32_t>(sample_rate * 2));
  w16(2);
  w16(16);
  os.write("data", 4);
  w32(data_size);
  for (double s : samples) {
    const double clamped = std::max(-1.0, std::min(1.0, s));
    const int16_t v = static_cast<int16_t>(std::lrint(clamped * 32767.0));
    os.write(reinterpret_cast<const char*>(&v), 2);
  }
}

}  // namespace e2e
