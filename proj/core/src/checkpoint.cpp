// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace e2e {

namespace {

constexpr char kMagic[4] = {'E', '2', 'E', 'M'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

std::string CheckpointHeader::serialize() const {
  std::ostringstream os;
  os << "family=" << family << "\n";
  os << "input_dim=" << input_dim << "\n";
  os << "vocab_fingerprint=" << vocab_fingerprint << "\n";
  for (const auto& [k, v] : extra) os << "extra " << k << "=" << v << "\n";
  os << "layers=" << layers.size() << "\n";
  for (const auto& l : layers) os << "layer " << l.to_string() << "\n";
  return os.str();
}

CheckpointHeader CheckpointHeader::parse(const std::string& text) {
  CheckpointHeader h;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("layer ", 0) == 0) {
      h.layers.push_back(LayerSpec::from_string(line.substr(6)));
    } else if (line.rfind("extra ", 0) == 0) {
      auto eq = line.find('=', 6);
      if (eq == std::string::npos) throw std::runtime_error("bad checkpoint header: " + line);
      h.extra[line.substr(6, eq - 6)] = line.substr(eq + 1);
    } else {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw std::runtime_error("bad checkpoint header: " + line);
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "family")
        h.family = val;
      else if (key == "input_dim")
        h.input_dim = std::stoi(val);
      else if (key == "vocab_fingerprint")
        h.vocab_fingerprint = std::stoull(val);
      else if (key == "layers")
        ;  // count is implied by the layer lines
      else
        throw std::runtime_error("unknown checkpoint header key: " + key);
    }
  }
  return h;
}

int CheckpointHeader::extra_int(const std::string& key) const {
  auto it = extra.find(key);
  if (it == extra.end()) throw std::runtime_error("checkpoint header missing " + key);
  return std::stoi(it->second);
}

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedParam>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string h = header.serialize();
  write_u32(os, static_cast<uint32_t>(h.size()));
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : params)
    for (int64_t i = 0; i < p.value->numel(); ++i)
      write_f32(os, static_cast<float>((*p.value)[i]));
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

static CheckpointHeader read_header_stream(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const uint32_t hlen = read_u32(is);
  std::string h(hlen, '\0');
  is.read(h.data(), hlen);
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path);
  return CheckpointHeader::parse(h);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_header_stream(is, path);
}

CheckpointHeader load_checkpoint(const std::string& path, std::vector<NamedParam>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  CheckpointHeader h = read_header_stream(is, path);
  for (auto& p : params)
    for (int64_t i = 0; i < p.value->numel(); ++i)
      (*p.value)[i] = static_cast<double>(read_f32(is));
  return h;
}

}  // namespace e2e
