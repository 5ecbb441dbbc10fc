// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Model checkpoint container: magic "E2EM", u32 version, u32 header length,
// UTF-8 header text, then every parameter tensor as little-endian f32 in
// declaration order.

#ifndef E2E_CHECKPOINT_HPP_
#define E2E_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "e2e/layers.hpp"

namespace e2e {

struct CheckpointHeader {
  std::string family;  // "ctc" or "attention"
  int input_dim = 0;
  std::vector<LayerSpec> layers;  // CTC stack, or the attention encoder
  uint64_t vocab_fingerprint = 0;
  std::map<std::string, std::string> extra;  // decoder dims etc.

  std::string serialize() const;
  static CheckpointHeader parse(const std::string& text);
  int extra_int(const std::string& key) const;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedParam>& params);

CheckpointHeader read_checkpoint_header(const std::string& path);

/// Loads parameter values into `params`; shapes must already match the
/// stored layout. Returns the header.
CheckpointHeader load_checkpoint(const std::string& path, std::vector<NamedParam>& params);

}  // namespace e2e

#endif  // E2E_CHECKPOINT_HPP_
