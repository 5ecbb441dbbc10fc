// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Differentiable kernel set: enough layer kinds to realize the residual
// conv + LSTM CTC stack and the pyramidal BLSTM attention encoder, with
// reverse-mode gradients. Sequences are [T, D] row-major; batch size is
// one utterance.

#ifndef E2E_LAYERS_HPP_
#define E2E_LAYERS_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "e2e/tensor.hpp"

namespace e2e {

enum class LayerKind { Linear, Lstm, Blstm, LayerNorm, Conv2d, Residual, TimePool };

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  // Linear
  int in_dim = 0;
  int out_dim = 0;
  // Lstm / Blstm: units per direction
  int hidden = 0;
  // Conv2d / Residual: input rows are [T, channels * freq]
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride_t = 1;
  int stride_f = 1;
  // TimePool
  int pool_factor = 2;
  bool pool_concat = true;  // concat adjacent frames (doubles D) vs subsample

  static LayerSpec linear(int in, int out);
  static LayerSpec lstm(int hidden);
  static LayerSpec blstm(int hidden);
  static LayerSpec layer_norm();
  static LayerSpec conv2d(int in_ch, int out_ch, int kernel = 3, int stride_t = 1,
                          int stride_f = 1);
  static LayerSpec residual(int channels, int kernel = 3);
  static LayerSpec time_pool(int factor = 2, bool concat = true);

  std::string to_string() const;
  static LayerSpec from_string(const std::string& s);
};

struct NamedParam {
  std::string name;
  Tensor* value;
  Tensor* grad;
  int fan_in;  // for uniform-fanin init; 0 for biases/gains
};

struct InitPolicy {
  enum Kind { Gaussian, UniformFanIn } kind = Gaussian;
  double variance = 0.1;
  static InitPolicy gaussian(double variance) { return {Gaussian, variance}; }
  static InitPolicy uniform_fanin() { return {UniformFanIn, 0.0}; }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  // Accumulates parameter gradients, returns gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual int out_dim(int in_dim) const = 0;
  virtual int out_len(int in_len) const { return in_len; }
  virtual void collect_params(const std::string& prefix, std::vector<NamedParam>* out) = 0;
  const LayerSpec& spec() const { return spec_; }

 protected:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  LayerSpec spec_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, int in_dim);

/// A feed-forward stack of layers applied to one [T, D] sequence.
class Network {
 public:
  Network(std::vector<LayerSpec> specs, int input_dim);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);

  std::vector<NamedParam> params();
  void zero_grad();
  int64_t num_params();
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int output_len(int in_len) const;
  const std::vector<LayerSpec>& specs() const { return specs_; }

  void init_weights(uint64_t seed, const InitPolicy& policy);

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::unique_ptr<Layer>> layers_;
  int input_dim_ = 0;
  int output_dim_ = 0;
  bool forward_ran_train_ = false;
};

/// Parameter count from shapes alone, without building the layers.
int64_t count_params(const std::vector<LayerSpec>& specs, int input_dim);

void init_params(std::vector<NamedParam>& params, uint64_t seed, const InitPolicy& policy);

}  // namespace e2e

#endif  // E2E_LAYERS_HPP_
