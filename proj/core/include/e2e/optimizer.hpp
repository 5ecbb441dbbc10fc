// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#ifndef E2E_OPTIMIZER_HPP_
#define E2E_OPTIMIZER_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "e2e/layers.hpp"
#include "e2e/tensor.hpp"

namespace e2e {

/// Exponential interpolation from lr_start to lr_end over total_steps,
/// clamped at lr_end afterwards.
struct LrSchedule {
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  int64_t total_steps = 1;
  double at(int64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // L2, added to gradients
  double clip_norm = 0.0;      // global-norm clip; 0 disables
  LrSchedule schedule;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : cfg_(config) {}

  /// One update over all parameters. Clips by global norm first, then adds
  /// L2 decay, then applies the bias-corrected Adam rule at the scheduled
  /// learning rate. Throws on non-finite gradients, naming the parameter.
  void step(std::vector<NamedParam>& params);

  int64_t step_count() const { return step_; }
  double current_lr() const { return cfg_.schedule.at(step_); }
  const AdamConfig& config() const { return cfg_; }

  // exact-resume support
  struct State {
    int64_t step;
    std::vector<std::vector<double>> m, v;
  };
  State save_state() const;
  void load_state(const State& s);

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<Tensor> m_, v_;
  std::unique_ptr<State> pending_;
};

}  // namespace e2e

#endif  // E2E_OPTIMIZER_HPP_
