// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace e2e {

double LrSchedule::at(int64_t step) const {
  if (total_steps <= 0 || step >= total_steps) return lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_start * std::pow(lr_end / lr_start, frac);
}

void Adam::step(std::vector<NamedParam>& params) {
  if (m_.empty()) {
    for (auto& p : params) {
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
    if (pending_) {
      for (size_t i = 0; i < m_.size() && i < pending_->m.size(); ++i) {
        if (m_[i].numel() != static_cast<int64_t>(pending_->m[i].size()))
          throw std::invalid_argument("optimizer state size mismatch on resume");
        m_[i].values() = pending_->m[i];
        v_[i].values() = pending_->v[i];
      }
      pending_.reset();
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("optimizer state does not match parameter list");

  double sq = 0.0;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.grad->numel(); ++i) {
      const double g = (*p.grad)[i];
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter " + p.name);
      sq += g * g;
    }
  }
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }

  const double lr = cfg_.schedule.at(step_);
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      double g = (*p.grad)[i] * scale + cfg_.weight_decay * (*p.value)[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*p.value)[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

Adam::State Adam::save_state() const {
  State s;
  s.step = step_;
  for (const auto& t : m_) s.m.push_back(t.values());
  for (const auto& t : v_) s.v.push_back(t.values());
  return s;
}

void Adam::load_state(const State& s) {
  step_ = s.step;
  if (m_.empty()) {
    // shapes are not known yet; applied lazily on the first step
    pending_ = std::make_unique<State>(s);
    return;
  }
  for (size_t i = 0; i < m_.size() && i < s.m.size(); ++i) {
    m_[i].values() = s.m[i];
    v_[i].values() = s.v[i];
  }
}

}  // namespace e2e
