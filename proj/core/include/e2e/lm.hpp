// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Back-off n-gram language model over modeling-unit ids, interpolated
// Kneser-Ney smoothed, used for shallow fusion in both decoders.

#ifndef E2E_LM_HPP_
#define E2E_LM_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace e2e {

class UnitVocabulary;

class NGramLM {
 public:
  struct TrainConfig {
    int order = 4;
    double discount = 0.75;  // fixed KN discount
    double add_k = 0.01;     // unigram-level fallback smoothing
  };

  /// Sequences are unit-id vectors over ids 0..vocab_size-1. Sentence
  /// boundaries are added internally.
  static NGramLM train(const std::vector<std::vector<int>>& corpus, int vocab_size,
                       const TrainConfig& config = TrainConfig{4, 0.75, 0.01},
                       uint64_t vocab_fingerprint = 0);

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  uint64_t vocab_fingerprint() const { return fingerprint_; }

  /// Predictable events: all units plus the sentence-end token.
  int eos_token() const { return vocab_size_; }
  int bos_token() const { return vocab_size_ + 1; }

  struct State {
    std::vector<int> context;  // last (order-1) tokens, oldest first
  };
  State begin() const;
  /// Natural-log probability of `unit` (or eos_token()) in `state`, plus the
  /// successor state.
  double score_step(const State& state, int unit, State* next) const;
  double score_end(const State& state) const { return cond_log_prob(state.context, eos_token()); }
  /// Natural-log probability of the whole sentence including the final
  /// sentence-end event.
  double score(const std::vector<int>& sequence) const;
  /// Sum over the given units only, no sentence-end event.
  double score_prefix(const std::vector<int>& sequence) const;
  double perplexity(const std::vector<std::vector<int>>& corpus) const;

  /// Backoff lookup: natural-log P(word | context), context oldest first.
  double cond_log_prob(const std::vector<int>& context, int word) const;

  void save(const std::string& path) const;
  static NGramLM load(const std::string& path);
  /// ARPA-style text sections with log10 values. Unit names come from
  /// `vocab` when given, otherwise "u<id>".
  void export_arpa(std::ostream& out, const UnitVocabulary* vocab = nullptr) const;

 private:
  int order_ = 4;
  int vocab_size_ = 0;
  uint64_t fingerprint_ = 0;
  // level n (1-based) keyed by the full n-gram / the context
  std::vector<std::map<std::vector<int>, double>> log_prob_;  // natural log
  std::vector<std::map<std::vector<int>, double>> backoff_;   // natural log
};

}  // namespace e2e

#endif  // E2E_LM_HPP_
