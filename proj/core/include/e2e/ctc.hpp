// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// CTC: forward-backward loss with gradients, greedy collapse decoding, and
// LM-fused prefix beam search. All probability arithmetic is in log space.

#ifndef E2E_CTC_HPP_
#define E2E_CTC_HPP_

#include <string>
#include <vector>

#include "e2e/lm.hpp"
#include "e2e/tensor.hpp"
#include "e2e/units.hpp"

namespace e2e {

/// Row-wise log softmax of a [T, V] score matrix.
Tensor log_softmax_rows(const Tensor& logits);

/// Dedupe consecutive repeats, then strip blanks.
std::vector<int> collapse(const std::vector<int>& path, int blank_id);

struct CtcLossResult {
  double loss = 0.0;  // negative log probability
  Tensor grad;        // d loss / d logits, same shape as the input
};

/// `logits` are unnormalized per-frame scores [T, V+1]; softmax is applied
/// internally. Throws if the target cannot be aligned in T frames.
CtcLossResult ctc_loss(const Tensor& logits, const std::vector<int>& target, int blank_id);

/// Per-frame argmax (ties to the lowest index), then collapse.
std::vector<int> greedy_decode(const Tensor& scores, int blank_id);

struct CtcHypothesis {
  std::vector<int> labels;
  double acoustic_score = 0.0;  // log P_CTC(y|x)
  double lm_score = 0.0;        // log P_LM(y), 0 without an LM
  int unit_count = 0;
  bool operator==(const CtcHypothesis& o) const { return labels == o.labels; }
};

struct CtcDecodeConfig {
  int beam_width = 8;
  double alpha = 0.0;  // LM weight
  double beta = 0.0;   // unit-count weight
  const NGramLM* lm = nullptr;
  int top_n = 1;
};

inline double ctc_total_score(const CtcHypothesis& h, const CtcDecodeConfig& cfg) {
  return h.acoustic_score + cfg.alpha * h.lm_score + cfg.beta * h.unit_count;
}

/// Prefix beam search over [T, V+1] log posteriors, maintaining separate
/// blank- and label-terminated mass per prefix. LM fusion is applied at each
/// label extension so pruning respects the fused objective.
std::vector<CtcHypothesis> prefix_beam_search(const Tensor& log_posteriors, int blank_id,
                                              const CtcDecodeConfig& config);

/// Beam search over per-syllable homophone candidates scored by a character
/// LM (full-sentence probability). Ties break toward lower candidate index.
std::vector<char32_t> syllable_to_char_transduce(
    const std::vector<std::vector<Syllable>>& lattice, const Lexicon& lex,
    const NGramLM& char_lm, const UnitVocabulary& char_vocab, int beam_width);

// Posterior-matrix container: magic "POST", u32 T, u32 V, f32 row-major
// log probabilities, little endian.
void save_posteriors(const std::string& path, const Tensor& log_posteriors);
Tensor load_posteriors(const std::string& path);

}  // namespace e2e

#endif  // E2E_CTC_HPP_
