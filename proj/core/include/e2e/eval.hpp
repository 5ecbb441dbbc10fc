// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Character/phone error rate over token sequences. PER for phoneme-level
// systems reuses the same machinery with phoneme tokens.

#ifndef E2E_EVAL_HPP_
#define E2E_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace e2e {

struct EvalReport {
  int64_t subs = 0;
  int64_t dels = 0;
  int64_t ins = 0;
  int64_t ref_len = 0;

  int64_t edits() const { return subs + dels + ins; }
  /// (S + D + I) / N; corpus aggregates are edit-sum over length-sum, not
  /// a mean of per-utterance rates.
  double error_rate() const {
    return ref_len == 0 ? 0.0 : static_cast<double>(edits()) / static_cast<double>(ref_len);
  }
  void merge(const EvalReport& o) {
    subs += o.subs;
    dels += o.dels;
    ins += o.ins;
    ref_len += o.ref_len;
  }
};

/// Levenshtein alignment with unit costs. On cost ties the backtrace
/// prefers substitution over insertion over deletion. Throws on an empty
/// reference.
EvalReport token_error_rate(const std::vector<std::string>& reference,
                            const std::vector<std::string>& hypothesis);

/// Tokenizes both sides (whitespace split if present, else per code point)
/// and compares.
EvalReport cer(const std::string& reference, const std::string& hypothesis);

}  // namespace e2e

#endif  // E2E_EVAL_HPP_
