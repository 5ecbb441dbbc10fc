// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/eval.hpp"

#include <stdexcept>

#include "e2e/units.hpp"

namespace e2e {

EvalReport token_error_rate(const std::vector<std::string>& reference,
                            const std::vector<std::string>& hypothesis) {
  if (reference.empty()) throw std::invalid_argument("empty reference");
  const size_t n = reference.size(), m = hypothesis.size();
  // d[i][j]: edit distance between reference[0..i) and hypothesis[0..j)
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      const int ins = d[i][j - 1] + 1;
      const int del = d[i - 1][j] + 1;
      d[i][j] = std::min(sub, std::min(ins, del));
    }
  }
  EvalReport r;
  r.ref_len = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = reference[i - 1] == hypothesis[j - 1];
      const int sub = d[i - 1][j - 1] + (match ? 0 : 1);
      if (d[i][j] == sub) {  // substitution preferred on ties
        if (!match) ++r.subs;
        --i;
        --j;
        continue;
      }
      if (d[i][j] == d[i][j - 1] + 1) {  // then insertion
        ++r.ins;
        --j;
        continue;
      }
      ++r.dels;
      --i;
      continue;
    }
    if (j > 0) {
      ++r.ins;
      --j;
    } else {
      ++r.dels;
      --i;
    }
  }
  return r;
}

EvalReport cer(const std::string& reference, const std::string& hypothesis) {
  return token_error_rate(tokenize_transcript(reference), tokenize_transcript(hypothesis));
}

}  // namespace e2e
