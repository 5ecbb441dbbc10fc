// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace e2e {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace

Tensor log_softmax_rows(const Tensor& logits) {
  const int T = logits.dim(0), V = logits.dim(1);
  Tensor out({T, V});
  for (int t = 0; t < T; ++t) {
    double mx = logits.at(t, 0);
    for (int k = 1; k < V; ++k) mx = std::max(mx, logits.at(t, k));
    double z = 0.0;
    for (int k = 0; k < V; ++k) z += std::exp(logits.at(t, k) - mx);
    const double logz = mx + std::log(z);
    for (int k = 0; k < V; ++k) out.at(t, k) = logits.at(t, k) - logz;
  }
  return out;
}

std::vector<int> collapse(const std::vector<int>& path, int blank_id) {
  std::vector<int> out;
  int prev = blank_id;
  for (int k : path) {
    if (k != prev && k != blank_id) out.push_back(k);
    prev = k;
  }
  return out;
}

CtcLossResult ctc_loss(const Tensor& logits, const std::vector<int>& target, int blank_id) {
  const int T = logits.dim(0), V = logits.dim(1);
  if (!logits.all_finite()) throw std::invalid_argument("non-finite logits");
  const int L = static_cast<int>(target.size());
  for (int k : target)
    if (k < 0 || k >= V || k == blank_id)
      throw std::invalid_argument("target label " + std::to_string(k) + " out of range");
  int repeats = 0;
  for (int i = 1; i < L; ++i)
    if (target[static_cast<size_t>(i)] == target[static_cast<size_t>(i) - 1]) ++repeats;
  const int min_t = L + repeats;
  if (T < min_t)
    throw std::invalid_argument("target of length " + std::to_string(L) + " needs at least " +
                                std::to_string(min_t) + " frames, got " + std::to_string(T));

  const Tensor logp = log_softmax_rows(logits);
  const int S = 2 * L + 1;
  auto ext = [&](int s) { return s % 2 == 0 ? blank_id : target[static_cast<size_t>(s / 2)]; };

  std::vector<double> alpha(static_cast<size_t>(T) * S, kLogZero);
  std::vector<double> beta(static_cast<size_t>(T) * S, kLogZero);
  auto A = [&alpha, S](int t, int s) -> double& { return alpha[static_cast<size_t>(t) * S + s]; };
  auto B = [&beta, S](int t, int s) -> double& { return beta[static_cast<size_t>(t) * S + s]; };

  A(0, 0) = logp.at(0, blank_id);
  if (S > 1) A(0, 1) = logp.at(0, ext(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = log_add(acc, A(t - 1, s - 1));
      if (s >= 2 && ext(s) != blank_id && ext(s) != ext(s - 2))
        acc = log_add(acc, A(t - 1, s - 2));
      A(t, s) = acc == kLogZero ? kLogZero : acc + logp.at(t, ext(s));
    }
  }
  double log_p = A(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, A(T - 1, S - 2));
  if (log_p == kLogZero)
    throw std::invalid_argument("target not alignable in " + std::to_string(T) + " frames");

  B(T - 1, S - 1) = logp.at(T - 1, ext(S - 1));
  if (S > 1) B(T - 1, S - 2) = logp.at(T - 1, ext(S - 2));
  for (int t = T - 2; t >= 0; --t) {
    for (int s = S - 1; s >= 0; --s) {
      double acc = B(t + 1, s);
      if (s + 1 < S) acc = log_add(acc, B(t + 1, s + 1));
      if (s + 2 < S && ext(s + 2) != blank_id && ext(s + 2) != ext(s))
        acc = log_add(acc, B(t + 1, s + 2));
      B(t, s) = acc == kLogZero ? kLogZero : acc + logp.at(t, ext(s));
    }
  }

  CtcLossResult res;
  res.loss = -log_p;
  res.grad = Tensor({T, V});
  for (int t = 0; t < T; ++t) {
    std::vector<double> occ(static_cast<size_t>(V), kLogZero);
    for (int s = 0; s < S; ++s) {
      // alpha and beta both include the frame-t emission; divide one out
      const double g = A(t, s) + B(t, s) - logp.at(t, ext(s));
      if (g != kLogZero) occ[static_cast<size_t>(ext(s))] = log_add(occ[static_cast<size_t>(ext(s))], g);
    }
    for (int k = 0; k < V; ++k) {
      const double post = occ[static_cast<size_t>(k)] == kLogZero
                              ? 0.0
                              : std::exp(occ[static_cast<size_t>(k)] - log_p);
      res.grad.at(t, k) = std::exp(logp.at(t, k)) - post;
    }
  }
  return res;
}

std::vector<int> greedy_decode(const Tensor& scores, int blank_id) {
  const int T = scores.dim(0), V = scores.dim(1);
  std::vector<int> path(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int k = 1; k < V; ++k)
      if (scores.at(t, k) > scores.at(t, best)) best = k;
    path[static_cast<size_t>(t)] = best;
  }
  return collapse(path, blank_id);
}

// ---------------------------------------------------------------------------
// Prefix beam search

namespace {

struct PrefixMass {
  double p_b = kLogZero;   // mass of paths ending in blank
  double p_nb = kLogZero;  // mass of paths ending in the last label
  double lm = 0.0;         // log P_LM of the prefix units
  NGramLM::State lm_state;
  double total() const { return log_add(p_b, p_nb); }
};

}  // namespace

std::vector<CtcHypothesis> prefix_beam_search(const Tensor& log_posteriors, int blank_id,
                                              const CtcDecodeConfig& config) {
  if (config.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (!std::isfinite(config.alpha) || !std::isfinite(config.beta))
    throw std::invalid_argument("non-finite decode weights");
  const int T = log_posteriors.dim(0), V = log_posteriors.dim(1);

  std::map<std::vector<int>, PrefixMass> beam;
  PrefixMass root;
  root.p_b = 0.0;
  if (config.lm) root.lm_state = config.lm->begin();
  beam[{}] = root;

  auto rank = [&config](const PrefixMass& m, size_t len) {
    return m.total() + config.alpha * m.lm + config.beta * static_cast<double>(len);
  };

  for (int t = 0; t < T; ++t) {
    std::map<std::vector<int>, PrefixMass> next;
    for (const auto& [prefix, mass] : beam) {
      for (int k = 0; k < V; ++k) {
        const double lp = log_posteriors.at(t, k);
        if (k == blank_id) {
          PrefixMass& nm = next[prefix];
          if (nm.p_b == kLogZero && nm.p_nb == kLogZero) {
            nm.lm = mass.lm;
            nm.lm_state = mass.lm_state;
          }
          nm.p_b = log_add(nm.p_b, mass.total() + lp);
          continue;
        }
        const bool repeat = !prefix.empty() && prefix.back() == k;
        if (repeat && mass.p_nb != kLogZero) {
          // same label again without an intervening blank stays on the
          // same prefix
          PrefixMass& nm = next[prefix];
          if (nm.p_b == kLogZero && nm.p_nb == kLogZero) {
            nm.lm = mass.lm;
            nm.lm_state = mass.lm_state;
          }
          nm.p_nb = log_add(nm.p_nb, mass.p_nb + lp);
        }
        const double src = repeat ? mass.p_b : mass.total();
        if (src == kLogZero) continue;
        std::vector<int> extended = prefix;
        extended.push_back(k);
        PrefixMass& nm = next[extended];
        if (nm.p_b == kLogZero && nm.p_nb == kLogZero) {
          if (config.lm) {
            nm.lm_state = NGramLM::State{};
            nm.lm = mass.lm + config.lm->score_step(mass.lm_state, k, &nm.lm_state);
          }
        }
        nm.p_nb = log_add(nm.p_nb, src + lp);
      }
    }
    // prune to the beam width by the fused score
    std::vector<std::pair<std::vector<int>, PrefixMass>> items(next.begin(), next.end());
    std::sort(items.begin(), items.end(), [&rank](const auto& a, const auto& b) {
      const double ra = rank(a.second, a.first.size());
      const double rb = rank(b.second, b.first.size());
      if (ra != rb) return ra > rb;
      return a.first < b.first;
    });
    if (static_cast<int>(items.size()) > config.beam_width)
      items.resize(static_cast<size_t>(config.beam_width));
    beam.clear();
    for (auto& [p, m] : items) beam.emplace(std::move(p), std::move(m));
  }

  std::vector<CtcHypothesis> out;
  for (const auto& [prefix, mass] : beam) {
    CtcHypothesis h;
    h.labels = prefix;
    h.acoustic_score = mass.total();
    h.lm_score = mass.lm;
    h.unit_count = static_cast<int>(prefix.size());
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [&config](const CtcHypothesis& a, const CtcHypothesis& b) {
    const double ta = ctc_total_score(a, config);
    const double tb = ctc_total_score(b, config);
    if (ta != tb) return ta > tb;
    return a.labels < b.labels;
  });
  if (static_cast<int>(out.size()) > config.top_n) out.resize(static_cast<size_t>(config.top_n));
  return out;
}

// ---------------------------------------------------------------------------
// Syllable -> character transduction

std::vector<char32_t> syllable_to_char_transduce(
    const std::vector<std::vector<Syllable>>& lattice, const Lexicon& lex,
    const NGramLM& char_lm, const UnitVocabulary& char_vocab, int beam_width) {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  struct Item {
    std::vector<int> char_ids;
    std::vector<int> cand_idx;  // per-position candidate index, for tie-breaks
    double score = 0.0;
    NGramLM::State state;
  };
  std::vector<Item> beam{Item{{}, {}, 0.0, char_lm.begin()}};
  for (size_t pos = 0; pos < lattice.size(); ++pos) {
    std::vector<std::pair<char32_t, int>> candidates;  // (char, vocab id)
    int idx = 0;
    for (const auto& syl : lattice[pos]) {
      for (char32_t ch : lex.homophones(syl)) {
        const int id = char_vocab.id_of(utf8_encode(ch));
        if (id >= 0 && !char_vocab.is_special(id)) candidates.emplace_back(ch, id);
      }
      ++idx;
    }
    (void)idx;
    if (candidates.empty()) {
      std::string names;
      for (const auto& syl : lattice[pos]) names += (names.empty() ? "" : "/") + syl.render();
      throw std::invalid_argument("syllable " + names + " at position " +
                                  std::to_string(pos) + " has no homophone character");
    }
    std::vector<Item> next;
    for (const auto& item : beam) {
      for (size_t c = 0; c < candidates.size(); ++c) {
        Item nx = item;
        NGramLM::State st;
        nx.score += char_lm.score_step(item.state, candidates[c].second, &st);
        nx.state = st;
        nx.char_ids.push_back(candidates[c].second);
        nx.cand_idx.push_back(static_cast<int>(c));
        next.push_back(std::move(nx));
      }
    }
    std::sort(next.begin(), next.end(), [](const Item& a, const Item& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.cand_idx < b.cand_idx;
    });
    if (static_cast<int>(next.size()) > beam_width)
      next.resize(static_cast<size_t>(beam_width));
    beam = std::move(next);
  }
  for (auto& item : beam) item.score += char_lm.score_end(item.state);
  std::sort(beam.begin(), beam.end(), [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cand_idx < b.cand_idx;
  });
  std::vector<char32_t> out;
  for (int id : beam.front().char_ids) {
    const auto cps = utf8_decode(char_vocab.unit(id));
    out.push_back(cps.front());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior container

void save_posteriors(const std::string& path, const Tensor& log_posteriors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write posteriors: " + path);
  os.write("POST", 4);
  const uint32_t t = static_cast<uint32_t>(log_posteriors.dim(0));
  const uint32_t v = static_cast<uint32_t>(log_posteriors.dim(1));
  os.write(reinterpret_cast<const char*>(&t), 4);
  os.write(reinterpret_cast<const char*>(&v), 4);
  for (int64_t i = 0; i < log_posteriors.numel(); ++i) {
    const float f = static_cast<float>(log_posteriors[i]);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw std::runtime_error("posterior write failed: " + path);
}

Tensor load_posteriors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open posteriors: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "POST", 4) != 0)
    throw std::runtime_error("not a posterior file: " + path);
  uint32_t t = 0, v = 0;
  is.read(reinterpret_cast<char*>(&t), 4);
  is.read(reinterpret_cast<char*>(&v), 4);
  Tensor out({static_cast<int>(t), static_cast<int>(v)});
  for (int64_t i = 0; i < out.numel(); ++i) {
    float f;
    is.read(reinterpret_cast<char*>(&f), 4);
    out[i] = static_cast<double>(f);
  }
  if (!is) throw std::runtime_error("truncated posterior file: " + path);
  return out;
}

}  // namespace e2e
