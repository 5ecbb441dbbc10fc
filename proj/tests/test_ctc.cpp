// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "e2e/ctc.hpp"
#include "e2e/lm.hpp"
#include "e2e/units.hpp"
#include "test_util.hpp"

using namespace e2e;
using e2e::testing::fd_check;
using e2e::testing::rand_tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Exhaustive oracle: log-marginal of every collapsed sequence over all
// (V+1)^T alignment paths.
std::map<std::vector<int>, double> path_marginals(const Tensor& logp, int blank) {
  const int T = logp.dim(0), V1 = logp.dim(1);
  std::map<std::vector<int>, double> out;
  std::vector<int> path(static_cast<size_t>(T), 0);
  while (true) {
    double lp = 0.0;
    for (int t = 0; t < T; ++t) lp += logp.at(t, path[static_cast<size_t>(t)]);
    const std::vector<int> seq = collapse(path, blank);
    auto [it, fresh] = out.emplace(seq, lp);
    if (!fresh) it->second = logsumexp(it->second, lp);
    int i = T - 1;
    while (i >= 0 && path[static_cast<size_t>(i)] == V1 - 1) path[static_cast<size_t>(i--)] = 0;
    if (i < 0) break;
    ++path[static_cast<size_t>(i)];
  }
  return out;
}

NGramLM toy_lm(int vocab_size, const std::vector<std::vector<int>>& corpus, int order = 2) {
  NGramLM::TrainConfig tc;
  tc.order = order;
  return NGramLM::train(corpus, vocab_size, tc);
}

}  // namespace

TEST_CASE("collapse golden: A<b>AA<b>B -> AAB") {
  // A=0, B=1, blank=2
  CHECK(collapse({0, 2, 0, 0, 2, 1}, 2) == std::vector<int>{0, 0, 1});
  CHECK(collapse({2, 2, 2}, 2).empty());
  CHECK(collapse({}, 2).empty());
}

TEST_CASE("collapse matches the two-pass oracle on random paths") {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 200; ++it) {
    std::vector<int> path(6);
    for (auto& p : path) p = static_cast<int>(rng() % 4);  // ids 0..2 plus blank=3
    // oracle: dedupe consecutive repeats, then strip blanks
    std::vector<int> dedup;
    for (int p : path)
      if (dedup.empty() || dedup.back() != p) dedup.push_back(p);
    std::vector<int> expect;
    for (int p : dedup)
      if (p != 3) expect.push_back(p);
    CHECK(collapse(path, 3) == expect);
  }
}

TEST_CASE("ctc loss single-frame and uniform two-frame goldens") {
  // T=1, one label: loss = -log softmax(logits)[k]
  Tensor l1({1, 3}, {0.2, 1.4, -0.3});
  Tensor ls = log_softmax_rows(l1);
  CtcLossResult r1 = ctc_loss(l1, {1}, 2);
  CHECK(r1.loss == doctest::Approx(-ls.at(0, 1)).epsilon(1e-12));

  // uniform logits, T=2, |V|=2: paths kk, k<b>, <b>k out of 9 -> p = 3/9
  Tensor l2({2, 3});
  l2.fill(0.7);
  CtcLossResult r2 = ctc_loss(l2, {0}, 2);
  CHECK(r2.loss == doctest::Approx(-std::log(3.0 / 9.0)).epsilon(1e-10));
}

TEST_CASE("ctc loss equals exhaustive path enumeration on random instances") {
  std::mt19937_64 rng(12);
  int checked = 0;
  while (checked < 60) {
    const int V = 2 + static_cast<int>(rng() % 3);  // 2..4
    const int T = 2 + static_cast<int>(rng() % 5);  // 2..6
    const int L = 1 + static_cast<int>(rng() % 3);  // 1..3
    std::vector<int> target(static_cast<size_t>(L));
    for (auto& t : target) t = static_cast<int>(rng() % V);
    Tensor logits = rand_tensor(rng, {T, V + 1});
    int need = L;
    for (int i = 1; i < L; ++i)
      if (target[static_cast<size_t>(i)] == target[static_cast<size_t>(i) - 1]) ++need;
    if (T < need) continue;
    auto marg = path_marginals(log_softmax_rows(logits), V);
    auto it = marg.find(target);
    REQUIRE(it != marg.end());
    CtcLossResult r = ctc_loss(logits, target, V);
    CHECK(r.loss == doctest::Approx(-it->second).epsilon(1e-9));
    ++checked;
  }
}

TEST_CASE("marginal path probabilities over all collapsed sequences sum to 1") {
  std::mt19937_64 rng(15);
  for (int it = 0; it < 5; ++it) {
    const int T = 3 + static_cast<int>(rng() % 2);
    Tensor logits = rand_tensor(rng, {T, 4});  // |V|=3 + blank
    auto marg = path_marginals(log_softmax_rows(logits), 3);
    double total = kNegInf;
    for (const auto& [seq, lp] : marg) total = logsumexp(total, lp);
    CHECK(std::exp(total) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ctc loss gradient matches finite differences") {
  std::mt19937_64 rng(19);
  for (int it = 0; it < 5; ++it) {
    Tensor logits = rand_tensor(rng, {5, 4});
    const std::vector<int> target = {0, 2, 0};
    CtcLossResult r = ctc_loss(logits, target, 3);
    auto loss_fn = [&logits, &target]() { return ctc_loss(logits, target, 3).loss; };
    CHECK(fd_check(logits, r.grad, loss_fn) < 1e-4);
  }
}

TEST_CASE("ctc loss is covariant under vocabulary permutation") {
  std::mt19937_64 rng(23);
  Tensor logits = rand_tensor(rng, {6, 4});
  const std::vector<int> target = {0, 1, 2};
  const double base = ctc_loss(logits, target, 3).loss;
  // permutation 0->2, 1->0, 2->1 of non-blank columns
  const int perm[3] = {2, 0, 1};
  Tensor shuffled({6, 4});
  for (int t = 0; t < 6; ++t) {
    for (int v = 0; v < 3; ++v) shuffled.at(t, perm[v]) = logits.at(t, v);
    shuffled.at(t, 3) = logits.at(t, 3);
  }
  std::vector<int> ptarget;
  for (int v : target) ptarget.push_back(perm[v]);
  CHECK(ctc_loss(shuffled, ptarget, 3).loss == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("unalignable targets raise an error naming the minimum length") {
  Tensor logits({2, 3});
  logits.fill(0.1);
  CHECK_THROWS_WITH_AS(ctc_loss(logits, {0, 0}, 2), doctest::Contains("3"),
                       std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(logits, {0, 1, 0}, 2), std::invalid_argument);
}

TEST_CASE("greedy decode goldens and composition oracle") {
  // blank dominant everywhere -> empty
  Tensor blanky({4, 3});
  blanky.fill(0.0);
  for (int t = 0; t < 4; ++t) blanky.at(t, 2) = 5.0;
  CHECK(greedy_decode(blanky, 2).empty());

  // A,A,<b>,B -> AB
  Tensor spell({4, 3});
  spell.fill(0.0);
  spell.at(0, 0) = 3;
  spell.at(1, 0) = 3;
  spell.at(2, 2) = 3;
  spell.at(3, 1) = 3;
  CHECK(greedy_decode(spell, 2) == std::vector<int>{0, 1});

  std::mt19937_64 rng(29);
  for (int it = 0; it < 50; ++it) {
    Tensor scores = rand_tensor(rng, {6, 4});
    std::vector<int> arg(6);
    for (int t = 0; t < 6; ++t) {
      int best = 0;
      for (int v = 1; v < 4; ++v)
        if (scores.at(t, v) > scores.at(t, best)) best = v;
      arg[static_cast<size_t>(t)] = best;
    }
    CHECK(greedy_decode(scores, 3) == collapse(arg, 3));
  }
}

TEST_CASE("prefix beam search with full beam matches the exhaustive argmax") {
  std::mt19937_64 rng(31);
  for (int it = 0; it < 40; ++it) {
    const int V = 2 + static_cast<int>(rng() % 2);  // 2..3
    const int T = 2 + static_cast<int>(rng() % 3);  // 2..4
    Tensor logp = log_softmax_rows(rand_tensor(rng, {T, V + 1}));
    auto marg = path_marginals(logp, V);
    std::vector<int> best_seq;
    double best_lp = kNegInf;
    for (const auto& [seq, lp] : marg) {
      if (seq.empty()) continue;  // decoder reports labeled prefixes
      if (lp > best_lp || (lp == best_lp && seq < best_seq)) {
        best_lp = lp;
        best_seq = seq;
      }
    }
    CtcDecodeConfig cfg;
    cfg.beam_width = 4096;  // full
    cfg.top_n = 1;
    auto hyps = prefix_beam_search(logp, V, cfg);
    REQUIRE(!hyps.empty());
    CHECK(hyps[0].labels == best_seq);
    CHECK(hyps[0].acoustic_score == doctest::Approx(best_lp).epsilon(1e-9));
    CHECK(hyps[0].unit_count == static_cast<int>(best_seq.size()));
  }
}

TEST_CASE("beam width monotonicity of the top-1 fused score") {
  std::mt19937_64 rng(37);
  NGramLM lm = toy_lm(3, {{0, 1, 2, 0}, {1, 1, 0}, {2, 0, 1}});
  Tensor logp = log_softmax_rows(rand_tensor(rng, {6, 4}));
  CtcDecodeConfig cfg;
  cfg.alpha = 0.4;
  cfg.beta = 0.3;
  cfg.lm = &lm;
  double prev = kNegInf;
  for (int b : {1, 2, 4, 8, 16, 64, 256}) {
    cfg.beam_width = b;
    auto hyps = prefix_beam_search(logp, 3, cfg);
    REQUIRE(!hyps.empty());
    const double total = ctc_total_score(hyps[0], cfg);
    CHECK(total >= prev - 1e-12);
    prev = total;
  }
}

TEST_CASE("score linearity: shifting alpha or beta moves totals exactly") {
  std::mt19937_64 rng(41);
  NGramLM lm = toy_lm(3, {{0, 1, 2}, {2, 1, 0}, {0, 0, 1}});
  Tensor logp = log_softmax_rows(rand_tensor(rng, {5, 4}));
  CtcDecodeConfig cfg;
  cfg.beam_width = 1024;
  cfg.top_n = 16;
  cfg.alpha = 0.5;
  cfg.beta = 0.2;
  cfg.lm = &lm;
  auto hyps = prefix_beam_search(logp, 3, cfg);
  REQUIRE(hyps.size() > 3);
  const double delta = 0.37;
  CtcDecodeConfig alpha_up = cfg;
  alpha_up.alpha += delta;
  CtcDecodeConfig beta_up = cfg;
  beta_up.beta += delta;
  for (const auto& h : hyps) {
    CHECK(ctc_total_score(h, alpha_up) - ctc_total_score(h, cfg) ==
          doctest::Approx(delta * h.lm_score).epsilon(1e-12));
    CHECK(ctc_total_score(h, beta_up) - ctc_total_score(h, cfg) ==
          doctest::Approx(delta * h.unit_count).epsilon(1e-12));
  }
  // the decoder itself reports the same components under the shifted weight
  auto hyps_up = prefix_beam_search(logp, 3, alpha_up);
  for (const auto& h : hyps) {
    for (const auto& g : hyps_up)
      if (g.labels == h.labels) {
        CHECK(g.acoustic_score == doctest::Approx(h.acoustic_score).epsilon(1e-12));
        CHECK(g.lm_score == doctest::Approx(h.lm_score).epsilon(1e-12));
      }
  }
}

TEST_CASE("word-count dominance and LM dominance") {
  // two frames, labels 0 and 1 plus blank: without the count bonus the
  // single-label hypothesis wins, with a huge bonus the two-label one does
  Tensor logits({2, 3}, {2.0, 0.5, 1.0, 0.5, 0.8, 2.5});
  Tensor logp = log_softmax_rows(logits);
  CtcDecodeConfig plain;
  plain.beam_width = 64;
  auto base = prefix_beam_search(logp, 2, plain);
  REQUIRE(!base.empty());
  CtcDecodeConfig cfg = plain;
  cfg.beta = 50.0;  // huge unit-count reward
  auto hyps = prefix_beam_search(logp, 2, cfg);
  REQUIRE(!hyps.empty());
  CHECK(hyps[0].labels == std::vector<int>{0, 1});  // longest wins
  CHECK(hyps[0].unit_count > base[0].unit_count);

  // LM that has only ever seen "1": at alpha=1 it overrides a small
  // acoustic preference for 0
  std::vector<std::vector<int>> ones(50, std::vector<int>{1});
  NGramLM lm = toy_lm(2, ones, 1);
  Tensor logits2({1, 3}, {1.2, 1.0, -3.0});
  CtcDecodeConfig cfg2;
  cfg2.beam_width = 64;
  cfg2.alpha = 1.0;
  cfg2.lm = &lm;
  auto hyps2 = prefix_beam_search(log_softmax_rows(logits2), 2, cfg2);
  REQUIRE(!hyps2.empty());
  CHECK(hyps2[0].labels == std::vector<int>{1});
}

TEST_CASE("syllable-to-character transduction") {
  std::string text;
  text += utf8_encode(U'你') + "\tni3\n";
  text += utf8_encode(U'拟') + "\tni3\n";
  text += utf8_encode(U'好') + "\thao3\n";
  std::istringstream in(text);
  Lexicon lex = Lexicon::parse(in);

  UnitVocabulary char_vocab(UnitKind::Character, ModelKind::CTC,
                            {utf8_encode(U'你'), utf8_encode(U'好'), utf8_encode(U'拟')});
  const int ni = char_vocab.id_of(utf8_encode(U'你'));
  const int hao = char_vocab.id_of(utf8_encode(U'好'));
  // char LM trained on 你好 only: prefers 你 over the homophone 拟
  NGramLM lm = toy_lm(char_vocab.size(), {{ni, hao}, {ni, hao}});

  std::vector<std::vector<Syllable>> lattice = {{parse_syllable("ni3")},
                                                {parse_syllable("hao3")}};
  auto chars = syllable_to_char_transduce(lattice, lex, lm, char_vocab, 8);
  REQUIRE(chars.size() == 2);
  CHECK(chars[0] == U'你');
  CHECK(chars[1] == U'好');

  // single-homophone syllables concatenate trivially
  std::vector<std::vector<Syllable>> single = {{parse_syllable("hao3")}};
  auto one = syllable_to_char_transduce(single, lex, lm, char_vocab, 8);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == U'好');

  // unknown syllable names itself in the error
  std::vector<std::vector<Syllable>> bad = {{parse_syllable("ma1")}};
  CHECK_THROWS_WITH_AS(syllable_to_char_transduce(bad, lex, lm, char_vocab, 8),
                       doctest::Contains("ma1"), std::invalid_argument);
}

TEST_CASE("transduction with full beam equals product-space enumeration") {
  std::string text;
  text += utf8_encode(U'你') + "\tni3\n";
  text += utf8_encode(U'拟') + "\tni3\n";
  text += utf8_encode(U'泥') + "\tni2\n";
  text += utf8_encode(U'好') + "\thao3\n";
  text += utf8_encode(U'号') + "\thao4\n";
  std::istringstream in(text);
  Lexicon lex = Lexicon::parse(in);
  std::vector<std::string> units;
  for (const auto& [cp, prons] : lex.entries()) units.push_back(utf8_encode(cp));
  UnitVocabulary vocab(UnitKind::Character, ModelKind::CTC, units);

  std::mt19937_64 rng(47);
  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 30; ++i) {
    std::vector<int> sent;
    for (int j = 0; j < 3; ++j) sent.push_back(static_cast<int>(rng() % 5));
    corpus.push_back(sent);
  }
  NGramLM lm = toy_lm(vocab.size(), corpus, 3);

  std::vector<std::vector<Syllable>> lattice = {{parse_syllable("ni3")},
                                                {parse_syllable("hao3")},
                                                {parse_syllable("ni3")}};
  // exhaustive argmax over homophone products under the sentence LM score
  std::vector<std::vector<char32_t>> cands;
  std::vector<char32_t> cur;
  std::function<void(size_t)> rec = [&](size_t pos) {
    if (pos == lattice.size()) {
      cands.push_back(cur);
      return;
    }
    for (char32_t c : lex.homophones(lattice[pos][0])) {
      cur.push_back(c);
      rec(pos + 1);
      cur.pop_back();
    }
  };
  rec(0);
  std::vector<char32_t> best;
  double best_score = kNegInf;
  for (const auto& c : cands) {
    std::vector<int> ids;
    for (char32_t cp : c) ids.push_back(vocab.id_of(utf8_encode(cp)));
    const double s = lm.score(ids);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  CHECK(syllable_to_char_transduce(lattice, lex, lm, vocab, 64) == best);
}

TEST_CASE("posterior container round trip with POST magic") {
  std::mt19937_64 rng(53);
  Tensor logp = log_softmax_rows(rand_tensor(rng, {4, 5}));
  const auto path = std::filesystem::temp_directory_path() / "e2e_post_test.post";
  save_posteriors(path.string(), logp);
  std::ifstream raw(path, std::ios::binary);
  char magic[4];
  raw.read(magic, 4);
  CHECK(std::string(magic, 4) == "POST");
  Tensor back = load_posteriors(path.string());
  REQUIRE(back.shape() == logp.shape());
  for (int64_t i = 0; i < logp.numel(); ++i)
    CHECK(back[i] == static_cast<double>(static_cast<float>(logp[i])));
  std::filesystem::remove(path);
}
