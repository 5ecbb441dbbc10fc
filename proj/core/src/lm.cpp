// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/lm.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "e2e/units.hpp"

namespace e2e {

namespace {

constexpr char kMagic[4] = {'N', 'G', 'L', 'M'};
constexpr uint32_t kVersion = 1;

using Counts = std::map<std::vector<int>, int64_t>;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

NGramLM NGramLM::train(const std::vector<std::vector<int>>& corpus, int vocab_size,
                       const TrainConfig& config, uint64_t vocab_fingerprint) {
  if (corpus.empty()) throw std::invalid_argument("empty LM training corpus");
  if (config.order < 1) throw std::invalid_argument("LM order must be >= 1");

  NGramLM lm;
  lm.order_ = config.order;
  lm.vocab_size_ = vocab_size;
  lm.fingerprint_ = vocab_fingerprint;
  const int N = config.order;
  const int bos = lm.bos_token();
  const int eos = lm.eos_token();
  const int num_events = vocab_size + 1;  // units plus sentence end

  // raw counts per level; predicted position is never <s>
  std::vector<Counts> raw(static_cast<size_t>(N) + 1);
  for (const auto& sent : corpus) {
    std::vector<int> padded;
    padded.reserve(sent.size() + 2);
    padded.push_back(bos);
    for (int u : sent) {
      if (u < 0 || u >= vocab_size)
        throw std::invalid_argument("LM training unit id out of range: " + std::to_string(u));
      padded.push_back(u);
    }
    padded.push_back(eos);
    for (size_t i = 1; i < padded.size(); ++i)
      for (int n = 1; n <= N && static_cast<size_t>(n) <= i + 1; ++n)
        ++raw[static_cast<size_t>(n)][std::vector<int>(
            padded.begin() + static_cast<long>(i + 1 - static_cast<size_t>(n)),
            padded.begin() + static_cast<long>(i + 1))];
  }

  // adjusted counts: raw at the top level and for <s>-anchored grams,
  // continuation counts below (Kneser-Ney)
  std::vector<Counts> adj(static_cast<size_t>(N) + 1);
  adj[static_cast<size_t>(N)] = raw[static_cast<size_t>(N)];
  for (int n = N - 1; n >= 1; --n) {
    Counts cont;
    for (const auto& [gram, c] : raw[static_cast<size_t>(n) + 1]) {
      (void)c;
      ++cont[std::vector<int>(gram.begin() + 1, gram.end())];
    }
    for (const auto& [gram, c] : raw[static_cast<size_t>(n)]) {
      if (gram.front() == bos)
        adj[static_cast<size_t>(n)][gram] = c;
      else {
        auto it = cont.find(gram);
        adj[static_cast<size_t>(n)][gram] = it == cont.end() ? 0 : it->second;
      }
    }
  }

  lm.log_prob_.assign(static_cast<size_t>(N) + 1, {});
  lm.backoff_.assign(static_cast<size_t>(N), {});

  // unigram base: add-k smoothed adjusted counts over all events
  {
    double total = 0.0;
    for (const auto& [gram, c] : adj[1]) total += static_cast<double>(c);
    const double denom = total + config.add_k * num_events;
    for (int w = 0; w < num_events; ++w) {
      const int event = w < vocab_size ? w : eos;
      auto it = adj[1].find({event});
      const double c = it == adj[1].end() ? 0.0 : static_cast<double>(it->second);
      lm.log_prob_[1][{event}] = std::log((c + config.add_k) / denom);
    }
  }

  for (int n = 2; n <= N; ++n) {
    // group seen n-grams by context
    std::map<std::vector<int>, std::vector<std::pair<int, int64_t>>> by_ctx;
    for (const auto& [gram, c] : adj[static_cast<size_t>(n)]) {
      if (c <= 0) continue;
      by_ctx[std::vector<int>(gram.begin(), gram.end() - 1)].emplace_back(gram.back(), c);
    }
    for (const auto& [ctx, exts] : by_ctx) {
      double total = 0.0;
      for (const auto& [w, c] : exts) total += static_cast<double>(c);
      if (total <= 0.0) continue;
      const double n1p = static_cast<double>(exts.size());
      const double lambda = config.discount * n1p / total;
      const std::vector<int> lower_ctx(ctx.begin() + 1, ctx.end());
      double sum_p = 0.0, sum_lower = 0.0;
      for (const auto& [w, c] : exts) {
        const double lower = std::exp(lm.cond_log_prob(lower_ctx, w));
        const double p =
            std::max(static_cast<double>(c) - config.discount, 0.0) / total + lambda * lower;
        std::vector<int> gram = ctx;
        gram.push_back(w);
        lm.log_prob_[static_cast<size_t>(n)][gram] = std::log(p);
        sum_p += p;
        sum_lower += lower;
      }
      const double num = 1.0 - sum_p;
      const double den = 1.0 - sum_lower;
      lm.backoff_[static_cast<size_t>(n) - 1][ctx] =
          (num > 1e-12 && den > 1e-12) ? std::log(num / den) : 0.0;
    }
  }
  return lm;
}

double NGramLM::cond_log_prob(const std::vector<int>& context, int word) const {
  std::vector<int> ctx = context;
  if (static_cast<int>(ctx.size()) > order_ - 1)
    ctx.erase(ctx.begin(), ctx.end() - (order_ - 1));
  double bow = 0.0;
  while (true) {
    const size_t n = ctx.size() + 1;
    std::vector<int> gram = ctx;
    gram.push_back(word);
    auto it = log_prob_[n].find(gram);
    if (it != log_prob_[n].end()) return bow + it->second;
    if (ctx.empty())
      throw std::invalid_argument("unit id " + std::to_string(word) +
                                  " outside the LM vocabulary");
    auto bit = backoff_[ctx.size()].find(ctx);
    if (bit != backoff_[ctx.size()].end()) bow += bit->second;
    ctx.erase(ctx.begin());
  }
}

NGramLM::State NGramLM::begin() const { return State{{bos_token()}}; }

double NGramLM::score_step(const State& state, int unit, State* next) const {
  const double lp = cond_log_prob(state.context, unit);
  if (next) {
    next->context = state.context;
    next->context.push_back(unit);
    if (static_cast<int>(next->context.size()) > order_ - 1)
      next->context.erase(next->context.begin(),
                          next->context.end() - (order_ - 1));
  }
  return lp;
}

double NGramLM::score_prefix(const std::vector<int>& sequence) const {
  State st = begin();
  double total = 0.0;
  for (int u : sequence) {
    State nx;
    total += score_step(st, u, &nx);
    st = nx;
  }
  return total;
}

double NGramLM::score(const std::vector<int>& sequence) const {
  State st = begin();
  double total = 0.0;
  for (int u : sequence) {
    State nx;
    total += score_step(st, u, &nx);
    st = nx;
  }
  return total + score_end(st);
}

double NGramLM::perplexity(const std::vector<std::vector<int>>& corpus) const {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  double total = 0.0;
  int64_t tokens = 0;
  for (const auto& sent : corpus) {
    total += score(sent);
    tokens += static_cast<int64_t>(sent.size()) + 1;
  }
  return std::exp(-total / static_cast<double>(tokens));
}

void NGramLM::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write LM: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(order_));
  write_u32(os, static_cast<uint32_t>(vocab_size_));
  write_u64(os, fingerprint_);
  for (int n = 1; n <= order_; ++n) {
    const auto& level = log_prob_[static_cast<size_t>(n)];
    write_u64(os, level.size());
    for (const auto& [gram, lp] : level) {
      for (int id : gram) write_u32(os, static_cast<uint32_t>(id));
      write_f64(os, lp);
    }
  }
  for (int m = 1; m <= order_ - 1; ++m) {
    const auto& level = backoff_[static_cast<size_t>(m)];
    write_u64(os, level.size());
    for (const auto& [ctx, bow] : level) {
      for (int id : ctx) write_u32(os, static_cast<uint32_t>(id));
      write_f64(os, bow);
    }
  }
  if (!os) throw std::runtime_error("LM write failed: " + path);
}

NGramLM NGramLM::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open LM: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not an LM file: " + path);
  if (read_u32(is) != kVersion) throw std::runtime_error("unsupported LM version");
  NGramLM lm;
  lm.order_ = static_cast<int>(read_u32(is));
  lm.vocab_size_ = static_cast<int>(read_u32(is));
  lm.fingerprint_ = read_u64(is);
  lm.log_prob_.assign(static_cast<size_t>(lm.order_) + 1, {});
  lm.backoff_.assign(static_cast<size_t>(lm.order_), {});
  for (int n = 1; n <= lm.order_; ++n) {
    const uint64_t count = read_u64(is);
    for (uint64_t i = 0; i < count; ++i) {
      std::vector<int> gram(static_cast<size_t>(n));
      for (auto& id : gram) id = static_cast<int>(read_u32(is));
      lm.log_prob_[static_cast<size_t>(n)][gram] = read_f64(is);
    }
  }
  for (int m = 1; m <= lm.order_ - 1; ++m) {
    const uint64_t count = read_u64(is);
    for (uint64_t i = 0; i < count; ++i) {
      std::vector<int> ctx(static_cast<size_t>(m));
      for (auto& id : ctx) id = static_cast<int>(read_u32(is));
      lm.backoff_[static_cast<size_t>(m)][ctx] = read_f64(is);
    }
  }
  if (!is) throw std::runtime_error("truncated LM file: " + path);
  return lm;
}

void NGramLM::export_arpa(std::ostream& out, const UnitVocabulary* vocab) const {
  auto name = [this, vocab](int id) -> std::string {
    if (id == eos_token()) return "</s>";
    if (id == bos_token()) return "<s>";
    if (vocab && id < vocab->size()) return vocab->unit(id);
    return "u" + std::to_string(id);
  };
  char buf[64];
  auto log10str = [&buf](double ln) {
    std::snprintf(buf, sizeof(buf), "%.6f", ln / std::log(10.0));
    return std::string(buf);
  };
  out << "\\data\\\n";
  for (int n = 1; n <= order_; ++n)
    out << "ngram " << n << "=" << log_prob_[static_cast<size_t>(n)].size() << "\n";
  out << "\n";
  for (int n = 1; n <= order_; ++n) {
    out << "\\" << n << "-grams:\n";
    auto write_entry = [&](const std::vector<int>& gram, const std::string& prob) {
      out << prob;
      for (int id : gram) out << "\t" << name(id);
      if (n < order_) {
        auto bit = backoff_[static_cast<size_t>(n)].find(gram);
        if (bit != backoff_[static_cast<size_t>(n)].end() && bit->second != 0.0)
          out << "\t" << log10str(bit->second);
      }
      out << "\n";
    };
    // contexts without a probability of their own (<s>-anchored) still
    // carry backoff weights; ARPA convention gives them prob -99
    if (n < order_)
      for (const auto& [ctx, bow] : backoff_[static_cast<size_t>(n)]) {
        (void)bow;
        if (!log_prob_[static_cast<size_t>(n)].count(ctx)) write_entry(ctx, "-99");
      }
    for (const auto& [gram, lp] : log_prob_[static_cast<size_t>(n)])
      write_entry(gram, log10str(lp));
    out << "\n";
  }
  out << "\\end\\\n";
}

}  // namespace e2e
