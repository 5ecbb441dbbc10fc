// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Command-line front end: corpus prep, vocabulary building, LM training,
// model training, decoding, scoring, and the synthetic corpus generator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "e2e/config.hpp"
#include "e2e/eval.hpp"
#include "e2e/features.hpp"
#include "e2e/lm.hpp"
#include "e2e/pipeline.hpp"
#include "e2e/synth.hpp"
#include "e2e/units.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

e2e::UnitKind parse_kind(const std::string& s) {
  if (s == "cdp") return e2e::UnitKind::CDP;
  if (s == "syllable") return e2e::UnitKind::Syllable;
  if (s == "char" || s == "character") return e2e::UnitKind::Character;
  throw std::invalid_argument("unknown unit kind: " + s + " (cdp|syllable|char)");
}

e2e::ModelKind parse_model(const std::string& s) {
  if (s == "ctc") return e2e::ModelKind::CTC;
  if (s == "attention") return e2e::ModelKind::Attention;
  throw std::invalid_argument("unknown model kind: " + s + " (ctc|attention)");
}

struct GlobalOpts {
  std::string config_path;
  int64_t seed = -1;  // -1: leave the config value alone
  int threads = 1;

  e2e::Config load_config() const {
    e2e::Config cfg;
    if (!config_path.empty()) cfg = e2e::Config::load(config_path);
    if (seed >= 0) cfg.set("train.seed", std::to_string(seed));
    return cfg;
  }
};

int cmd_synth(const GlobalOpts& g, const std::string& vocab_path, int make_units,
              const std::string& model, const std::string& out_dir,
              const std::string& manifest_path, e2e::SynthConfig sc) {
  if (g.seed >= 0) sc.seed = static_cast<uint64_t>(g.seed);
  sc.out_dir = out_dir;
  e2e::UnitVocabulary vocab;
  if (make_units > 0) {
    std::vector<std::string> units;
    for (int i = 0; i < make_units; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "u%02d", i);
      units.emplace_back(buf);
    }
    vocab = e2e::UnitVocabulary(e2e::UnitKind::Character, parse_model(model), units);
    vocab.save(vocab_path);
  } else {
    vocab = e2e::UnitVocabulary::load(vocab_path);
  }
  e2e::Manifest m = e2e::synth_corpus(sc, vocab);
  m.save(manifest_path);
  std::cout << "wrote " << m.size() << " utterances to " << out_dir << "\n";
  return kOk;
}

int cmd_prep(const GlobalOpts& g, const std::string& manifest_in, const std::string& out_dir,
             const std::string& cmvn_path, const std::string& manifest_out) {
  e2e::Config cfg = g.load_config();
  e2e::FbankConfig fb;
  fb.n_mels = static_cast<int>(cfg.get_int("features.n_mels", 40));
  fb.frame_shift_ms = static_cast<int>(cfg.get_int("features.frame_shift_ms", 10));
  fb.frame_len_ms = static_cast<int>(cfg.get_int("features.frame_len_ms", 25));
  e2e::Manifest in = e2e::Manifest::load(manifest_in);
  e2e::Manifest out = e2e::run_prep(in, fb, out_dir, cmvn_path, g.threads);
  out.save(manifest_out);
  std::cout << "extracted features for " << out.size() << " utterances\n";
  return kOk;
}

int cmd_vocab(const std::string& manifest_path, const std::string& kind,
              const std::string& model, const std::string& lexicon_path, int char_budget,
              int cdp_min_count, const std::string& out_path) {
  e2e::Manifest m = e2e::Manifest::load(manifest_path);
  std::vector<std::string> corpus;
  for (const auto& r : m.records) corpus.push_back(r.transcript);
  e2e::Lexicon lex;
  if (!lexicon_path.empty()) lex = e2e::Lexicon::load(lexicon_path);
  auto result = e2e::build_vocabulary(corpus, parse_kind(kind), parse_model(model), lex,
                                      char_budget, cdp_min_count);
  result.vocab.save(out_path);
  std::printf("vocab size %d (content %d), coverage %.4f\n", result.vocab.size(),
              result.vocab.content_size(), result.coverage);
  return kOk;
}

int cmd_lm_train(const std::string& manifest_path, const std::string& vocab_path,
                 const std::string& lexicon_path, int order, const std::string& out_path,
                 const std::string& arpa_path) {
  e2e::Manifest m = e2e::Manifest::load(manifest_path);
  e2e::UnitVocabulary vocab = e2e::UnitVocabulary::load(vocab_path);
  e2e::Lexicon lex;
  if (!lexicon_path.empty()) lex = e2e::Lexicon::load(lexicon_path);
  e2e::NGramLM::TrainConfig tc;
  tc.order = order;
  e2e::NGramLM lm = e2e::train_lm_from_manifest(m, vocab, lex, tc);
  lm.save(out_path);
  std::vector<std::vector<int>> corpus;
  for (const auto& r : m.records) corpus.push_back(e2e::encode_transcript(r.transcript, vocab, lex));
  std::printf("trained %d-gram LM, train perplexity %.3f\n", lm.order(),
              lm.perplexity(corpus));
  if (!arpa_path.empty()) {
    std::ofstream arpa(arpa_path, std::ios::binary);
    lm.export_arpa(arpa, &vocab);
  }
  return kOk;
}

int cmd_train(const GlobalOpts& g) {
  e2e::Config cfg = g.load_config();
  std::ofstream log_file;
  const std::string log_path = cfg.get("train.log", "");
  if (!log_path.empty()) log_file.open(log_path, std::ios::binary | std::ios::app);
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    int overflow(int c) override {
      if (c != EOF) {
        a->sputc(static_cast<char>(c));
        if (b) b->sputc(static_cast<char>(c));
      }
      return c;
    }
  } tee;
  tee.a = std::cout.rdbuf();
  tee.b = log_file.is_open() ? log_file.rdbuf() : nullptr;
  std::ostream log(&tee);
  e2e::TrainResult r = e2e::run_training(cfg, log);
  log << "final checkpoint " << r.final_checkpoint << "\n";
  return kOk;
}

int cmd_decode(const GlobalOpts& g, const std::string& checkpoint,
               const std::string& manifest_path, const std::string& out_path) {
  e2e::Config cfg = g.load_config();
  e2e::Manifest m = e2e::Manifest::load(manifest_path);
  auto hyps = e2e::run_decode(checkpoint, m, cfg, g.threads);
  e2e::save_hypotheses(out_path, hyps);
  std::cout << "decoded " << hyps.size() << " utterances\n";
  return kOk;
}

int cmd_score(const std::string& hyp_path, const std::string& ref_path, bool per_utt) {
  auto hyps = e2e::load_hypotheses(hyp_path);
  e2e::Manifest ref = e2e::Manifest::load(ref_path);
  e2e::CorpusEval ev = e2e::run_score(hyps, ref);
  if (per_utt)
    for (const auto& [id, r] : ev.per_utt)
      std::printf("%s\tS=%lld D=%lld I=%lld N=%lld CER=%.2f%%\n", id.c_str(),
                  static_cast<long long>(r.subs), static_cast<long long>(r.dels),
                  static_cast<long long>(r.ins), static_cast<long long>(r.ref_len),
                  100.0 * r.error_rate());
  const auto& t = ev.total;
  std::printf("TOTAL\tS=%lld D=%lld I=%lld N=%lld CER=%.2f%%\n",
              static_cast<long long>(t.subs), static_cast<long long>(t.dels),
              static_cast<long long>(t.ins), static_cast<long long>(t.ref_len),
              100.0 * t.error_rate());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mandarin end-to-end speech recognition toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "configuration file (INI-style)");
  app.add_option("--seed", g.seed, "random seed override");
  app.add_option("--threads", g.threads, "worker threads for per-utterance stages");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic feature corpus");
  std::string sy_vocab, sy_model = "ctc", sy_out_dir, sy_manifest;
  int sy_make_units = 0;
  e2e::SynthConfig sc;
  synth->add_option("--vocab", sy_vocab, "unit vocabulary file")->required();
  synth->add_option("--make-units", sy_make_units,
                    "create a fresh vocabulary with N placeholder units first");
  synth->add_option("--model", sy_model, "vocabulary model kind for --make-units");
  synth->add_option("--out-dir", sy_out_dir, "feature output directory")->required();
  synth->add_option("--manifest", sy_manifest, "manifest output path")->required();
  synth->add_option("--n-utts", sc.n_utts, "utterance count")->required();
  synth->add_option("--min-len", sc.min_len, "min units per utterance");
  synth->add_option("--max-len", sc.max_len, "max units per utterance");
  synth->add_option("--feat-dim", sc.feat_dim, "feature dimension");
  synth->add_option("--noise-std", sc.noise_std, "additive noise level");
  synth->add_option("--markov-peak", sc.markov_peak,
                    "probability of following the fixed unit successor chain");
  synth->add_option("--utt-prefix", sc.utt_prefix, "utterance id prefix");

  // prep
  auto* prep = app.add_subcommand("prep", "extract filterbanks and global CMVN");
  std::string pr_in, pr_out_dir, pr_cmvn, pr_out;
  prep->add_option("--manifest", pr_in, "input manifest of wav files")->required();
  prep->add_option("--out-dir", pr_out_dir, "feature output directory")->required();
  prep->add_option("--cmvn", pr_cmvn, "CMVN stats output path")->required();
  prep->add_option("--out-manifest", pr_out, "rewritten manifest output")->required();

  // vocab
  auto* vocab = app.add_subcommand("vocab", "build a unit vocabulary from transcripts");
  std::string vo_manifest, vo_kind, vo_model, vo_lexicon, vo_out;
  int vo_budget = 0, vo_min_count = 1;
  vocab->add_option("--manifest", vo_manifest)->required();
  vocab->add_option("--kind", vo_kind, "cdp|syllable|char")->required();
  vocab->add_option("--model", vo_model, "ctc|attention")->required();
  vocab->add_option("--lexicon", vo_lexicon, "character-to-syllable lexicon TSV");
  vocab->add_option("--char-budget", vo_budget, "keep the N most frequent characters");
  vocab->add_option("--cdp-min-count", vo_min_count, "prune rarer triphones");
  vocab->add_option("--out", vo_out)->required();

  // lm-train
  auto* lmt = app.add_subcommand("lm-train", "train the n-gram unit language model");
  std::string lm_manifest, lm_vocab, lm_lexicon, lm_out, lm_arpa;
  int lm_order = 4;
  lmt->add_option("--manifest", lm_manifest)->required();
  lmt->add_option("--vocab", lm_vocab)->required();
  lmt->add_option("--lexicon", lm_lexicon);
  lmt->add_option("--order", lm_order, "n-gram order");
  lmt->add_option("--out", lm_out)->required();
  lmt->add_option("--arpa", lm_arpa, "also export ARPA-style text");

  // train
  auto* train = app.add_subcommand("train", "train a model per the config file");

  // decode
  auto* decode = app.add_subcommand("decode", "beam-search decode a manifest");
  std::string de_ckpt, de_manifest, de_out;
  decode->add_option("--checkpoint", de_ckpt)->required();
  decode->add_option("--manifest", de_manifest)->required();
  decode->add_option("--out", de_out)->required();

  // score
  auto* score = app.add_subcommand("score", "CER against a reference manifest");
  std::string sc_hyp, sc_ref;
  bool sc_per_utt = false;
  score->add_option("--hyp", sc_hyp, "hypothesis TSV")->required();
  score->add_option("--ref", sc_ref, "reference manifest")->required();
  score->add_flag("--per-utt", sc_per_utt, "print per-utterance breakdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidationError;
  }

  try {
    if (synth->parsed())
      return cmd_synth(g, sy_vocab, sy_make_units, sy_model, sy_out_dir, sy_manifest, sc);
    if (prep->parsed()) return cmd_prep(g, pr_in, pr_out_dir, pr_cmvn, pr_out);
    if (vocab->parsed())
      return cmd_vocab(vo_manifest, vo_kind, vo_model, vo_lexicon, vo_budget, vo_min_count,
                       vo_out);
    if (lmt->parsed())
      return cmd_lm_train(lm_manifest, lm_vocab, lm_lexicon, lm_order, lm_out, lm_arpa);
    if (train->parsed()) return cmd_train(g);
    if (decode->parsed()) return cmd_decode(g, de_ckpt, de_manifest, de_out);
    if (score->parsed()) return cmd_score(sc_hyp, sc_ref, sc_per_utt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kValidationError;
}
