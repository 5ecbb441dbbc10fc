// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "e2e/checkpoint.hpp"
#include "e2e/config.hpp"
#include "e2e/ctc.hpp"
#include "e2e/eval.hpp"
#include "e2e/pipeline.hpp"
#include "e2e/synth.hpp"

using namespace e2e;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("e2e_pipe_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

UnitVocabulary toy_vocab(int n_units, ModelKind model) {
  std::vector<std::string> units;
  for (int u = 0; u < n_units; ++u) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "u%02d", u);
    units.emplace_back(buf);
  }
  return UnitVocabulary(UnitKind::Character, model, std::move(units));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// plain recursion with memoization, counts edits only
int64_t edit_distance_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<int64_t>> memo(a.size() + 1,
                                         std::vector<int64_t>(b.size() + 1, -1));
  std::function<int64_t(size_t, size_t)> go = [&](size_t i, size_t j) -> int64_t {
    if (i == a.size()) return static_cast<int64_t>(b.size() - j);
    if (j == b.size()) return static_cast<int64_t>(a.size() - i);
    int64_t& m = memo[i][j];
    if (m >= 0) return m;
    int64_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return m = best;
  };
  return go(0, 0);
}

}  // namespace

// --- Config ------------------------------------------------------------------

TEST_CASE("config: sections, comments, typed access") {
  std::istringstream in(
      "# top comment\n"
      "[model]\n"
      "family = ctc\n"
      "layers=lstm hidden=32\n"
      "; another comment\n"
      "[train]\n"
      "epochs = 5\n"
      "lr_start = 1e-3\n"
      "shuffle = true\n");
  Config cfg = Config::parse(in);
  CHECK(cfg.get("model.family") == "ctc");
  CHECK(cfg.get("model.layers") == "lstm hidden=32");
  CHECK(cfg.get_int("train.epochs", 0) == 5);
  CHECK(cfg.get_double("train.lr_start", 0.0) == doctest::Approx(1e-3));
  CHECK(cfg.get_bool("train.shuffle", false));
  CHECK(cfg.get("train.missing", "dflt") == "dflt");
  CHECK_THROWS_WITH_AS(cfg.get("train.missing"), doctest::Contains("train.missing"),
                       std::invalid_argument);
  CHECK_THROWS_AS(cfg.get_int("model.family", 0), std::invalid_argument);

  std::istringstream bad("[x]\nno_equals_here\n");
  CHECK_THROWS_AS(Config::parse(bad), std::invalid_argument);
}

TEST_CASE("config hash depends on content, not construction order") {
  Config a, b, c;
  a.set("x.k1", "1");
  a.set("x.k2", "2");
  b.set("x.k2", "2");
  b.set("x.k1", "1");
  c.set("x.k1", "1");
  c.set("x.k2", "3");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

// --- Manifests and hypothesis files -------------------------------------------

TEST_CASE("manifest round trip and validation") {
  TempDir tmp("manifest");
  Manifest m;
  m.records.push_back({"utt_a", tmp.str("a.fbk"), "u00 u01"});
  m.records.push_back({"utt_b", tmp.str("b.fbk"), ""});
  m.save(tmp.str("train.tsv"));
  Manifest back = Manifest::load(tmp.str("train.tsv"));
  REQUIRE(back.size() == 2);
  CHECK(back.records[0].utt_id == "utt_a");
  CHECK(back.records[0].transcript == "u00 u01");
  CHECK(back.records[1].transcript.empty());
  back.validate(false);

  CHECK_THROWS_WITH_AS(back.validate(true), doctest::Contains("a.fbk"), std::invalid_argument);

  Manifest dup = back;
  dup.records.push_back(dup.records[0]);
  CHECK_THROWS_WITH_AS(dup.validate(false), doctest::Contains("utt_a"), std::invalid_argument);
}

TEST_CASE("hypothesis file round trip, both line shapes") {
  TempDir tmp("hyps");
  std::vector<HypLine> hyps(2);
  hyps[0] = {"utt_a", {"u00", "u02"}, -12.5, -3.25, 2, std::nullopt, std::nullopt};
  hyps[1] = {"utt_b", {"u01"}, -4.0, 0.0, 1, 3, -1.75};
  save_hypotheses(tmp.str("hyp.tsv"), hyps);
  auto back = load_hypotheses(tmp.str("hyp.tsv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].units == std::vector<std::string>{"u00", "u02"});
  CHECK(back[0].acoustic == doctest::Approx(-12.5));
  CHECK(!back[0].cov.has_value());
  CHECK(back[1].cov.value() == 3);
  CHECK(back[1].normalized.value() == doctest::Approx(-1.75));
}

// --- Error rate ----------------------------------------------------------------

TEST_CASE("error rate goldens") {
  CHECK(cer("abcd", "abcd").error_rate() == 0.0);
  // one missing character out of four: a single deletion, rate 0.25
  EvalReport r = cer("abcd", "abd");
  CHECK(r.dels == 1);
  CHECK(r.subs == 0);
  CHECK(r.ins == 0);
  CHECK(r.error_rate() == doctest::Approx(0.25));

  // backtrace prefers substitutions on equal cost
  EvalReport swapped = token_error_rate({"a", "b"}, {"b", "a"});
  CHECK(swapped.subs == 2);
  CHECK(swapped.ins == 0);
  CHECK(swapped.dels == 0);

  EvalReport longer = token_error_rate({"a"}, {"b", "c"});
  CHECK(longer.subs == 1);
  CHECK(longer.ins == 1);

  CHECK_THROWS_AS(token_error_rate({}, {"a"}), std::invalid_argument);

  // whitespace-joined transcripts compare by token, not code point
  CHECK(cer("u00 u01", "u00 u01").error_rate() == 0.0);
  CHECK(cer("u00 u01", "u00 u02").edits() == 1);
}

TEST_CASE("edit counts agree with a recursive oracle on random pairs") {
  std::mt19937_64 rng(111);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int it = 0; it < 120; ++it) {
    std::vector<std::string> ref(1 + rng() % 7), hyp(rng() % 8);
    for (auto& t : ref) t = alphabet[rng() % alphabet.size()];
    for (auto& t : hyp) t = alphabet[rng() % alphabet.size()];
    CHECK(token_error_rate(ref, hyp).edits() == edit_distance_oracle(ref, hyp));
  }
}

TEST_CASE("corpus aggregate is edit-sum over length-sum") {
  TempDir tmp("score");
  Manifest ref;
  ref.records.push_back({"u1", "", "a b c d"});  // 4 tokens
  ref.records.push_back({"u2", "", "x y"});      // 2 tokens
  ref.records.push_back({"u3", "", "p q"});      // 2 tokens
  std::vector<HypLine> hyps(3);
  hyps[0] = {"u1", {"a", "b", "d"}, 0, 0, 3, {}, {}};       // 1 deletion
  hyps[1] = {"u2", {"x", "y"}, 0, 0, 2, {}, {}};            // exact
  hyps[2] = {"u3", {"p", "r"}, 0, 0, 2, {}, {}};            // 1 substitution
  CorpusEval ev = run_score(hyps, ref);
  CHECK(ev.total.edits() == 2);
  CHECK(ev.total.ref_len == 8);
  CHECK(ev.total.error_rate() == doctest::Approx(0.25));
  REQUIRE(ev.per_utt.size() == 3);
  CHECK(ev.per_utt[0].second.dels == 1);
  CHECK(ev.per_utt[2].second.subs == 1);

  hyps[1].utt_id = "nope";
  CHECK_THROWS_WITH_AS(run_score(hyps, ref), doctest::Contains("nope"), std::invalid_argument);
}

// --- Synthetic corpus ----------------------------------------------------------

TEST_CASE("synthetic corpus is byte-identical per seed") {
  TempDir tmp("synth_det");
  UnitVocabulary vocab = toy_vocab(4, ModelKind::CTC);
  SynthConfig sc;
  sc.seed = 42;
  sc.n_utts = 6;
  sc.out_dir = tmp.str("a");
  Manifest ma = synth_corpus(sc, vocab);
  sc.out_dir = tmp.str("b");
  Manifest mb = synth_corpus(sc, vocab);
  REQUIRE(ma.size() == mb.size());
  for (size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma.records[i].utt_id == mb.records[i].utt_id);
    CHECK(ma.records[i].transcript == mb.records[i].transcript);
    CHECK(slurp(ma.records[i].path) == slurp(mb.records[i].path));
  }
  sc.n_utts = 0;
  sc.out_dir = tmp.str("c");
  CHECK(synth_corpus(sc, vocab).size() == 0);
}

TEST_CASE("noise-free utterances decompose into their unit templates") {
  TempDir tmp("synth_clean");
  UnitVocabulary vocab = toy_vocab(5, ModelKind::CTC);
  SynthConfig sc;
  sc.seed = 7;
  sc.n_utts = 8;
  sc.noise_std = 0.0;
  sc.out_dir = tmp.str("feats");
  Manifest m = synth_corpus(sc, vocab);
  auto templates = make_unit_templates(sc.seed, vocab.content_size(), sc);

  for (const auto& rec : m.records) {
    FeatureMatrix f = load_features(rec.path, rec.utt_id);
    std::vector<std::string> recovered;
    int row = 0;
    while (row < f.num_frames()) {
      int best = -1;
      for (size_t u = 0; u < templates.size(); ++u) {
        const Tensor& t = templates[u];
        if (row + t.dim(0) > f.num_frames()) continue;
        double err = 0.0;
        for (int r = 0; r < t.dim(0); ++r)
          for (int c = 0; c < sc.feat_dim; ++c)
            err += std::abs(f.frames.at(row + r, c) - t.at(r, c));
        if (err < 1e-4 * t.numel()) {
          best = static_cast<int>(u);
          break;
        }
      }
      REQUIRE(best >= 0);
      recovered.push_back(vocab.unit(best));
      row += templates[static_cast<size_t>(best)].dim(0);
    }
    std::string joined;
    for (size_t i = 0; i < recovered.size(); ++i) {
      if (i) joined += ' ';
      joined += recovered[i];
    }
    CHECK(joined == rec.transcript);
  }
}

// --- Checkpoints ----------------------------------------------------------------

TEST_CASE("checkpoint round trip stores the header and f32 parameters") {
  TempDir tmp("ckpt");
  std::vector<LayerSpec> specs = {LayerSpec::lstm(6), LayerSpec::linear(0, 4)};
  Network net(specs, 5);
  net.init_weights(3, InitPolicy::gaussian(0.2));
  CheckpointHeader h;
  h.family = "ctc";
  h.input_dim = 5;
  h.layers = specs;
  h.vocab_fingerprint = 0x1234abcd;
  h.extra["note"] = "toy";
  save_checkpoint(tmp.str("m.e2em"), h, net.params());

  std::string raw = slurp(tmp.str("m.e2em"));
  CHECK(raw.substr(0, 4) == "E2EM");

  Network other(specs, 5);
  auto params = other.params();
  CheckpointHeader back = load_checkpoint(tmp.str("m.e2em"), params);
  CHECK(back.family == "ctc");
  CHECK(back.input_dim == 5);
  CHECK(back.vocab_fingerprint == 0x1234abcd);
  CHECK(back.extra.at("note") == "toy");
  REQUIRE(back.layers.size() == specs.size());
  for (size_t i = 0; i < specs.size(); ++i)
    CHECK(back.layers[i].to_string() == specs[i].to_string());

  auto orig = net.params();
  for (size_t i = 0; i < orig.size(); ++i)
    for (int64_t j = 0; j < orig[i].value->numel(); ++j)
      CHECK((*params[i].value)[j] ==
            static_cast<double>(static_cast<float>((*orig[i].value)[j])));
}

// --- Training and decoding ------------------------------------------------------

namespace {

Config base_train_config(const TempDir& tmp, const std::string& family) {
  Config cfg;
  cfg.set("model.family", family);
  cfg.set("data.manifest", tmp.str("train.tsv"));
  cfg.set("data.vocab", tmp.str("vocab.txt"));
  cfg.set("train.checkpoint_dir", tmp.str("ckpt"));
  cfg.set("train.seed", "11");
  return cfg;
}

}  // namespace

TEST_CASE("ctc training drives the loss down and decodes what it trained on") {
  TempDir tmp("train_ctc");
  UnitVocabulary vocab = toy_vocab(5, ModelKind::CTC);
  vocab.save(tmp.str("vocab.txt"));
  SynthConfig sc;
  sc.seed = 5;
  sc.n_utts = 80;
  sc.min_len = 2;
  sc.max_len = 4;
  sc.out_dir = tmp.str("feats");
  Manifest m = synth_corpus(sc, vocab);
  m.save(tmp.str("train.tsv"));

  Config cfg = base_train_config(tmp, "ctc");
  cfg.set("model.layers", "blstm hidden=24");
  cfg.set("train.epochs", "12");
  cfg.set("train.lr_end", "1e-4");
  std::ostringstream log;
  TrainResult res = run_training(cfg, log);
  REQUIRE(res.epoch_loss.size() == 12);
  CHECK(res.epoch_loss.back() <= res.epoch_loss.front());
  CHECK(log.str().find("epoch 1") != std::string::npos);
  CHECK(fs::exists(res.final_checkpoint));

  // learning rate follows the configured schedule downward
  CHECK(res.epoch_lr.back() < res.epoch_lr.front());

  cfg.set("decode.beam_width", "4");
  auto hyps = run_decode(res.final_checkpoint, m, cfg, 2);
  CHECK(hyps.size() == m.size());  // one line per record, in order
  for (size_t i = 0; i < hyps.size(); ++i) CHECK(hyps[i].utt_id == m.records[i].utt_id);

  // decoding is deterministic regardless of thread count
  auto again = run_decode(res.final_checkpoint, m, cfg, 1);
  REQUIRE(again.size() == hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    CHECK(again[i].units == hyps[i].units);
    CHECK(again[i].acoustic == hyps[i].acoustic);
  }

  // a width-1 beam agrees with greedy decoding on these sharp posteriors
  CheckpointHeader header = read_checkpoint_header(res.final_checkpoint);
  Network net(header.layers, header.input_dim);
  auto params = net.params();
  load_checkpoint(res.final_checkpoint, params);
  cfg.set("decode.beam_width", "1");
  auto beam1 = run_decode(res.final_checkpoint, m, cfg, 2);
  for (size_t i = 0; i < m.size(); ++i) {
    FeatureMatrix f = load_features(m.records[i].path, m.records[i].utt_id);
    Tensor post = log_softmax_rows(net.forward(f.frames, false));
    auto greedy = greedy_decode(post, vocab.blank_id());
    std::vector<std::string> greedy_units;
    for (int id : greedy) greedy_units.push_back(vocab.unit(id));
    CHECK(beam1[i].units == greedy_units);
  }

  // the toy task is learnable: scoring against the references is sane
  CorpusEval ev = run_score(hyps, m);
  CHECK(ev.total.ref_len > 0);
  CHECK(ev.total.error_rate() < 1.0);
}

TEST_CASE("attention training drives the loss down") {
  TempDir tmp("train_att");
  UnitVocabulary vocab = toy_vocab(5, ModelKind::Attention);
  vocab.save(tmp.str("vocab.txt"));
  SynthConfig sc;
  sc.seed = 9;
  sc.n_utts = 20;
  sc.min_len = 2;
  sc.max_len = 3;
  sc.out_dir = tmp.str("feats");
  Manifest m = synth_corpus(sc, vocab);
  m.save(tmp.str("train.tsv"));

  Config cfg = base_train_config(tmp, "attention");
  cfg.set("model.encoder", "lstm hidden=16");
  cfg.set("model.embed_dim", "8");
  cfg.set("model.dec_hidden", "16");
  cfg.set("model.attn_dim", "8");
  cfg.set("train.epochs", "5");
  cfg.set("train.p_ss", "0.0");
  std::ostringstream log;
  TrainResult res = run_training(cfg, log);
  REQUIRE(res.epoch_loss.size() == 5);
  CHECK(res.epoch_loss.back() <= res.epoch_loss.front());

  cfg.set("decode.beam_width", "4");
  cfg.set("decode.max_len", "8");
  auto hyps = run_decode(res.final_checkpoint, m, cfg, 2);
  REQUIRE(hyps.size() == m.size());
  for (const auto& h : hyps) {
    CHECK(h.cov.has_value());  // attention lines carry the extra columns
    CHECK(h.normalized.has_value());
  }
}

TEST_CASE("resumed training is bit-identical to an uninterrupted run") {
  TempDir tmp("resume");
  UnitVocabulary vocab = toy_vocab(4, ModelKind::CTC);
  vocab.save(tmp.str("vocab.txt"));
  SynthConfig sc;
  sc.seed = 13;
  sc.n_utts = 12;
  sc.min_len = 2;
  sc.max_len = 3;
  sc.out_dir = tmp.str("feats");
  synth_corpus(sc, vocab).save(tmp.str("train.tsv"));

  Config cfg = base_train_config(tmp, "ctc");
  cfg.set("model.layers", "lstm hidden=12");
  cfg.set("train.epochs", "4");
  cfg.set("train.checkpoint_every", "2");
  std::ostringstream log;

  cfg.set("train.checkpoint_dir", tmp.str("full"));
  TrainResult full = run_training(cfg, log);

  // pick the run up again from its mid-point checkpoint in a fresh directory
  cfg.set("train.checkpoint_dir", tmp.str("cont"));
  cfg.set("train.resume", (fs::path(tmp.str("full")) / "epoch_2.e2em").string());
  TrainResult resumed = run_training(cfg, log);

  CHECK(resumed.epoch_loss.size() == 2);  // only epochs 3 and 4 remain
  CHECK(slurp(resumed.final_checkpoint) == slurp(full.final_checkpoint));
  CHECK(slurp(resumed.final_checkpoint + ".opt") == slurp(full.final_checkpoint + ".opt"));
}

TEST_CASE("family and vocabulary must match") {
  TempDir tmp("pairing");
  UnitVocabulary vocab = toy_vocab(4, ModelKind::Attention);
  vocab.save(tmp.str("vocab.txt"));
  SynthConfig sc;
  sc.seed = 3;
  sc.n_utts = 2;
  sc.out_dir = tmp.str("feats");
  synth_corpus(sc, vocab).save(tmp.str("train.tsv"));

  Config cfg = base_train_config(tmp, "ctc");
  cfg.set("model.layers", "lstm hidden=8");
  cfg.set("train.epochs", "1");
  std::ostringstream log;
  CHECK_THROWS_AS(run_training(cfg, log), std::invalid_argument);

  cfg.set("model.family", "qrnn");
  CHECK_THROWS_WITH_AS(run_training(cfg, log), doctest::Contains("qrnn"),
                       std::invalid_argument);
}

// --- Feature prep ----------------------------------------------------------------

TEST_CASE("prep extracts normalized features and rewrites the manifest") {
  TempDir tmp("prep");
  Manifest in;
  std::mt19937_64 rng(17);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> audio(1600);
    for (size_t j = 0; j < audio.size(); ++j)
      audio[j] = 0.4 * std::sin(0.01 * (1 + i) * static_cast<double>(j)) +
                 0.01 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5);
    const std::string wav = tmp.str("w" + std::to_string(i) + ".wav");
    write_wav(wav, audio, 8000);
    in.records.push_back({"utt_" + std::to_string(i), wav, "u00"});
  }
  FbankConfig fb;
  fb.sample_rate = 8000;
  fb.n_mels = 12;
  Manifest out = run_prep(in, fb, tmp.str("feats"), tmp.str("cmvn.txt"), 2);
  REQUIRE(out.size() == 3);
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out.records[i].utt_id == in.records[i].utt_id);
    CHECK(out.records[i].transcript == in.records[i].transcript);
    CHECK(out.records[i].path.find(".fbk") != std::string::npos);
    FeatureMatrix f = load_features(out.records[i].path, out.records[i].utt_id);
    CHECK(f.dim() == 12);
    CHECK(f.num_frames() > 0);
  }
  CMVNStats stats = CMVNStats::load(tmp.str("cmvn.txt"));
  CHECK(stats.count > 0);

  // normalization used the global stats: pooled mean of the outputs is zero
  CMVNStats pooled;
  for (const auto& rec : out.records) pooled.accumulate(load_features(rec.path, rec.utt_id));
  for (double mu : pooled.mean()) CHECK(std::abs(mu) < 1e-6);
}
