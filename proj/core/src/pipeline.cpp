// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "e2e/attention.hpp"
#include "e2e/checkpoint.hpp"
#include "e2e/ctc.hpp"
#include "e2e/layers.hpp"
#include "e2e/optimizer.hpp"

namespace e2e {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

// --- Manifests ---------------------------------------------------------------

void Manifest::validate(bool check_files) const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.utt_id.empty()) throw std::invalid_argument("manifest record with empty utt_id");
    if (!seen.insert(r.utt_id).second)
      throw std::invalid_argument("duplicate utt_id in manifest: " + r.utt_id);
    if (check_files && !std::filesystem::exists(r.path))
      throw std::invalid_argument("manifest references missing file: " + r.path +
                                  " (utt " + r.utt_id + ")");
  }
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& r : records)
    out << r.utt_id << '\t' << r.path << '\t' << r.transcript << '\n';
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() < 2 || f.size() > 3)
      throw std::invalid_argument("manifest line " + std::to_string(lineno) +
                                  ": expected utt_id<TAB>path[<TAB>transcript]");
    ManifestRecord r;
    r.utt_id = f[0];
    r.path = f[1];
    if (f.size() == 3) r.transcript = f[2];
    m.records.push_back(std::move(r));
  }
  m.validate(false);
  return m;
}

// --- Hypothesis files --------------------------------------------------------

void save_hypotheses(const std::string& path, const std::vector<HypLine>& hyps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write hypothesis file: " + path);
  for (const auto& h : hyps) {
    out << h.utt_id << '\t';
    for (size_t i = 0; i < h.units.size(); ++i) {
      if (i) out << ' ';
      out << h.units[i];
    }
    out << '\t' << fmt(h.acoustic) << '\t' << fmt(h.lm) << '\t' << h.unit_count;
    if (h.cov.has_value()) out << '\t' << *h.cov << '\t' << fmt(h.normalized.value_or(0.0));
    out << '\n';
  }
}

std::vector<HypLine> load_hypotheses(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open hypothesis file: " + path);
  std::vector<HypLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 5 && f.size() != 7)
      throw std::invalid_argument("hypothesis line " + std::to_string(lineno) +
                                  ": expected 5 or 7 tab-separated fields");
    HypLine h;
    h.utt_id = f[0];
    std::istringstream us(f[1]);
    std::string u;
    while (us >> u) h.units.push_back(u);
    h.acoustic = std::stod(f[2]);
    h.lm = std::stod(f[3]);
    h.unit_count = std::stoi(f[4]);
    if (f.size() == 7) {
      h.cov = std::stoi(f[5]);
      h.normalized = std::stod(f[6]);
    }
    out.push_back(std::move(h));
  }
  return out;
}

// --- Feature prep -------------------------------------------------------------

Manifest run_prep(const Manifest& in, const FbankConfig& fbank, const std::string& out_dir,
                  const std::string& cmvn_path, int threads) {
  in.validate(true);
  std::filesystem::create_directories(out_dir);
  const int n = static_cast<int>(in.size());
  std::vector<FeatureMatrix> feats(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    const auto& r = in.records[static_cast<size_t>(i)];
    WavData wav = read_wav(r.path);
    FbankConfig cfg = fbank;
    cfg.sample_rate = wav.sample_rate;
    feats[static_cast<size_t>(i)] = extract_fbank(wav.samples, cfg, r.utt_id);
  });
  CMVNStats stats;
  for (const auto& f : feats) stats.accumulate(f);
  stats.save(cmvn_path);

  Manifest out = in;
  parallel_for(n, threads, [&](int i) {
    auto& r = out.records[static_cast<size_t>(i)];
    r.path = (std::filesystem::path(out_dir) / (r.utt_id + ".fbk")).string();
    save_features(r.path, apply_cmvn(feats[static_cast<size_t>(i)], stats));
  });
  return out;
}

// --- LM training ---------------------------------------------------------------

NGramLM train_lm_from_manifest(const Manifest& manifest, const UnitVocabulary& vocab,
                               const Lexicon& lex, const NGramLM::TrainConfig& config) {
  std::vector<std::vector<int>> corpus;
  corpus.reserve(manifest.size());
  for (const auto& r : manifest.records)
    corpus.push_back(encode_transcript(r.transcript, vocab, lex));
  return NGramLM::train(corpus, vocab.size(), config, vocab.fingerprint());
}

// --- Training -------------------------------------------------------------------

namespace {

std::vector<LayerSpec> parse_layer_stack(const std::string& text) {
  std::vector<LayerSpec> specs;
  std::istringstream is(text);
  std::string piece;
  while (std::getline(is, piece, ';')) {
    size_t a = piece.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    size_t b = piece.find_last_not_of(" \t");
    specs.push_back(LayerSpec::from_string(piece.substr(a, b - a + 1)));
  }
  if (specs.empty()) throw std::invalid_argument("empty layer stack");
  return specs;
}

void fisher_yates(std::vector<int>* order, std::mt19937_64& rng) {
  for (size_t i = order->size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap((*order)[i - 1], (*order)[j]);
  }
}

// Optimizer sidecar for bit-exact resume: "E2OS", u32 version, i64 next
// epoch, Adam state in f64, serialized RNG stream.
void save_sidecar(const std::string& path, int next_epoch, const Adam::State& adam,
                  const std::mt19937_64& rng) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write optimizer state: " + path);
  auto put_u32 = [&out](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_i64 = [&out](int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  out.write("E2OS", 4);
  put_u32(1);
  put_i64(next_epoch);
  put_i64(adam.step);
  put_u32(static_cast<uint32_t>(adam.m.size()));
  for (size_t p = 0; p < adam.m.size(); ++p) {
    put_i64(static_cast<int64_t>(adam.m[p].size()));
    out.write(reinterpret_cast<const char*>(adam.m[p].data()),
              static_cast<std::streamsize>(adam.m[p].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(adam.v[p].data()),
              static_cast<std::streamsize>(adam.v[p].size() * sizeof(double)));
  }
  std::ostringstream rs;
  rs << rng;
  const std::string rstr = rs.str();
  put_u32(static_cast<uint32_t>(rstr.size()));
  out.write(rstr.data(), static_cast<std::streamsize>(rstr.size()));
}

void load_sidecar(const std::string& path, int* next_epoch, Adam::State* adam,
                  std::mt19937_64* rng) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open optimizer state: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "E2OS")
    throw std::runtime_error("not an optimizer state file: " + path);
  auto get_u32 = [&in]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_i64 = [&in]() {
    int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (get_u32() != 1) throw std::runtime_error("unsupported optimizer state version");
  *next_epoch = static_cast<int>(get_i64());
  adam->step = get_i64();
  const uint32_t np = get_u32();
  adam->m.resize(np);
  adam->v.resize(np);
  for (uint32_t p = 0; p < np; ++p) {
    const size_t len = static_cast<size_t>(get_i64());
    adam->m[p].resize(len);
    adam->v[p].resize(len);
    in.read(reinterpret_cast<char*>(adam->m[p].data()),
            static_cast<std::streamsize>(len * sizeof(double)));
    in.read(reinterpret_cast<char*>(adam->v[p].data()),
            static_cast<std::streamsize>(len * sizeof(double)));
  }
  const uint32_t rlen = get_u32();
  std::string rstr(rlen, '\0');
  in.read(rstr.data(), rlen);
  if (!in) throw std::runtime_error("truncated optimizer state: " + path);
  std::istringstream rs(rstr);
  rs >> *rng;
}

struct LoadedData {
  std::vector<FeatureMatrix> feats;
  std::vector<std::vector<int>> targets;
  int input_dim = 0;
};

LoadedData load_training_data(const Manifest& manifest, const UnitVocabulary& vocab,
                              const Lexicon& lex, const std::string& cmvn_path) {
  LoadedData d;
  CMVNStats stats;
  const bool cmvn = !cmvn_path.empty();
  if (cmvn) stats = CMVNStats::load(cmvn_path);
  for (const auto& r : manifest.records) {
    FeatureMatrix f = load_features(r.path, r.utt_id);
    if (cmvn) f = apply_cmvn(f, stats);
    if (d.input_dim == 0)
      d.input_dim = f.dim();
    else if (f.dim() != d.input_dim)
      throw std::invalid_argument("feature dimension mismatch at utt " + r.utt_id);
    d.feats.push_back(std::move(f));
    d.targets.push_back(encode_transcript(r.transcript, vocab, lex));
  }
  return d;
}

int ctc_min_frames(const std::vector<int>& target) {
  int need = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

}  // namespace

TrainResult run_training(const Config& cfg, std::ostream& log) {
  const std::string family = cfg.get("model.family");
  if (family != "ctc" && family != "attention")
    throw std::invalid_argument("model.family must be 'ctc' or 'attention', got " + family);
  const bool is_ctc = family == "ctc";

  Manifest manifest = Manifest::load(cfg.get("data.manifest"));
  manifest.validate(true);
  if (manifest.records.empty()) throw std::invalid_argument("empty training manifest");

  UnitVocabulary vocab = UnitVocabulary::load(cfg.get("data.vocab"));
  if (is_ctc && vocab.model_kind() != ModelKind::CTC)
    throw std::invalid_argument("vocabulary was built for the attention family");
  if (!is_ctc && vocab.model_kind() != ModelKind::Attention)
    throw std::invalid_argument("vocabulary was built for the CTC family");
  Lexicon lex;
  if (cfg.has("data.lexicon")) lex = Lexicon::load(cfg.get("data.lexicon"));
  if (vocab.unit_kind() != UnitKind::Character && lex.size() == 0)
    throw std::invalid_argument("syllable/CDP vocabularies need data.lexicon");

  LoadedData data = load_training_data(manifest, vocab, lex, cfg.get("data.cmvn", ""));

  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed", 1));
  const int epochs = static_cast<int>(cfg.get_int("train.epochs", 10));
  const int checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every", 1));
  const std::string ckpt_dir = cfg.get("train.checkpoint_dir");
  std::filesystem::create_directories(ckpt_dir);

  AdamConfig adam_cfg;
  adam_cfg.weight_decay = cfg.get_double("train.weight_decay", 1e-5);
  adam_cfg.clip_norm = cfg.get_double("train.clip_norm", is_ctc ? 0.0 : 5.0);
  adam_cfg.schedule.lr_start = cfg.get_double("train.lr_start", is_ctc ? 1e-3 : 5e-4);
  adam_cfg.schedule.lr_end = cfg.get_double("train.lr_end", is_ctc ? 1e-6 : 5e-6);
  adam_cfg.schedule.total_steps =
      static_cast<int64_t>(epochs) * static_cast<int64_t>(manifest.size());

  // model construction (shared path for fresh start and resume)
  std::unique_ptr<Network> net;
  std::unique_ptr<AttentionModel> att;
  CheckpointHeader header;
  header.family = family;
  header.input_dim = data.input_dim;
  header.vocab_fingerprint = vocab.fingerprint();
  if (is_ctc) {
    header.layers = parse_layer_stack(cfg.get("model.layers"));
    header.layers.push_back(LayerSpec::linear(0, vocab.size()));
    net = std::make_unique<Network>(header.layers, data.input_dim);
  } else {
    AttentionModelConfig mc;
    mc.input_dim = data.input_dim;
    mc.encoder = parse_layer_stack(cfg.get("model.encoder"));
    mc.vocab_size = vocab.size();
    mc.sos_id = vocab.sos_id();
    mc.eos_id = vocab.eos_id();
    mc.embed_dim = static_cast<int>(cfg.get_int("model.embed_dim", 32));
    mc.dec_hidden = static_cast<int>(cfg.get_int("model.dec_hidden", 64));
    mc.attn_dim = static_cast<int>(cfg.get_int("model.attn_dim", 32));
    header.layers = mc.encoder;
    header.extra["embed_dim"] = std::to_string(mc.embed_dim);
    header.extra["dec_hidden"] = std::to_string(mc.dec_hidden);
    header.extra["attn_dim"] = std::to_string(mc.attn_dim);
    header.extra["vocab_size"] = std::to_string(mc.vocab_size);
    header.extra["sos_id"] = std::to_string(mc.sos_id);
    header.extra["eos_id"] = std::to_string(mc.eos_id);
    att = std::make_unique<AttentionModel>(mc);
  }
  auto params = is_ctc ? net->params() : att->params();

  Adam adam(adam_cfg);
  std::mt19937_64 rng(seed);
  int start_epoch = 0;

  if (cfg.has("train.resume")) {
    const std::string resume = cfg.get("train.resume");
    CheckpointHeader stored = load_checkpoint(resume, params);
    if (stored.family != family)
      throw std::invalid_argument("resume checkpoint family " + stored.family +
                                  " does not match config family " + family);
    if (stored.vocab_fingerprint != vocab.fingerprint())
      throw std::invalid_argument("resume checkpoint vocabulary fingerprint mismatch");
    Adam::State st;
    load_sidecar(resume + ".opt", &start_epoch, &st, &rng);
    adam.load_state(st);
  } else {
    const std::string init = cfg.get("train.init", is_ctc ? "uniform_fanin" : "gaussian");
    InitPolicy policy = init == "gaussian"
                            ? InitPolicy::gaussian(cfg.get_double("train.init_variance", 0.1))
                            : InitPolicy::uniform_fanin();
    if (init != "gaussian" && init != "uniform_fanin")
      throw std::invalid_argument("train.init must be gaussian or uniform_fanin");
    init_params(params, seed, policy);
  }

  // attention extras: label smoothing over the empirical unigram; schedule
  // sampling ramps linearly from 0 to p_ss over the first half of training
  const double p_ss_max = cfg.get_double("train.p_ss", 0.1);
  const double smoothing_eps = cfg.get_double("train.smoothing_eps", 0.05);
  std::vector<double> unigram;
  if (!is_ctc) {
    unigram.assign(static_cast<size_t>(vocab.size()), 1.0);  // add-one floor
    double total = static_cast<double>(vocab.size());
    for (const auto& tgt : data.targets) {
      for (int id : tgt) unigram[static_cast<size_t>(id)] += 1.0;
      unigram[static_cast<size_t>(vocab.eos_id())] += 1.0;
      total += static_cast<double>(tgt.size() + 1);
    }
    for (double& u : unigram) u /= total;
  }

  char hashbuf[32];
  std::snprintf(hashbuf, sizeof(hashbuf), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  log << "config_hash=" << hashbuf << " family=" << family
      << " utts=" << manifest.size() << " params="
      << (is_ctc ? net->num_params() : att->num_params()) << "\n";

  const int n = static_cast<int>(manifest.size());
  std::vector<int> order(static_cast<size_t>(n));
  TrainResult result;

  auto checkpoint_at = [&](const std::string& path, int next_epoch) {
    header.extra["epoch"] = std::to_string(next_epoch);
    save_checkpoint(path, header, params);
    save_sidecar(path + ".opt", next_epoch, adam.save_state(), rng);
    // round-trip through the stored f32 values so continuing this run and
    // resuming from the file stay bit-identical
    load_checkpoint(path, params);
  };

  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    fisher_yates(&order, rng);
    double loss_sum = 0.0;
    int counted = 0, skipped = 0;
    for (int idx : order) {
      const auto& feats = data.feats[static_cast<size_t>(idx)].frames;
      const auto& target = data.targets[static_cast<size_t>(idx)];
      if (target.empty()) {
        ++skipped;
        continue;
      }
      if (is_ctc) {
        if (net->output_len(feats.dim(0)) < ctc_min_frames(target)) {
          ++skipped;
          continue;
        }
        net->zero_grad();
        Tensor logits = net->forward(feats, true);
        CtcLossResult r = ctc_loss(logits, target, vocab.blank_id());
        net->backward(r.grad);
        adam.step(params);
        loss_sum += r.loss / static_cast<double>(target.size());
      } else {
        const double half = std::max(1.0, epochs / 2.0);
        const double p_ss = p_ss_max * std::min(1.0, epoch / half);
        att->zero_grad();
        const double loss = att->train_step(feats, target, p_ss, smoothing_eps, unigram, &rng);
        adam.step(params);
        loss_sum += loss;
      }
      ++counted;
    }
    const double mean_loss = counted ? loss_sum / counted : 0.0;
    result.epoch_loss.push_back(mean_loss);
    result.epoch_lr.push_back(adam.current_lr());
    log << "epoch " << (epoch + 1) << " loss " << fmt(mean_loss) << " lr "
        << adam.current_lr();
    if (skipped) log << " skipped " << skipped;
    log << "\n";
    log.flush();
    if ((epoch + 1) % checkpoint_every == 0 && epoch + 1 < epochs) {
      checkpoint_at((std::filesystem::path(ckpt_dir) /
                     ("epoch_" + std::to_string(epoch + 1) + ".e2em"))
                        .string(),
                    epoch + 1);
    }
  }
  result.final_checkpoint = (std::filesystem::path(ckpt_dir) / "final.e2em").string();
  checkpoint_at(result.final_checkpoint, epochs);
  return result;
}

// --- Decoding -------------------------------------------------------------------

std::vector<HypLine> run_decode(const std::string& checkpoint_path, const Manifest& manifest,
                                const Config& cfg, int threads) {
  manifest.validate(true);
  const CheckpointHeader header = read_checkpoint_header(checkpoint_path);
  UnitVocabulary vocab = UnitVocabulary::load(cfg.get("data.vocab"));
  if (vocab.fingerprint() != header.vocab_fingerprint)
    throw std::invalid_argument("vocabulary does not match the checkpoint fingerprint");

  NGramLM lm;
  const bool use_lm = cfg.has("decode.lm");
  if (use_lm) {
    lm = NGramLM::load(cfg.get("decode.lm"));
    if (lm.vocab_fingerprint() != 0 && lm.vocab_fingerprint() != vocab.fingerprint())
      throw std::invalid_argument("LM does not match the decode vocabulary fingerprint");
  }

  CMVNStats cmvn;
  const bool have_cmvn = cfg.has("data.cmvn");
  if (have_cmvn) cmvn = CMVNStats::load(cfg.get("data.cmvn"));
  auto load_input = [&](const ManifestRecord& r) {
    if (r.path.size() >= 4 && r.path.compare(r.path.size() - 4, 4, ".wav") == 0) {
      WavData wav = read_wav(r.path);
      FbankConfig fb;
      fb.sample_rate = wav.sample_rate;
      fb.n_mels = static_cast<int>(cfg.get_int("features.n_mels", 40));
      FeatureMatrix f = extract_fbank(wav.samples, fb, r.utt_id);
      return have_cmvn ? apply_cmvn(f, cmvn) : f;
    }
    return load_features(r.path, r.utt_id);
  };

  const int n = static_cast<int>(manifest.size());
  std::vector<HypLine> out(static_cast<size_t>(n));
  threads = std::max(1, std::min(threads, n == 0 ? 1 : n));

  if (header.family == "ctc") {
    CtcDecodeConfig dc;
    dc.beam_width = static_cast<int>(cfg.get_int("decode.beam_width", 8));
    dc.alpha = cfg.get_double("decode.alpha", 0.0);
    dc.beta = cfg.get_double("decode.beta_wc", 0.0);
    dc.lm = use_lm ? &lm : nullptr;
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        try {
          Network net(header.layers, header.input_dim);  // per-thread caches
          auto p = net.params();
          load_checkpoint(checkpoint_path, p);
          for (int i = t; i < n; i += threads) {
            const auto& r = manifest.records[static_cast<size_t>(i)];
            FeatureMatrix f = load_input(r);
            Tensor post = log_softmax_rows(net.forward(f.frames, false));
            auto hyps = prefix_beam_search(post, vocab.blank_id(), dc);
            HypLine h;
            h.utt_id = r.utt_id;
            if (!hyps.empty()) {
              const auto& best = hyps.front();
              for (int id : best.labels) h.units.push_back(vocab.unit(id));
              h.acoustic = best.acoustic_score;
              h.lm = best.lm_score;
              h.unit_count = best.unit_count;
            }
            out[static_cast<size_t>(i)] = std::move(h);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  } else if (header.family == "attention") {
    AttentionModelConfig mc;
    mc.input_dim = header.input_dim;
    mc.encoder = header.layers;
    mc.vocab_size = header.extra_int("vocab_size");
    mc.sos_id = header.extra_int("sos_id");
    mc.eos_id = header.extra_int("eos_id");
    mc.embed_dim = header.extra_int("embed_dim");
    mc.dec_hidden = header.extra_int("dec_hidden");
    mc.attn_dim = header.extra_int("attn_dim");
    AttnDecodeConfig dc;
    dc.beam_width = static_cast<int>(cfg.get_int("decode.beam_width", 8));
    dc.gamma = cfg.get_double("decode.gamma", 0.0);
    dc.beta_cov = cfg.get_double("decode.beta_cov", 0.0);
    dc.lambda = cfg.get_double("decode.lambda", 0.0);
    dc.tau = cfg.get_double("decode.tau", 0.5);
    dc.max_len = static_cast<int>(cfg.get_int("decode.max_len", 64));
    dc.lm = use_lm ? &lm : nullptr;
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        try {
          AttentionModel model(mc);
          auto p = model.params();
          load_checkpoint(checkpoint_path, p);
          for (int i = t; i < n; i += threads) {
            const auto& r = manifest.records[static_cast<size_t>(i)];
            FeatureMatrix f = load_input(r);
            Tensor enc = model.encode(f.frames, false);
            auto hyps = model.beam_search(enc, dc);
            HypLine h;
            h.utt_id = r.utt_id;
            if (!hyps.empty()) {
              const auto& best = hyps.front();
              for (int id : best.labels) h.units.push_back(vocab.unit(id));
              h.acoustic = best.att_score;
              h.lm = best.lm_score;
              h.unit_count = static_cast<int>(best.labels.size());
              h.cov = best.cov;
              h.normalized = best.normalized_score;
            }
            out[static_cast<size_t>(i)] = std::move(h);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  } else {
    throw std::runtime_error("unknown checkpoint family: " + header.family);
  }
  return out;
}

// --- Scoring --------------------------------------------------------------------

CorpusEval run_score(const std::vector<HypLine>& hyps, const Manifest& reference) {
  std::map<std::string, const ManifestRecord*> refs;
  for (const auto& r : reference.records) refs[r.utt_id] = &r;
  CorpusEval out;
  for (const auto& h : hyps) {
    auto it = refs.find(h.utt_id);
    if (it == refs.end())
      throw std::invalid_argument("hypothesis utt_id not in reference manifest: " + h.utt_id);
    EvalReport r = token_error_rate(tokenize_transcript(it->second->transcript), h.units);
    out.total.merge(r);
    out.per_utt.emplace_back(h.utt_id, r);
  }
  return out;
}

}  // namespace e2e
