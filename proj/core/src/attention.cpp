// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace e2e {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void softmax_inplace(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

}  // namespace

int coverage(const std::vector<double>& cumulative_attention, double tau) {
  int n = 0;
  for (double a : cumulative_attention)
    if (a > tau) ++n;
  return n;
}

double attn_total_score(const AttnHypothesis& h, const AttnDecodeConfig& cfg) {
  return h.normalized_score + cfg.beta_cov * h.cov + cfg.lambda * h.lm_score;
}

AttentionModel::AttentionModel(AttentionModelConfig config)
    : cfg_(std::move(config)), encoder_(cfg_.encoder, cfg_.input_dim) {
  if (cfg_.vocab_size <= 0) throw std::invalid_argument("attention vocab_size must be > 0");
  if (cfg_.sos_id < 0 || cfg_.eos_id < 0)
    throw std::invalid_argument("attention model needs <sos>/<eos> ids");
  enc_dim_ = encoder_.output_dim();
  const int E = cfg_.embed_dim, H = cfg_.dec_hidden, A = cfg_.attn_dim, V = cfg_.vocab_size;
  const int I = E + enc_dim_;
  embed_ = Tensor({V, E});
  gembed_ = Tensor({V, E});
  wx_ = Tensor({I, 4 * H});
  wh_ = Tensor({H, 4 * H});
  b_ = Tensor({4 * H});
  gwx_ = Tensor({I, 4 * H});
  gwh_ = Tensor({H, 4 * H});
  gb_ = Tensor({4 * H});
  ws_ = Tensor({H, A});
  we_ = Tensor({enc_dim_, A});
  ba_ = Tensor({A});
  va_ = Tensor({A});
  gws_ = Tensor({H, A});
  gwe_ = Tensor({enc_dim_, A});
  gba_ = Tensor({A});
  gva_ = Tensor({A});
  wo_ = Tensor({H + enc_dim_, V});
  bo_ = Tensor({V});
  gwo_ = Tensor({H + enc_dim_, V});
  gbo_ = Tensor({V});
}

Tensor AttentionModel::encode(const Tensor& feats, bool train) {
  if (feats.dim(0) < 1) throw std::invalid_argument("empty feature matrix");
  return encoder_.forward(feats, train);
}

AttentionModel::DecoderState AttentionModel::initial_state(int encoded_len) const {
  DecoderState st;
  st.h.assign(static_cast<size_t>(cfg_.dec_hidden), 0.0);
  st.c.assign(static_cast<size_t>(cfg_.dec_hidden), 0.0);
  st.context.assign(static_cast<size_t>(enc_dim_), 0.0);
  st.cum_attn.assign(static_cast<size_t>(encoded_len), 0.0);
  return st;
}

Tensor AttentionModel::project_encoder(const Tensor& enc) const {
  Tensor proj({enc.dim(0), cfg_.attn_dim});
  matmul(enc, we_, &proj);
  return proj;
}

void AttentionModel::attend(const std::vector<double>& dec_hidden, const Tensor& enc,
                            std::vector<double>* context, std::vector<double>* weights) const {
  const int U = enc.dim(0), A = cfg_.attn_dim, H = cfg_.dec_hidden;
  const Tensor proj = project_encoder(enc);
  std::vector<double> s_proj(static_cast<size_t>(A), 0.0);
  for (int h = 0; h < H; ++h)
    for (int a = 0; a < A; ++a) s_proj[static_cast<size_t>(a)] += dec_hidden[static_cast<size_t>(h)] * ws_.at(h, a);
  std::vector<double> scores(static_cast<size_t>(U));
  for (int j = 0; j < U; ++j) {
    double e = 0.0;
    for (int a = 0; a < A; ++a)
      e += va_[a] * std::tanh(s_proj[static_cast<size_t>(a)] + proj.at(j, a) + ba_[a]);
    scores[static_cast<size_t>(j)] = e;
  }
  softmax_inplace(scores);
  context->assign(static_cast<size_t>(enc_dim_), 0.0);
  for (int j = 0; j < U; ++j)
    for (int k = 0; k < enc_dim_; ++k)
      (*context)[static_cast<size_t>(k)] += scores[static_cast<size_t>(j)] * enc.at(j, k);
  if (weights) *weights = scores;
}

// ---------------------------------------------------------------------------
// Single decoder step with full caching for BPTT.

struct AttentionModel::StepCache {
  std::vector<double> x_in;       // [E + Henc]
  std::vector<double> h_prev, c_prev;
  std::vector<double> gates;      // [4H] post-activation i,f,g,o
  std::vector<double> c_new, s;   // [H]
  std::vector<double> tanh_z;     // [U*A]
  std::vector<double> alpha;      // [U]
  std::vector<double> context;    // [Henc]
  std::vector<double> probs;      // [V]
  int fed_label = -1;
};

void AttentionModel::decoder_forward_step(const std::vector<double>& x_in, const Tensor& enc,
                                          const Tensor& enc_proj, DecoderState* state,
                                          std::vector<double>* probs,
                                          std::vector<double>* attn, StepCache* cache) const {
  const int H = cfg_.dec_hidden, A = cfg_.attn_dim, U = enc.dim(0), V = cfg_.vocab_size;
  const int I = cfg_.embed_dim + enc_dim_;
  // LSTM cell
  std::vector<double> a(static_cast<size_t>(4 * H), 0.0);
  for (int j = 0; j < 4 * H; ++j) a[static_cast<size_t>(j)] = b_[j];
  for (int i = 0; i < I; ++i) {
    const double xv = x_in[static_cast<size_t>(i)];
    if (xv == 0.0) continue;
    for (int j = 0; j < 4 * H; ++j) a[static_cast<size_t>(j)] += xv * wx_.at(i, j);
  }
  for (int k = 0; k < H; ++k) {
    const double hv = state->h[static_cast<size_t>(k)];
    if (hv == 0.0) continue;
    for (int j = 0; j < 4 * H; ++j) a[static_cast<size_t>(j)] += hv * wh_.at(k, j);
  }
  std::vector<double> c_new(static_cast<size_t>(H)), s(static_cast<size_t>(H));
  for (int k = 0; k < H; ++k) {
    const double iv = sigmoid(a[static_cast<size_t>(k)]);
    const double fv = sigmoid(a[static_cast<size_t>(H + k)]);
    const double gv = std::tanh(a[static_cast<size_t>(2 * H + k)]);
    const double ov = sigmoid(a[static_cast<size_t>(3 * H + k)]);
    const double cv = fv * state->c[static_cast<size_t>(k)] + iv * gv;
    c_new[static_cast<size_t>(k)] = cv;
    s[static_cast<size_t>(k)] = ov * std::tanh(cv);
    a[static_cast<size_t>(k)] = iv;
    a[static_cast<size_t>(H + k)] = fv;
    a[static_cast<size_t>(2 * H + k)] = gv;
    a[static_cast<size_t>(3 * H + k)] = ov;
  }

  // additive attention
  std::vector<double> s_proj(static_cast<size_t>(A), 0.0);
  for (int h = 0; h < H; ++h) {
    const double sv = s[static_cast<size_t>(h)];
    if (sv == 0.0) continue;
    for (int aa = 0; aa < A; ++aa) s_proj[static_cast<size_t>(aa)] += sv * ws_.at(h, aa);
  }
  std::vector<double> tanh_z(static_cast<size_t>(U) * A);
  std::vector<double> alpha(static_cast<size_t>(U));
  for (int j = 0; j < U; ++j) {
    double e = 0.0;
    for (int aa = 0; aa < A; ++aa) {
      const double tz = std::tanh(s_proj[static_cast<size_t>(aa)] + enc_proj.at(j, aa) + ba_[aa]);
      tanh_z[static_cast<size_t>(j) * A + aa] = tz;
      e += va_[aa] * tz;
    }
    alpha[static_cast<size_t>(j)] = e;
  }
  softmax_inplace(alpha);
  std::vector<double> context(static_cast<size_t>(enc_dim_), 0.0);
  for (int j = 0; j < U; ++j) {
    const double av = alpha[static_cast<size_t>(j)];
    for (int k = 0; k < enc_dim_; ++k)
      context[static_cast<size_t>(k)] += av * enc.at(j, k);
  }

  // output projection over [s; context]
  std::vector<double> logits(static_cast<size_t>(V));
  for (int v = 0; v < V; ++v) logits[static_cast<size_t>(v)] = bo_[v];
  for (int k = 0; k < H; ++k) {
    const double sv = s[static_cast<size_t>(k)];
    if (sv == 0.0) continue;
    for (int v = 0; v < V; ++v) logits[static_cast<size_t>(v)] += sv * wo_.at(k, v);
  }
  for (int k = 0; k < enc_dim_; ++k) {
    const double cv = context[static_cast<size_t>(k)];
    if (cv == 0.0) continue;
    for (int v = 0; v < V; ++v) logits[static_cast<size_t>(v)] += cv * wo_.at(H + k, v);
  }
  softmax_inplace(logits);

  if (cache) {
    cache->x_in = x_in;
    cache->h_prev = state->h;
    cache->c_prev = state->c;
    cache->gates = a;
    cache->c_new = c_new;
    cache->s = s;
    cache->tanh_z = tanh_z;
    cache->alpha = alpha;
    cache->context = context;
    cache->probs = logits;
  }
  state->h = s;
  state->c = c_new;
  state->context = context;
  for (int j = 0; j < U; ++j) state->cum_attn[static_cast<size_t>(j)] += alpha[static_cast<size_t>(j)];
  if (attn) *attn = alpha;
  *probs = logits;
}

std::vector<double> AttentionModel::decode_step(DecoderState* state, int prev_label,
                                                const Tensor& enc,
                                                std::vector<double>* attn_weights) {
  if (prev_label == cfg_.eos_id)
    throw std::invalid_argument("decoding already terminated at <eos>");
  if (prev_label < 0 || prev_label >= cfg_.vocab_size)
    throw std::invalid_argument("previous label out of vocabulary");
  std::vector<double> x_in(static_cast<size_t>(cfg_.embed_dim + enc_dim_));
  for (int e = 0; e < cfg_.embed_dim; ++e)
    x_in[static_cast<size_t>(e)] = embed_.at(prev_label, e);
  for (int k = 0; k < enc_dim_; ++k)
    x_in[static_cast<size_t>(cfg_.embed_dim + k)] = state->context[static_cast<size_t>(k)];
  const Tensor enc_proj = project_encoder(enc);
  std::vector<double> probs;
  decoder_forward_step(x_in, enc, enc_proj, state, &probs, attn_weights, nullptr);
  return probs;
}

// ---------------------------------------------------------------------------
// Training (teacher forcing + schedule sampling + label smoothing)

double AttentionModel::train_step(const Tensor& feats, const std::vector<int>& target,
                                  double p_ss, double smoothing_eps,
                                  const std::vector<double>& unigram, std::mt19937_64* rng) {
  if (target.empty()) throw std::invalid_argument("empty target");
  if (!unigram.empty() && static_cast<int>(unigram.size()) != cfg_.vocab_size)
    throw std::invalid_argument("unigram distribution size mismatch");
  const int E = cfg_.embed_dim, H = cfg_.dec_hidden, A = cfg_.attn_dim, V = cfg_.vocab_size;
  const int I = E + enc_dim_;

  Tensor enc = encode(feats, /*train=*/true);
  const int U = enc.dim(0);
  const Tensor enc_proj = project_encoder(enc);

  const int L = static_cast<int>(target.size());
  const int steps = L + 1;  // targets plus <eos>
  std::vector<StepCache> caches(static_cast<size_t>(steps));
  DecoderState state = initial_state(U);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double loss = 0.0;
  std::vector<std::vector<double>> dlogits(static_cast<size_t>(steps));
  int prev_sampled = -1;
  for (int t = 0; t < steps; ++t) {
    int fed = t == 0 ? cfg_.sos_id : target[static_cast<size_t>(t) - 1];
    if (t > 0 && p_ss > 0.0 && rng && unif(*rng) < p_ss && prev_sampled >= 0) fed = prev_sampled;
    std::vector<double> x_in(static_cast<size_t>(I));
    for (int e = 0; e < E; ++e) x_in[static_cast<size_t>(e)] = embed_.at(fed, e);
    for (int k = 0; k < enc_dim_; ++k)
      x_in[static_cast<size_t>(E + k)] = state.context[static_cast<size_t>(k)];
    std::vector<double> probs;
    decoder_forward_step(x_in, enc, enc_proj, &state, &probs, nullptr,
                         &caches[static_cast<size_t>(t)]);
    caches[static_cast<size_t>(t)].fed_label = fed;

    const int y = t < L ? target[static_cast<size_t>(t)] : cfg_.eos_id;
    // smoothed target: (1-eps) one-hot + eps * unigram
    auto& dl = dlogits[static_cast<size_t>(t)];
    dl.resize(static_cast<size_t>(V));
    double ce = 0.0;
    for (int v = 0; v < V; ++v) {
      double q = (v == y ? 1.0 - smoothing_eps : 0.0);
      if (smoothing_eps > 0.0 && !unigram.empty())
        q += smoothing_eps * unigram[static_cast<size_t>(v)];
      const double p = probs[static_cast<size_t>(v)];
      if (q > 0.0) ce -= q * std::log(std::max(p, 1e-300));
      dl[static_cast<size_t>(v)] = (p - q) / steps;
    }
    loss += ce;

    // next-step sampled candidate (schedule sampling)
    if (rng && p_ss > 0.0) {
      double r = unif(*rng);
      int pick = V - 1;
      double acc = 0.0;
      for (int v = 0; v < V; ++v) {
        acc += probs[static_cast<size_t>(v)];
        if (r <= acc) {
          pick = v;
          break;
        }
      }
      // never feed <eos>/<sos>; fall back to the reference label there
      prev_sampled = (pick == cfg_.eos_id || pick == cfg_.sos_id) ? -1 : pick;
    }
  }
  loss /= steps;

  // ----- backward through time -----
  Tensor denc({U, enc_dim_});
  std::vector<double> dh_rec(static_cast<size_t>(H), 0.0);
  std::vector<double> dcell_rec(static_cast<size_t>(H), 0.0);
  std::vector<double> dctx_next(static_cast<size_t>(enc_dim_), 0.0);
  for (int t = steps - 1; t >= 0; --t) {
    const StepCache& cc = caches[static_cast<size_t>(t)];
    const auto& dl = dlogits[static_cast<size_t>(t)];
    // output layer: out_in = [s; context]
    std::vector<double> ds(static_cast<size_t>(H), 0.0);
    std::vector<double> dctx(static_cast<size_t>(enc_dim_), 0.0);
    for (int v = 0; v < V; ++v) {
      const double g = dl[static_cast<size_t>(v)];
      if (g == 0.0) continue;
      gbo_[v] += g;
      for (int k = 0; k < H; ++k) {
        gwo_.at(k, v) += cc.s[static_cast<size_t>(k)] * g;
        ds[static_cast<size_t>(k)] += wo_.at(k, v) * g;
      }
      for (int k = 0; k < enc_dim_; ++k) {
        gwo_.at(H + k, v) += cc.context[static_cast<size_t>(k)] * g;
        dctx[static_cast<size_t>(k)] += wo_.at(H + k, v) * g;
      }
    }
    for (int k = 0; k < H; ++k) ds[static_cast<size_t>(k)] += dh_rec[static_cast<size_t>(k)];
    for (int k = 0; k < enc_dim_; ++k)
      dctx[static_cast<size_t>(k)] += dctx_next[static_cast<size_t>(k)];

    // attention backward
    std::vector<double> dalpha(static_cast<size_t>(U), 0.0);
    for (int j = 0; j < U; ++j) {
      double d = 0.0;
      for (int k = 0; k < enc_dim_; ++k) d += dctx[static_cast<size_t>(k)] * enc.at(j, k);
      dalpha[static_cast<size_t>(j)] = d;
      const double av = cc.alpha[static_cast<size_t>(j)];
      for (int k = 0; k < enc_dim_; ++k)
        denc.at(j, k) += av * dctx[static_cast<size_t>(k)];
    }
    double wsum = 0.0;
    for (int j = 0; j < U; ++j)
      wsum += cc.alpha[static_cast<size_t>(j)] * dalpha[static_cast<size_t>(j)];
    for (int j = 0; j < U; ++j) {
      const double de = cc.alpha[static_cast<size_t>(j)] * (dalpha[static_cast<size_t>(j)] - wsum);
      if (de == 0.0) continue;
      for (int aa = 0; aa < A; ++aa) {
        const double tz = cc.tanh_z[static_cast<size_t>(j) * A + aa];
        gva_[aa] += de * tz;
        const double dz = de * va_[aa] * (1.0 - tz * tz);
        if (dz == 0.0) continue;
        gba_[aa] += dz;
        for (int h = 0; h < H; ++h) {
          gws_.at(h, aa) += cc.s[static_cast<size_t>(h)] * dz;
          ds[static_cast<size_t>(h)] += ws_.at(h, aa) * dz;
        }
        for (int k = 0; k < enc_dim_; ++k) {
          gwe_.at(k, aa) += enc.at(j, k) * dz;
          denc.at(j, k) += we_.at(k, aa) * dz;
        }
      }
    }

    // LSTM cell backward
    std::vector<double> da(static_cast<size_t>(4 * H));
    for (int k = 0; k < H; ++k) {
      const double iv = cc.gates[static_cast<size_t>(k)];
      const double fv = cc.gates[static_cast<size_t>(H + k)];
      const double gv = cc.gates[static_cast<size_t>(2 * H + k)];
      const double ov = cc.gates[static_cast<size_t>(3 * H + k)];
      const double tc = std::tanh(cc.c_new[static_cast<size_t>(k)]);
      const double dht = ds[static_cast<size_t>(k)];
      const double dct = dht * ov * (1.0 - tc * tc) + dcell_rec[static_cast<size_t>(k)];
      da[static_cast<size_t>(k)] = dct * gv * iv * (1.0 - iv);
      da[static_cast<size_t>(H + k)] =
          dct * cc.c_prev[static_cast<size_t>(k)] * fv * (1.0 - fv);
      da[static_cast<size_t>(2 * H + k)] = dct * iv * (1.0 - gv * gv);
      da[static_cast<size_t>(3 * H + k)] = dht * tc * ov * (1.0 - ov);
      dcell_rec[static_cast<size_t>(k)] = dct * fv;
    }
    for (int j = 0; j < 4 * H; ++j) gb_[j] += da[static_cast<size_t>(j)];
    for (int i = 0; i < I; ++i) {
      const double xv = cc.x_in[static_cast<size_t>(i)];
      if (xv != 0.0)
        for (int j = 0; j < 4 * H; ++j) gwx_.at(i, j) += xv * da[static_cast<size_t>(j)];
    }
    for (int k = 0; k < H; ++k) {
      const double hv = cc.h_prev[static_cast<size_t>(k)];
      if (hv != 0.0)
        for (int j = 0; j < 4 * H; ++j) gwh_.at(k, j) += hv * da[static_cast<size_t>(j)];
      double s = 0.0;
      for (int j = 0; j < 4 * H; ++j) s += wh_.at(k, j) * da[static_cast<size_t>(j)];
      dh_rec[static_cast<size_t>(k)] = s;
    }
    // input gradient: embedding row + previous context
    for (int e = 0; e < E; ++e) {
      double s = 0.0;
      for (int j = 0; j < 4 * H; ++j) s += wx_.at(e, j) * da[static_cast<size_t>(j)];
      gembed_.at(cc.fed_label, e) += s;
    }
    for (int k = 0; k < enc_dim_; ++k) {
      double s = 0.0;
      for (int j = 0; j < 4 * H; ++j) s += wx_.at(E + k, j) * da[static_cast<size_t>(j)];
      dctx_next[static_cast<size_t>(k)] = s;
    }
  }
  encoder_.backward(denc);
  return loss;
}

// ---------------------------------------------------------------------------
// Beam search (Eq.-style objective: normalized log prob + coverage + LM)

std::vector<AttnHypothesis> AttentionModel::beam_search(const Tensor& enc,
                                                        const AttnDecodeConfig& config) {
  if (config.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  const int V = cfg_.vocab_size;
  const int U = enc.dim(0);
  const Tensor enc_proj = project_encoder(enc);

  struct Live {
    std::vector<int> labels;
    double logp = 0.0;
    double lm = 0.0;
    NGramLM::State lm_state;
    DecoderState state;
    std::vector<std::vector<double>> attention;
  };
  std::vector<Live> beam(1);
  beam[0].state = initial_state(U);
  if (config.lm) beam[0].lm_state = config.lm->begin();

  std::vector<AttnHypothesis> finished;
  auto finalize = [&](const Live& hyp, double logp, double lm_full,
                      const DecoderState& state, bool truncated,
                      std::vector<std::vector<double>> attention) {
    AttnHypothesis h;
    h.labels = hyp.labels;
    h.att_score = logp;
    h.lm_score = lm_full;
    h.cov = coverage(state.cum_attn, config.tau);
    const double len = static_cast<double>(std::max<size_t>(h.labels.size(), 1));
    h.normalized_score = logp / std::pow(len, config.gamma);
    h.truncated = truncated;
    h.attention = std::move(attention);
    finished.push_back(std::move(h));
  };

  for (int step = 0; step < config.max_len && !beam.empty(); ++step) {
    struct Candidate {
      size_t parent;
      int label;
      double logp;
      double lm;
      NGramLM::State lm_state;
    };
    std::vector<Candidate> cands;
    std::vector<DecoderState> advanced(beam.size());
    std::vector<std::vector<double>> step_attn(beam.size());
    for (size_t i = 0; i < beam.size(); ++i) {
      Live& hyp = beam[i];
      const int prev = hyp.labels.empty() ? cfg_.sos_id : hyp.labels.back();
      std::vector<double> x_in(static_cast<size_t>(cfg_.embed_dim + enc_dim_));
      for (int e = 0; e < cfg_.embed_dim; ++e)
        x_in[static_cast<size_t>(e)] = embed_.at(prev, e);
      for (int k = 0; k < enc_dim_; ++k)
        x_in[static_cast<size_t>(cfg_.embed_dim + k)] = hyp.state.context[static_cast<size_t>(k)];
      DecoderState st = hyp.state;
      std::vector<double> probs, attn;
      decoder_forward_step(x_in, enc, enc_proj, &st, &probs, &attn, nullptr);
      advanced[i] = std::move(st);
      step_attn[i] = std::move(attn);
      for (int v = 0; v < V; ++v) {
        if (v == cfg_.sos_id) continue;               // input-only
        if (v == cfg_.eos_id && hyp.labels.empty()) continue;  // min length 1
        const double lp = hyp.logp + std::log(std::max(probs[static_cast<size_t>(v)], 1e-300));
        if (v == cfg_.eos_id) {
          double lm_full = hyp.lm;
          if (config.lm) lm_full += config.lm->score_end(hyp.lm_state);
          auto attention = hyp.attention;
          attention.push_back(step_attn[i]);
          finalize(hyp, lp, lm_full, advanced[i], false, std::move(attention));
          continue;
        }
        Candidate c;
        c.parent = i;
        c.label = v;
        c.logp = lp;
        c.lm = hyp.lm;
        c.lm_state = hyp.lm_state;
        if (config.lm) {
          NGramLM::State nx;
          c.lm += config.lm->score_step(hyp.lm_state, v, &nx);
          c.lm_state = nx;
        }
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [&config](const Candidate& a, const Candidate& b) {
      const double sa = a.logp + config.lambda * a.lm;
      const double sb = b.logp + config.lambda * b.lm;
      if (sa != sb) return sa > sb;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.label < b.label;
    });
    if (static_cast<int>(cands.size()) > config.beam_width)
      cands.resize(static_cast<size_t>(config.beam_width));
    std::vector<Live> next;
    next.reserve(cands.size());
    for (const auto& c : cands) {
      Live nl;
      nl.labels = beam[c.parent].labels;
      nl.labels.push_back(c.label);
      nl.logp = c.logp;
      nl.lm = c.lm;
      nl.lm_state = c.lm_state;
      nl.state = advanced[c.parent];
      nl.attention = beam[c.parent].attention;
      nl.attention.push_back(step_attn[c.parent]);
      next.push_back(std::move(nl));
    }
    beam = std::move(next);
  }
  // anything still live hit the length cap
  for (const auto& hyp : beam) {
    double lm_full = hyp.lm;
    if (config.lm) lm_full += config.lm->score_end(hyp.lm_state);
    finalize(hyp, hyp.logp, lm_full, hyp.state, true, hyp.attention);
  }

  std::sort(finished.begin(), finished.end(),
            [&config](const AttnHypothesis& a, const AttnHypothesis& b) {
              const double ta = attn_total_score(a, config);
              const double tb = attn_total_score(b, config);
              if (ta != tb) return ta > tb;
              return a.labels < b.labels;
            });
  if (static_cast<int>(finished.size()) > config.top_n)
    finished.resize(static_cast<size_t>(config.top_n));
  return finished;
}

// ---------------------------------------------------------------------------

std::vector<NamedParam> AttentionModel::params() {
  std::vector<NamedParam> out = encoder_.params();
  out.push_back({"dec.embed", &embed_, &gembed_, cfg_.embed_dim});
  out.push_back({"dec.wx", &wx_, &gwx_, cfg_.embed_dim + enc_dim_});
  out.push_back({"dec.wh", &wh_, &gwh_, cfg_.dec_hidden});
  out.push_back({"dec.b", &b_, &gb_, 0});
  out.push_back({"attn.ws", &ws_, &gws_, cfg_.dec_hidden});
  out.push_back({"attn.we", &we_, &gwe_, enc_dim_});
  out.push_back({"attn.ba", &ba_, &gba_, 0});
  out.push_back({"attn.v", &va_, &gva_, cfg_.attn_dim});
  out.push_back({"out.w", &wo_, &gwo_, cfg_.dec_hidden + enc_dim_});
  out.push_back({"out.b", &bo_, &gbo_, 0});
  return out;
}

void AttentionModel::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

int64_t AttentionModel::num_params() {
  int64_t n = 0;
  for (auto& p : params()) n += p.value->numel();
  return n;
}

void AttentionModel::init_weights(uint64_t seed, const InitPolicy& policy) {
  auto ps = params();
  init_params(ps, seed, policy);
}

}  // namespace e2e
