// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// LAS-style attention encoder-decoder: pyramidal encoder, single-layer
// additive attention, one-layer LSTM decoder. Training supports schedule
// sampling and unigram label smoothing; decoding is beam search with
// length normalization, a coverage bonus, and shallow LM fusion.

#ifndef E2E_ATTENTION_HPP_
#define E2E_ATTENTION_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "e2e/layers.hpp"
#include "e2e/lm.hpp"
#include "e2e/tensor.hpp"

namespace e2e {

struct AttentionModelConfig {
  int input_dim = 40;
  std::vector<LayerSpec> encoder;
  int vocab_size = 0;  // attention vocabulary incl. <unk>/<sos>/<eos>
  int sos_id = -1;
  int eos_id = -1;
  int embed_dim = 32;
  int dec_hidden = 64;
  int attn_dim = 32;
};

/// Number of encoder positions whose cumulative attention exceeds tau.
int coverage(const std::vector<double>& cumulative_attention, double tau);

struct AttnDecodeConfig {
  int beam_width = 8;
  double gamma = 0.0;     // length-normalization exponent
  double beta_cov = 0.0;  // coverage weight
  double lambda = 0.0;    // LM weight
  double tau = 0.5;       // coverage threshold
  int max_len = 64;
  const NGramLM* lm = nullptr;
  int top_n = 1;
};

struct AttnHypothesis {
  std::vector<int> labels;      // content units, no <sos>/<eos>
  double att_score = 0.0;       // log P_Att(y|x), includes the <eos> step
  double lm_score = 0.0;        // log P_LM(y) incl. sentence end, 0 without LM
  int cov = 0;                  // coverage count at threshold tau
  double normalized_score = 0.0;  // att_score / |y|^gamma
  bool truncated = false;       // hit max_len without <eos>
  std::vector<std::vector<double>> attention;  // per-step weights over U
};

double attn_total_score(const AttnHypothesis& h, const AttnDecodeConfig& cfg);

class AttentionModel {
 public:
  explicit AttentionModel(AttentionModelConfig config);

  const AttentionModelConfig& config() const { return cfg_; }
  int encoder_dim() const { return enc_dim_; }
  int encoded_len(int input_len) const { return encoder_.output_len(input_len); }

  Tensor encode(const Tensor& feats, bool train);

  struct DecoderState {
    std::vector<double> h, c;       // decoder LSTM state
    std::vector<double> context;    // last attention context
    std::vector<double> cum_attn;   // cumulative attention per encoder position
  };
  DecoderState initial_state(int encoded_len) const;

  /// Additive attention against encoder output `enc` [U, H]; returns the
  /// context vector and the (softmax-normalized) weights.
  void attend(const std::vector<double>& dec_hidden, const Tensor& enc,
              std::vector<double>* context, std::vector<double>* weights) const;

  /// One decode step: feeds prev_label (and the state's last context),
  /// advances the state, returns P(y_t | c_t, y_{<t}) over the vocabulary.
  /// Throws if prev_label is <eos>.
  std::vector<double> decode_step(DecoderState* state, int prev_label, const Tensor& enc,
                                  std::vector<double>* attn_weights = nullptr);

  /// Teacher-forced training pass over one utterance; accumulates gradients.
  /// `target` are content unit ids (no <sos>/<eos>); `unigram` is a
  /// distribution over the full vocabulary used for label smoothing.
  /// Returns mean per-label cross-entropy.
  double train_step(const Tensor& feats, const std::vector<int>& target, double p_ss,
                    double smoothing_eps, const std::vector<double>& unigram,
                    std::mt19937_64* rng);

  std::vector<AttnHypothesis> beam_search(const Tensor& enc, const AttnDecodeConfig& config);

  std::vector<NamedParam> params();
  void zero_grad();
  int64_t num_params();
  void init_weights(uint64_t seed, const InitPolicy& policy);

 private:
  struct StepCache;
  void decoder_forward_step(const std::vector<double>& x_in, const Tensor& enc,
                            const Tensor& enc_proj, DecoderState* state,
                            std::vector<double>* probs, std::vector<double>* attn,
                            StepCache* cache) const;
  Tensor project_encoder(const Tensor& enc) const;

  AttentionModelConfig cfg_;
  Network encoder_;
  int enc_dim_ = 0;
  // decoder parameters
  Tensor embed_, gembed_;
  Tensor wx_, wh_, b_, gwx_, gwh_, gb_;          // decoder LSTM
  Tensor ws_, we_, ba_, va_, gws_, gwe_, gba_, gva_;  // additive attention
  Tensor wo_, bo_, gwo_, gbo_;                   // output projection
};

}  // namespace e2e

#endif  // E2E_ATTENTION_HPP_
