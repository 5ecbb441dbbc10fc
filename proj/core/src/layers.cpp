// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/layers.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace e2e {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

[[noreturn]] void shape_error(const std::string& where, const std::string& expected,
                              const std::string& actual) {
  throw std::invalid_argument(where + ": expected shape " + expected + ", got " + actual);
}

}  // namespace

// ---------------------------------------------------------------------------
// LayerSpec

LayerSpec LayerSpec::linear(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.in_dim = in;
  s.out_dim = out;
  return s;
}
LayerSpec LayerSpec::lstm(int hidden) {
  LayerSpec s;
  s.kind = LayerKind::Lstm;
  s.hidden = hidden;
  return s;
}
LayerSpec LayerSpec::blstm(int hidden) {
  LayerSpec s;
  s.kind = LayerKind::Blstm;
  s.hidden = hidden;
  return s;
}
LayerSpec LayerSpec::layer_norm() {
  LayerSpec s;
  s.kind = LayerKind::LayerNorm;
  return s;
}
LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kernel, int stride_t, int stride_f) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride_t = stride_t;
  s.stride_f = stride_f;
  return s;
}
LayerSpec LayerSpec::residual(int channels, int kernel) {
  LayerSpec s;
  s.kind = LayerKind::Residual;
  s.in_channels = channels;
  s.out_channels = channels;
  s.kernel = kernel;
  return s;
}
LayerSpec LayerSpec::time_pool(int factor, bool concat) {
  LayerSpec s;
  s.kind = LayerKind::TimePool;
  s.pool_factor = factor;
  s.pool_concat = concat;
  return s;
}

std::string LayerSpec::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case LayerKind::Linear:
      os << "linear in=" << in_dim << " out=" << out_dim;
      break;
    case LayerKind::Lstm:
      os << "lstm hidden=" << hidden;
      break;
    case LayerKind::Blstm:
      os << "blstm hidden=" << hidden;
      break;
    case LayerKind::LayerNorm:
      os << "layer_norm";
      break;
    case LayerKind::Conv2d:
      os << "conv2d in_ch=" << in_channels << " out_ch=" << out_channels
         << " kernel=" << kernel << " stride_t=" << stride_t << " stride_f=" << stride_f;
      break;
    case LayerKind::Residual:
      os << "residual ch=" << in_channels << " kernel=" << kernel;
      break;
    case LayerKind::TimePool:
      os << "time_pool factor=" << pool_factor << " concat=" << (pool_concat ? 1 : 0);
      break;
  }
  return os.str();
}

LayerSpec LayerSpec::from_string(const std::string& str) {
  std::istringstream is(str);
  std::string kind;
  is >> kind;
  auto kv = [&is]() {
    // remaining tokens are key=value pairs
    std::vector<std::pair<std::string, int>> out;
    std::string tok;
    while (is >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("bad layer spec token: " + tok);
      out.emplace_back(tok.substr(0, eq), std::stoi(tok.substr(eq + 1)));
    }
    return out;
  };
  LayerSpec s;
  auto fields = kv();
  auto get = [&fields, &str](const std::string& key) {
    for (auto& [k, v] : fields)
      if (k == key) return v;
    throw std::invalid_argument("layer spec missing field '" + key + "': " + str);
  };
  if (kind == "linear") {
    s = LayerSpec::linear(get("in"), get("out"));
  } else if (kind == "lstm") {
    s = LayerSpec::lstm(get("hidden"));
  } else if (kind == "blstm") {
    s = LayerSpec::blstm(get("hidden"));
  } else if (kind == "layer_norm") {
    s = LayerSpec::layer_norm();
  } else if (kind == "conv2d") {
    s = LayerSpec::conv2d(get("in_ch"), get("out_ch"), get("kernel"), get("stride_t"),
                          get("stride_f"));
  } else if (kind == "residual") {
    s = LayerSpec::residual(get("ch"), get("kernel"));
  } else if (kind == "time_pool") {
    s = LayerSpec::time_pool(get("factor"), get("concat") != 0);
  } else {
    throw std::invalid_argument("unknown layer kind: " + kind);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Linear

class LinearLayer : public Layer {
 public:
  LinearLayer(LayerSpec spec, int in_dim) : Layer(spec) {
    if (spec_.in_dim == 0) spec_.in_dim = in_dim;
    if (spec_.in_dim != in_dim)
      shape_error("linear", "[*x" + std::to_string(spec_.in_dim) + "]",
                  "[*x" + std::to_string(in_dim) + "]");
    w_ = Tensor({spec_.in_dim, spec_.out_dim});
    b_ = Tensor({spec_.out_dim});
    gw_ = Tensor({spec_.in_dim, spec_.out_dim});
    gb_ = Tensor({spec_.out_dim});
  }

  Tensor forward(const Tensor& x, bool train) override {
    Tensor y({x.dim(0), spec_.out_dim});
    matmul(x, w_, &y);
    for (int t = 0; t < y.dim(0); ++t)
      for (int j = 0; j < spec_.out_dim; ++j) y.at(t, j) += b_[j];
    if (train) x_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    matmul_at_b_accum(x_, g, &gw_);
    for (int t = 0; t < g.dim(0); ++t)
      for (int j = 0; j < spec_.out_dim; ++j) gb_[j] += g.at(t, j);
    Tensor gx({g.dim(0), spec_.in_dim});
    matmul_a_bt_accum(g, w_, &gx);
    return gx;
  }

  int out_dim(int) const override { return spec_.out_dim; }

  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    out->push_back({p + ".w", &w_, &gw_, spec_.in_dim});
    out->push_back({p + ".b", &b_, &gb_, 0});
  }

 private:
  Tensor w_, b_, gw_, gb_, x_;
};

// ---------------------------------------------------------------------------
// LayerNorm (per time step, over the feature dimension)

class LayerNormLayer : public Layer {
 public:
  LayerNormLayer(LayerSpec spec, int in_dim) : Layer(spec), dim_(in_dim) {
    gain_ = Tensor({dim_});
    gain_.fill(1.0);
    bias_ = Tensor({dim_});
    ggain_ = Tensor({dim_});
    gbias_ = Tensor({dim_});
  }

  Tensor forward(const Tensor& x, bool train) override {
    const int T = x.dim(0), D = x.dim(1);
    Tensor y({T, D});
    Tensor xhat({T, D});
    inv_std_.assign(static_cast<size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
      double mu = 0.0;
      for (int j = 0; j < D; ++j) mu += x.at(t, j);
      mu /= D;
      double var = 0.0;
      for (int j = 0; j < D; ++j) {
        double d = x.at(t, j) - mu;
        var += d * d;
      }
      var /= D;
      const double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_[static_cast<size_t>(t)] = inv;
      for (int j = 0; j < D; ++j) {
        xhat.at(t, j) = (x.at(t, j) - mu) * inv;
        y.at(t, j) = gain_[j] * xhat.at(t, j) + bias_[j];
      }
    }
    if (train) xhat_ = xhat;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const int T = g.dim(0), D = g.dim(1);
    Tensor gx({T, D});
    for (int t = 0; t < T; ++t) {
      double sum_gh = 0.0, sum_gh_xhat = 0.0;
      for (int j = 0; j < D; ++j) {
        const double gh = g.at(t, j) * gain_[j];
        ggain_[j] += g.at(t, j) * xhat_.at(t, j);
        gbias_[j] += g.at(t, j);
        sum_gh += gh;
        sum_gh_xhat += gh * xhat_.at(t, j);
      }
      const double inv = inv_std_[static_cast<size_t>(t)];
      for (int j = 0; j < D; ++j) {
        const double gh = g.at(t, j) * gain_[j];
        gx.at(t, j) = inv * (gh - sum_gh / D - xhat_.at(t, j) * sum_gh_xhat / D);
      }
    }
    return gx;
  }

  int out_dim(int in_dim) const override { return in_dim; }

  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    out->push_back({p + ".gain", &gain_, &ggain_, 0});
    out->push_back({p + ".bias", &bias_, &gbias_, 0});
  }

  static constexpr double kEps = 1e-8;

 private:
  int dim_;
  Tensor gain_, bias_, ggain_, gbias_, xhat_;
  std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------
// LSTM cell shared by Lstm and Blstm layers. Gate order: i, f, g, o.

struct LstmCell {
  int in_dim = 0, hidden = 0;
  Tensor wx, wh, b, gwx, gwh, gb;
  // caches from the last forward
  Tensor x, gates, c, h;  // gates: [T,4H] post-activation; c,h: [T,H]

  void build(int in, int hid) {
    in_dim = in;
    hidden = hid;
    wx = Tensor({in, 4 * hid});
    wh = Tensor({hid, 4 * hid});
    b = Tensor({4 * hid});
    gwx = Tensor({in, 4 * hid});
    gwh = Tensor({hid, 4 * hid});
    gb = Tensor({4 * hid});
  }

  // reverse=true runs over the sequence back to front; output row order
  // still matches the input row order.
  Tensor run(const Tensor& input, bool reverse, bool train) {
    const int T = input.dim(0), H = hidden;
    Tensor gates_a({T, 4 * H});
    matmul(input, wx, &gates_a);
    Tensor out_h({T, H}), out_c({T, H});
    std::vector<double> hprev(static_cast<size_t>(H), 0.0);
    std::vector<double> cprev(static_cast<size_t>(H), 0.0);
    for (int step = 0; step < T; ++step) {
      const int t = reverse ? T - 1 - step : step;
      double* a = gates_a.data() + static_cast<size_t>(t) * 4 * H;
      for (int j = 0; j < 4 * H; ++j) a[j] += b[j];
      for (int k = 0; k < H; ++k) {
        const double hv = hprev[static_cast<size_t>(k)];
        if (hv == 0.0) continue;
        const double* wrow = wh.data() + static_cast<size_t>(k) * 4 * H;
        for (int j = 0; j < 4 * H; ++j) a[j] += hv * wrow[j];
      }
      for (int k = 0; k < H; ++k) {
        const double iv = sigmoid(a[k]);
        const double fv = sigmoid(a[H + k]);
        const double gv = std::tanh(a[2 * H + k]);
        const double ov = sigmoid(a[3 * H + k]);
        const double cv = fv * cprev[static_cast<size_t>(k)] + iv * gv;
        const double hv = ov * std::tanh(cv);
        a[k] = iv;
        a[H + k] = fv;
        a[2 * H + k] = gv;
        a[3 * H + k] = ov;
        out_c.at(t, k) = cv;
        out_h.at(t, k) = hv;
        cprev[static_cast<size_t>(k)] = cv;
        hprev[static_cast<size_t>(k)] = hv;
      }
    }
    if (train) {
      x = input;
      gates = std::move(gates_a);
      c = out_c;
      h = out_h;
    }
    return out_h;
  }

  Tensor backprop(const Tensor& grad_h_out, bool reverse) {
    const int T = x.dim(0), H = hidden, I = in_dim;
    Tensor gx({T, I});
    Tensor ga({T, 4 * H});  // gradient at pre-activation gates
    std::vector<double> dh(static_cast<size_t>(H), 0.0);
    std::vector<double> dc(static_cast<size_t>(H), 0.0);
    for (int step = T - 1; step >= 0; --step) {
      const int t = reverse ? T - 1 - step : step;
      const int tprev = reverse ? t + 1 : t - 1;
      const bool has_prev = reverse ? (t + 1 < T) : (t - 1 >= 0);
      const double* gate = gates.data() + static_cast<size_t>(t) * 4 * H;
      double* da = ga.data() + static_cast<size_t>(t) * 4 * H;
      for (int k = 0; k < H; ++k) {
        const double iv = gate[k], fv = gate[H + k], gv = gate[2 * H + k],
                     ov = gate[3 * H + k];
        const double cv = c.at(t, k);
        const double tc = std::tanh(cv);
        const double dht = grad_h_out.at(t, k) + dh[static_cast<size_t>(k)];
        const double dct = dht * ov * (1.0 - tc * tc) + dc[static_cast<size_t>(k)];
        const double cprev = has_prev ? c.at(tprev, k) : 0.0;
        da[k] = dct * gv * iv * (1.0 - iv);
        da[H + k] = dct * cprev * fv * (1.0 - fv);
        da[2 * H + k] = dct * iv * (1.0 - gv * gv);
        da[3 * H + k] = dht * tc * ov * (1.0 - ov);
        dc[static_cast<size_t>(k)] = dct * fv;
      }
      // recurrent gradient into h_{t-1}
      for (int k = 0; k < H; ++k) {
        double s = 0.0;
        const double* wrow = wh.data() + static_cast<size_t>(k) * 4 * H;
        for (int j = 0; j < 4 * H; ++j) s += da[j] * wrow[j];
        dh[static_cast<size_t>(k)] = s;
      }
      // weight gradients for the recurrent matrix need h_{t-1}
      if (has_prev) {
        for (int k = 0; k < H; ++k) {
          const double hv = h.at(tprev, k);
          if (hv == 0.0) continue;
          double* grow = gwh.data() + static_cast<size_t>(k) * 4 * H;
          for (int j = 0; j < 4 * H; ++j) grow[j] += hv * da[j];
        }
      }
      for (int j = 0; j < 4 * H; ++j) gb[j] += da[j];
    }
    matmul_at_b_accum(x, ga, &gwx);
    matmul_a_bt_accum(ga, wx, &gx);
    return gx;
  }

  void collect(const std::string& p, std::vector<NamedParam>* out) {
    out->push_back({p + ".wx", &wx, &gwx, in_dim});
    out->push_back({p + ".wh", &wh, &gwh, hidden});
    out->push_back({p + ".b", &b, &gb, 0});
  }
};

class LstmLayer : public Layer {
 public:
  LstmLayer(LayerSpec spec, int in_dim) : Layer(spec) { cell_.build(in_dim, spec_.hidden); }

  Tensor forward(const Tensor& x, bool train) override { return cell_.run(x, false, train); }
  Tensor backward(const Tensor& g) override { return cell_.backprop(g, false); }
  int out_dim(int) const override { return spec_.hidden; }
  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    cell_.collect(p, out);
  }

 private:
  LstmCell cell_;
};

class BlstmLayer : public Layer {
 public:
  BlstmLayer(LayerSpec spec, int in_dim) : Layer(spec) {
    fwd_.build(in_dim, spec_.hidden);
    bwd_.build(in_dim, spec_.hidden);
  }

  Tensor forward(const Tensor& x, bool train) override {
    Tensor hf = fwd_.run(x, false, train);
    Tensor hb = bwd_.run(x, true, train);
    const int T = x.dim(0), H = spec_.hidden;
    Tensor y({T, 2 * H});
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < H; ++k) {
        y.at(t, k) = hf.at(t, k);
        y.at(t, H + k) = hb.at(t, k);
      }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const int T = g.dim(0), H = spec_.hidden;
    Tensor gf({T, H}), gb({T, H});
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < H; ++k) {
        gf.at(t, k) = g.at(t, k);
        gb.at(t, k) = g.at(t, H + k);
      }
    Tensor gx = fwd_.backprop(gf, false);
    Tensor gx2 = bwd_.backprop(gb, true);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gx2[i];
    return gx;
  }

  int out_dim(int) const override { return 2 * spec_.hidden; }
  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    fwd_.collect(p + ".fwd", out);
    bwd_.collect(p + ".bwd", out);
  }

 private:
  LstmCell fwd_, bwd_;
};

// ---------------------------------------------------------------------------
// Conv2d over [T, C*F] rows (channel-major within a row), same padding,
// ReLU activation unless part of a residual block.

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(LayerSpec spec, int in_dim, bool relu = true) : Layer(spec), relu_(relu) {
    if (in_dim % spec_.in_channels != 0)
      throw std::invalid_argument("conv2d: input dim " + std::to_string(in_dim) +
                                  " not divisible by in_channels " +
                                  std::to_string(spec_.in_channels));
    freq_ = in_dim / spec_.in_channels;
    out_freq_ = ceil_div(freq_, spec_.stride_f);
    w_ = Tensor({spec_.out_channels, spec_.in_channels * spec_.kernel * spec_.kernel});
    b_ = Tensor({spec_.out_channels});
    gw_ = Tensor({spec_.out_channels, spec_.in_channels * spec_.kernel * spec_.kernel});
    gb_ = Tensor({spec_.out_channels});
  }

  Tensor forward(const Tensor& x, bool train) override {
    const int T = x.dim(0);
    const int To = ceil_div(T, spec_.stride_t);
    const int K = spec_.kernel, P = K / 2;
    const int Ci = spec_.in_channels, Co = spec_.out_channels;
    Tensor pre({To, Co * out_freq_});
    for (int to = 0; to < To; ++to) {
      for (int co = 0; co < Co; ++co) {
        const double* wrow = w_.data() + static_cast<size_t>(co) * Ci * K * K;
        for (int fo = 0; fo < out_freq_; ++fo) {
          double acc = b_[co];
          for (int ci = 0; ci < Ci; ++ci) {
            for (int dt = 0; dt < K; ++dt) {
              const int ti = to * spec_.stride_t + dt - P;
              if (ti < 0 || ti >= T) continue;
              for (int df = 0; df < K; ++df) {
                const int fi = fo * spec_.stride_f + df - P;
                if (fi < 0 || fi >= freq_) continue;
                acc += wrow[(ci * K + dt) * K + df] * x.at(ti, ci * freq_ + fi);
              }
            }
          }
          pre.at(to, co * out_freq_ + fo) = acc;
        }
      }
    }
    Tensor y = pre;
    if (relu_)
      for (int64_t i = 0; i < y.numel(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    if (train) {
      x_ = x;
      pre_ = std::move(pre);
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const int T = x_.dim(0);
    const int To = g.dim(0);
    const int K = spec_.kernel, P = K / 2;
    const int Ci = spec_.in_channels, Co = spec_.out_channels;
    Tensor gx({T, Ci * freq_});
    for (int to = 0; to < To; ++to) {
      for (int co = 0; co < Co; ++co) {
        const double* wrow = w_.data() + static_cast<size_t>(co) * Ci * K * K;
        double* gwrow = gw_.data() + static_cast<size_t>(co) * Ci * K * K;
        for (int fo = 0; fo < out_freq_; ++fo) {
          double go = g.at(to, co * out_freq_ + fo);
          if (relu_ && pre_.at(to, co * out_freq_ + fo) <= 0.0) go = 0.0;
          if (go == 0.0) continue;
          gb_[co] += go;
          for (int ci = 0; ci < Ci; ++ci) {
            for (int dt = 0; dt < K; ++dt) {
              const int ti = to * spec_.stride_t + dt - P;
              if (ti < 0 || ti >= T) continue;
              for (int df = 0; df < K; ++df) {
                const int fi = fo * spec_.stride_f + df - P;
                if (fi < 0 || fi >= freq_) continue;
                gwrow[(ci * K + dt) * K + df] += go * x_.at(ti, ci * freq_ + fi);
                gx.at(ti, ci * freq_ + fi) += go * wrow[(ci * K + dt) * K + df];
              }
            }
          }
        }
      }
    }
    return gx;
  }

  int out_dim(int) const override { return spec_.out_channels * out_freq_; }
  int out_len(int in_len) const override { return ceil_div(in_len, spec_.stride_t); }
  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    out->push_back({p + ".w", &w_, &gw_, spec_.in_channels * spec_.kernel * spec_.kernel});
    out->push_back({p + ".b", &b_, &gb_, 0});
  }

 private:
  bool relu_;
  int freq_ = 0, out_freq_ = 0;
  Tensor w_, b_, gw_, gb_, x_, pre_;
};

// Residual block: conv(ReLU) -> conv(no activation) -> add skip -> ReLU.
// Channels and shape preserved (stride 1).
class ResidualLayer : public Layer {
 public:
  ResidualLayer(LayerSpec spec, int in_dim) : Layer(spec) {
    LayerSpec c = LayerSpec::conv2d(spec_.in_channels, spec_.in_channels, spec_.kernel);
    conv1_ = std::make_unique<Conv2dLayer>(c, in_dim, /*relu=*/true);
    conv2_ = std::make_unique<Conv2dLayer>(c, in_dim, /*relu=*/false);
  }

  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = conv2_->forward(conv1_->forward(x, train), train);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += x[i];
    if (train) pre_ = y;
    for (int64_t i = 0; i < y.numel(); ++i)
      if (y[i] < 0.0) y[i] = 0.0;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gsum = g;
    for (int64_t i = 0; i < gsum.numel(); ++i)
      if (pre_[i] <= 0.0) gsum[i] = 0.0;
    Tensor gx = conv1_->backward(conv2_->backward(gsum));
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gsum[i];
    return gx;
  }

  int out_dim(int in_dim) const override { return in_dim; }
  void collect_params(const std::string& p, std::vector<NamedParam>* out) override {
    conv1_->collect_params(p + ".conv1", out);
    conv2_->collect_params(p + ".conv2", out);
  }

 private:
  std::unique_ptr<Conv2dLayer> conv1_, conv2_;
  Tensor pre_;
};

// ---------------------------------------------------------------------------
// TimePool: concat mode stacks `factor` adjacent frames (zero padded at the
// tail), subsample mode keeps every factor-th frame. Output length is
// ceil(T/factor) either way.

class TimePoolLayer : public Layer {
 public:
  TimePoolLayer(LayerSpec spec, int in_dim) : Layer(spec), in_dim_(in_dim) {}

  Tensor forward(const Tensor& x, bool train) override {
    const int T = x.dim(0), F = spec_.pool_factor;
    const int To = ceil_div(T, F);
    if (train) in_len_ = T;
    if (spec_.pool_concat) {
      Tensor y({To, in_dim_ * F});
      for (int to = 0; to < To; ++to)
        for (int s = 0; s < F; ++s) {
          const int t = to * F + s;
          if (t >= T) break;
          for (int j = 0; j < in_dim_; ++j) y.at(to, s * in_dim_ + j) = x.at(t, j);
        }
      return y;
    }
    Tensor y({To, in_dim_});
    for (int to = 0; to < To; ++to)
      for (int j = 0; j < in_dim_; ++j) y.at(to, j) = x.at(to * F, j);
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const int F = spec_.pool_factor, T = in_len_;
    Tensor gx({T, in_dim_});
    if (spec_.pool_concat) {
      for (int to = 0; to < g.dim(0); ++to)
        for (int s = 0; s < F; ++s) {
          const int t = to * F + s;
          if (t >= T) break;
          for (int j = 0; j < in_dim_; ++j) gx.at(t, j) = g.at(to, s * in_dim_ + j);
        }
    } else {
      for (int to = 0; to < g.dim(0); ++to)
        for (int j = 0; j < in_dim_; ++j) gx.at(to * F, j) = g.at(to, j);
    }
    return gx;
  }

  int out_dim(int in_dim) const override {
    return spec_.pool_concat ? in_dim * spec_.pool_factor : in_dim;
  }
  int out_len(int in_len) const override { return ceil_div(in_len, spec_.pool_factor); }
  void collect_params(const std::string&, std::vector<NamedParam>*) override {}

 private:
  int in_dim_;
  int in_len_ = 0;
};

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, int in_dim) {
  switch (spec.kind) {
    case LayerKind::Linear:
      return std::make_unique<LinearLayer>(spec, in_dim);
    case LayerKind::Lstm:
      return std::make_unique<LstmLayer>(spec, in_dim);
    case LayerKind::Blstm:
      return std::make_unique<BlstmLayer>(spec, in_dim);
    case LayerKind::LayerNorm:
      return std::make_unique<LayerNormLayer>(spec, in_dim);
    case LayerKind::Conv2d:
      return std::make_unique<Conv2dLayer>(spec, in_dim);
    case LayerKind::Residual:
      return std::make_unique<ResidualLayer>(spec, in_dim);
    case LayerKind::TimePool:
      return std::make_unique<TimePoolLayer>(spec, in_dim);
  }
  throw std::logic_error("unreachable layer kind");
}

Network::Network(std::vector<LayerSpec> specs, int input_dim)
    : specs_(std::move(specs)), input_dim_(input_dim) {
  int d = input_dim;
  for (const auto& s : specs_) {
    layers_.push_back(make_layer(s, d));
    d = layers_.back()->out_dim(d);
  }
  output_dim_ = d;
}

Tensor Network::forward(const Tensor& x, bool train) {
  if (x.rank() != 2 || x.dim(1) != input_dim_)
    shape_error("network input", "[Tx" + std::to_string(input_dim_) + "]", x.shape_str());
  Tensor cur = x;
  int d = input_dim_;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (cur.dim(1) != d)
      shape_error("layer " + std::to_string(i), "[*x" + std::to_string(d) + "]",
                  cur.shape_str());
    cur = layers_[i]->forward(cur, train);
    d = layers_[i]->out_dim(d);
  }
  forward_ran_train_ = train;
  return cur;
}

Tensor Network::backward(const Tensor& grad_out) {
  if (!forward_ran_train_)
    throw std::logic_error("backward called without a train-mode forward");
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<NamedParam> Network::params() {
  std::vector<NamedParam> out;
  for (size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params("layer" + std::to_string(i), &out);
  return out;
}

void Network::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

int64_t Network::num_params() {
  int64_t n = 0;
  for (auto& p : params()) n += p.value->numel();
  return n;
}

int Network::output_len(int in_len) const {
  int t = in_len;
  for (const auto& l : layers_) t = l->out_len(t);
  return t;
}

void Network::init_weights(uint64_t seed, const InitPolicy& policy) {
  auto ps = params();
  init_params(ps, seed, policy);
}

int64_t count_params(const std::vector<LayerSpec>& specs, int input_dim) {
  int64_t n = 0;
  int d = input_dim;
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::Linear:
        n += static_cast<int64_t>(s.in_dim ? s.in_dim : d) * s.out_dim + s.out_dim;
        d = s.out_dim;
        break;
      case LayerKind::Lstm:
        n += 4LL * (static_cast<int64_t>(s.hidden) * (d + s.hidden) + s.hidden);
        d = s.hidden;
        break;
      case LayerKind::Blstm:
        n += 2 * 4LL * (static_cast<int64_t>(s.hidden) * (d + s.hidden) + s.hidden);
        d = 2 * s.hidden;
        break;
      case LayerKind::LayerNorm:
        n += 2LL * d;
        break;
      case LayerKind::Conv2d:
        n += static_cast<int64_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel +
             s.out_channels;
        d = s.out_channels * ceil_div(d / s.in_channels, s.stride_f);
        break;
      case LayerKind::Residual:
        n += 2 * (static_cast<int64_t>(s.in_channels) * s.in_channels * s.kernel * s.kernel +
                  s.in_channels);
        break;
      case LayerKind::TimePool:
        if (s.pool_concat) d *= s.pool_factor;
        break;
    }
  }
  return n;
}

void init_params(std::vector<NamedParam>& params, uint64_t seed, const InitPolicy& policy) {
  std::mt19937_64 rng(seed);
  if (policy.kind == InitPolicy::Gaussian) {
    const double stddev = std::sqrt(policy.variance);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& p : params)
      for (int64_t i = 0; i < p.value->numel(); ++i) (*p.value)[i] = stddev * dist(rng);
  } else {
    for (auto& p : params) {
      if (p.fan_in == 0) {
        // biases / gains keep their constructed defaults
        continue;
      }
      const double bound = std::sqrt(3.0 / p.fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (int64_t i = 0; i < p.value->numel(); ++i) (*p.value)[i] = dist(rng);
    }
  }
}

}  // namespace e2e
