// Fully-connected and GRU layers on top of the tensor graph, plus fast
// graph-free forward paths for inference-heavy call sites (target values,
// RND bonuses, acting).

#pragma once

#include <string>
#include <vector>

#include "supe/rng.hpp"
#include "supe/tensor.hpp"

namespace supe {

enum class Act { None, Relu, Tanh };

template <class S>
inline S apply_act(Act a, S x) {
  switch (a) {
    case Act::Relu: return x > S(0) ? x : S(0);
    case Act::Tanh: return std::tanh(x);
    default: return x;
  }
}

template <class S>
struct Linear {
  Tensor<S> W;  // [in, out], row-major, y = x W + b
  Tensor<S> b;  // [out]

  int in() const { return W.shape()[0]; }
  int out() const { return W.shape()[1]; }

  Tensor<S> forward(const Tensor<S>& x) const { return add(matmul(x, W), b); }

  // y[batch*out] = x[batch*in] W + b, no graph
  void forward_values(const S* x, int batch, S* y) const {
    int n = out();
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < n; ++j) y[i * n + j] = b.val()[j];
    gemm<S>(false, false, batch, n, in(), x, W.val().data(), y, S(1));
  }
};

template <class S>
Linear<S> make_linear(Rng& rng, int in, int out) {
  // Xavier-uniform weights, zero biases
  double limit = std::sqrt(6.0 / (in + out));
  std::vector<S> w((size_t)in * out);
  for (auto& v : w) v = uniform<S>(rng, -limit, limit);
  Linear<S> l;
  l.W = Tensor<S>::from({in, out}, std::move(w)).set_requires_grad();
  l.b = Tensor<S>::zeros({out}).set_requires_grad();
  return l;
}

// MLP: per hidden layer optionally Dense -> LayerNorm -> activation,
// final layer affine only.
template <class S>
struct Mlp {
  std::vector<Linear<S>> layers;
  std::vector<Act> acts;             // per layer; final usually None
  std::vector<char> use_ln;          // per layer
  std::vector<Tensor<S>> ln_gain, ln_bias;

  int in() const { return layers.front().in(); }
  int out() const { return layers.back().out(); }

  Tensor<S> forward(const Tensor<S>& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != in())
      throw error("shape", "mlp_forward: input " + shape_str(x.shape()) +
                               " does not match first layer [*," +
                               std::to_string(in()) + "]");
    Tensor<S> h = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      h = layers[l].forward(h);
      if (use_ln[l]) h = layer_norm(h, ln_gain[l], ln_bias[l]);
      if (acts[l] == Act::Relu) h = relu(h);
      else if (acts[l] == Act::Tanh) h = tanh_op(h);
    }
    return h;
  }

  void forward_values(const S* x, int batch, S* y) const {
    std::vector<S> buf_a((size_t)batch * widest()), buf_b((size_t)batch * widest());
    const S* cur = x;
    S* nxt = buf_a.data();
    for (size_t l = 0; l < layers.size(); ++l) {
      int n = layers[l].out();
      S* dst = (l + 1 == layers.size()) ? y : nxt;
      layers[l].forward_values(cur, batch, dst);
      if (use_ln[l]) {
        const S eps = S(1e-5);
        for (int i = 0; i < batch; ++i) {
          S mu(0), var(0);
          for (int j = 0; j < n; ++j) mu += dst[i * n + j];
          mu /= S(n);
          for (int j = 0; j < n; ++j) {
            S d = dst[i * n + j] - mu;
            var += d * d;
          }
          var /= S(n);
          S is = S(1) / std::sqrt(var + eps);
          for (int j = 0; j < n; ++j)
            dst[i * n + j] = (dst[i * n + j] - mu) * is * ln_gain[l].val()[j] +
                             ln_bias[l].val()[j];
        }
      }
      if (acts[l] != Act::None)
        for (int i = 0; i < batch * n; ++i) dst[i] = apply_act(acts[l], dst[i]);
      cur = dst;
      nxt = (nxt == buf_a.data()) ? buf_b.data() : buf_a.data();
    }
  }

  std::vector<S> forward_values(const std::vector<S>& x, int batch) const {
    std::vector<S> y((size_t)batch * out());
    forward_values(x.data(), batch, y.data());
    return y;
  }

  void collect_params(std::vector<Tensor<S>>& out_p, std::vector<std::string>& names,
                      const std::string& prefix) const {
    for (size_t l = 0; l < layers.size(); ++l) {
      out_p.push_back(layers[l].W);
      names.push_back(prefix + ".l" + std::to_string(l) + ".W");
      out_p.push_back(layers[l].b);
      names.push_back(prefix + ".l" + std::to_string(l) + ".b");
      if (use_ln[l]) {
        out_p.push_back(ln_gain[l]);
        names.push_back(prefix + ".l" + std::to_string(l) + ".ln_g");
        out_p.push_back(ln_bias[l]);
        names.push_back(prefix + ".l" + std::to_string(l) + ".ln_b");
      }
    }
  }

 private:
  int widest() const {
    int w = 0;
    for (auto& l : layers) w = std::max(w, l.out());
    return w;
  }
};

template <class S>
Mlp<S> make_mlp(Rng& rng, int in, const std::vector<int>& hidden, int out,
                Act hidden_act = Act::Relu, bool layernorm = false) {
  Mlp<S> m;
  int prev = in;
  for (int h : hidden) {
    m.layers.push_back(make_linear<S>(rng, prev, h));
    m.acts.push_back(hidden_act);
    m.use_ln.push_back(layernorm ? 1 : 0);
    m.ln_gain.push_back(layernorm ? Tensor<S>::full({h}, S(1)).set_requires_grad()
                                  : Tensor<S>());
    m.ln_bias.push_back(layernorm ? Tensor<S>::zeros({h}).set_requires_grad()
                                  : Tensor<S>());
    prev = h;
  }
  m.layers.push_back(make_linear<S>(rng, prev, out));
  m.acts.push_back(Act::None);
  m.use_ln.push_back(0);
  m.ln_gain.push_back(Tensor<S>());
  m.ln_bias.push_back(Tensor<S>());
  return m;
}

template <class S>
Tensor<S> mlp_forward(const Mlp<S>& m, const Tensor<S>& x) {
  return m.forward(x);
}

// GRU, gate matrices over concat(x, h):
//   z = sigmoid([x,h] Wz + bz)
//   r = sigmoid([x,h] Wr + br)
//   hcand = tanh([x, r*h] Wh + bh)
//   h' = (1-z)*h + z*hcand
template <class S>
struct Gru {
  struct Layer {
    Linear<S> zg, rg, hg;
  };
  std::vector<Layer> layers;
  int input = 0, hidden = 0;

  Tensor<S> step(int l, const Tensor<S>& x, const Tensor<S>& h) const {
    auto xh = concat_cols(x, h);
    auto z = sigmoid(layers[l].zg.forward(xh));
    auto r = sigmoid(layers[l].rg.forward(xh));
    auto hcand = tanh_op(layers[l].hg.forward(concat_cols(x, mul(r, h))));
    return add(mul(sub(Tensor<S>::full(h.shape(), S(1)), z), h), mul(z, hcand));
  }

  void collect_params(std::vector<Tensor<S>>& out_p, std::vector<std::string>& names,
                      const std::string& prefix) const {
    for (size_t l = 0; l < layers.size(); ++l) {
      auto base = prefix + ".g" + std::to_string(l);
      out_p.push_back(layers[l].zg.W); names.push_back(base + ".Wz");
      out_p.push_back(layers[l].zg.b); names.push_back(base + ".bz");
      out_p.push_back(layers[l].rg.W); names.push_back(base + ".Wr");
      out_p.push_back(layers[l].rg.b); names.push_back(base + ".br");
      out_p.push_back(layers[l].hg.W); names.push_back(base + ".Wh");
      out_p.push_back(layers[l].hg.b); names.push_back(base + ".bh");
    }
  }
};

template <class S>
Gru<S> make_gru(Rng& rng, int input, int hidden, int num_layers) {
  if (num_layers < 1) throw error("config", "gru: layer count must be >= 1");
  Gru<S> g;
  g.input = input;
  g.hidden = hidden;
  for (int l = 0; l < num_layers; ++l) {
    int in = (l == 0 ? input : hidden) + hidden;
    g.layers.push_back({make_linear<S>(rng, in, hidden),
                        make_linear<S>(rng, in, hidden),
                        make_linear<S>(rng, in, hidden)});
  }
  return g;
}

// seq: [batch, T, input]; h0: [batch, hidden]; returns final hidden state
// of the top layer.
template <class S>
Tensor<S> gru_forward(const Gru<S>& g, const Tensor<S>& seq, const Tensor<S>& h0) {
  if (seq.shape().size() != 3 || seq.shape()[2] != g.input)
    throw error("shape", "gru_forward: seq " + shape_str(seq.shape()) +
                             " does not match input size " + std::to_string(g.input));
  int T = seq.shape()[1];
  if (T < 1) throw error("shape", "gru_forward: empty sequence");
  std::vector<Tensor<S>> h(g.layers.size(), h0);
  for (int t = 0; t < T; ++t) {
    Tensor<S> x = slice_time(seq, t);
    for (size_t l = 0; l < g.layers.size(); ++l) {
      h[l] = g.step((int)l, x, h[l]);
      x = h[l];
    }
  }
  return h.back();
}

}  // namespace supe
