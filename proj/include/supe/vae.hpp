// Unsupervised skill pretraining: a VAE over length-H trajectory segments.
// GRU encoder over concatenated (s, a) steps -> Gaussian over the skill
// latent z; state-conditioned Gaussian prior p(z | s0); MLP decoder policy
// pi(a | s, z) trained to reconstruct the segment's actions.
//
// loss = beta * KL(enc || prior) - E_{z~enc}[ sum_h log pi(a_h | s_h, z) ]
// with one reparameterized z sample per segment.

#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "supe/adam.hpp"
#include "supe/dataset.hpp"
#include "supe/dists.hpp"
#include "supe/nn.hpp"

namespace supe {

struct VaeConfig {
  int H = 4;
  int d_z = 8;
  float beta = 0.1f;
  int gru_hidden = 64;
  int gru_layers = 1;
  int mlp_width = 64;
  int mlp_depth = 2;
  int batch = 256;
  int steps = 20000;
  float lr = 3e-4f;

  void validate() const {
    if (H < 2) throw error("config", "vae: H must be >= 2");
    if (d_z < 1) throw error("config", "vae: d_z must be >= 1");
    if (beta < 0) throw error("config", "vae: beta must be >= 0");
  }
};

struct Segment {
  int traj = 0, offset = 0;
  std::vector<float> states;   // (H+1) * obs_dim, includes boundary state s_H
  std::vector<float> actions;  // H * act_dim
};

template <class S>
struct Vae {
  VaeConfig cfg;
  int obs_dim = 0, act_dim = 0;
  Gru<S> enc;
  Linear<S> enc_mu, enc_ls;
  Mlp<S> prior_body;
  Linear<S> prior_mu, prior_ls;
  Mlp<S> dec_body;
  Linear<S> dec_mu, dec_ls;

  void collect_params(std::vector<Tensor<S>>& p, std::vector<std::string>& n) const {
    enc.collect_params(p, n, "enc");
    p.push_back(enc_mu.W); n.push_back("enc_mu.W");
    p.push_back(enc_mu.b); n.push_back("enc_mu.b");
    p.push_back(enc_ls.W); n.push_back("enc_ls.W");
    p.push_back(enc_ls.b); n.push_back("enc_ls.b");
    prior_body.collect_params(p, n, "prior");
    p.push_back(prior_mu.W); n.push_back("prior_mu.W");
    p.push_back(prior_mu.b); n.push_back("prior_mu.b");
    p.push_back(prior_ls.W); n.push_back("prior_ls.W");
    p.push_back(prior_ls.b); n.push_back("prior_ls.b");
    dec_body.collect_params(p, n, "dec");
    p.push_back(dec_mu.W); n.push_back("dec_mu.W");
    p.push_back(dec_mu.b); n.push_back("dec_mu.b");
    p.push_back(dec_ls.W); n.push_back("dec_ls.W");
    p.push_back(dec_ls.b); n.push_back("dec_ls.b");
  }
};

template <class S>
Vae<S> make_vae(const VaeConfig& cfg, int obs_dim, int act_dim, Rng& rng) {
  cfg.validate();
  Vae<S> v;
  v.cfg = cfg;
  v.obs_dim = obs_dim;
  v.act_dim = act_dim;
  // bodies end in a linear layer; call sites apply the final ReLU
  std::vector<int> widths(std::max(0, cfg.mlp_depth - 1), cfg.mlp_width);
  v.enc = make_gru<S>(rng, obs_dim + act_dim, cfg.gru_hidden, cfg.gru_layers);
  v.enc_mu = make_linear<S>(rng, cfg.gru_hidden, cfg.d_z);
  v.enc_ls = make_linear<S>(rng, cfg.gru_hidden, cfg.d_z);
  v.prior_body = make_mlp<S>(rng, obs_dim, widths, cfg.mlp_width, Act::Relu);
  v.prior_mu = make_linear<S>(rng, cfg.mlp_width, cfg.d_z);
  v.prior_ls = make_linear<S>(rng, cfg.mlp_width, cfg.d_z);
  v.dec_body = make_mlp<S>(rng, obs_dim + cfg.d_z, widths, cfg.mlp_width, Act::Relu);
  v.dec_mu = make_linear<S>(rng, cfg.mlp_width, act_dim);
  v.dec_ls = make_linear<S>(rng, cfg.mlp_width, act_dim);
  return v;
}

// ---- segment sampling ----

inline Segment segment_at(const Dataset& ds, int traj, int offset, int H) {
  const Trajectory& t = ds[traj];
  Segment seg;
  seg.traj = traj;
  seg.offset = offset;
  int obs_dim = (int)t.states[0].size();
  int act_dim = (int)t.actions[0].size();
  seg.states.reserve((size_t)(H + 1) * obs_dim);
  seg.actions.reserve((size_t)H * act_dim);
  for (int h = 0; h <= H; ++h)
    seg.states.insert(seg.states.end(), t.states[offset + h].begin(),
                      t.states[offset + h].end());
  for (int h = 0; h < H; ++h)
    seg.actions.insert(seg.actions.end(), t.actions[offset + h].begin(),
                       t.actions[offset + h].end());
  return seg;
}

// Uniform over all valid (trajectory, offset) pairs. Trajectories shorter
// than H are skipped; `skipped` (when given) counts them.
inline std::vector<Segment> sample_segments(const Dataset& ds, int H, int B, Rng& rng,
                                            int* skipped = nullptr) {
  std::vector<int64_t> cum;  // cumulative count of valid offsets
  cum.reserve(ds.size() + 1);
  cum.push_back(0);
  int skip = 0;
  for (auto& t : ds) {
    int64_t n = (int64_t)t.actions.size() - H + 1;
    if (n <= 0) { n = 0; ++skip; }
    cum.push_back(cum.back() + n);
  }
  if (skipped) *skipped = skip;
  if (cum.back() == 0)
    throw error("data", "sample_segments: every trajectory is shorter than H");
  std::uniform_int_distribution<int64_t> pick(0, cum.back() - 1);
  std::vector<Segment> out;
  out.reserve(B);
  for (int i = 0; i < B; ++i) {
    int64_t k = pick(rng);
    int traj = (int)(std::upper_bound(cum.begin(), cum.end(), k) - cum.begin()) - 1;
    out.push_back(segment_at(ds, traj, (int)(k - cum[traj]), H));
  }
  return out;
}

// ---- graph-building forward passes ----

template <class S>
std::pair<Tensor<S>, Tensor<S>> encode_batch(const Vae<S>& v,
                                             const std::vector<Segment>& segs) {
  int B = (int)segs.size();
  int H = v.cfg.H, od = v.obs_dim, ad = v.act_dim, in = od + ad;
  std::vector<S> seq((size_t)B * H * in);
  for (int i = 0; i < B; ++i) {
    if ((int)segs[i].actions.size() != H * ad)
      throw error("shape", "encode: segment length does not match H");
    for (int h = 0; h < H; ++h) {
      S* dst = &seq[((size_t)i * H + h) * in];
      for (int j = 0; j < od; ++j) dst[j] = (S)segs[i].states[h * od + j];
      for (int j = 0; j < ad; ++j) dst[od + j] = (S)segs[i].actions[h * ad + j];
    }
  }
  auto seq_t = Tensor<S>::from({B, H, in}, std::move(seq));
  auto h0 = Tensor<S>::zeros({B, v.cfg.gru_hidden});
  auto hT = gru_forward(v.enc, seq_t, h0);
  return {v.enc_mu.forward(hT), clamp_log_std(v.enc_ls.forward(hT))};
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> encode(const Vae<S>& v, const Segment& seg) {
  return encode_batch(v, std::vector<Segment>{seg});
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> prior_heads(const Vae<S>& v, const Tensor<S>& s0) {
  auto h = relu(v.prior_body.forward(s0));
  return {v.prior_mu.forward(h), clamp_log_std(v.prior_ls.forward(h))};
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> decoder_heads(const Vae<S>& v, const Tensor<S>& s,
                                              const Tensor<S>& z) {
  auto h = relu(v.dec_body.forward(concat_cols(s, z)));
  return {v.dec_mu.forward(h), clamp_log_std(v.dec_ls.forward(h))};
}

template <class S>
struct VaeLossResult {
  Tensor<S> loss;  // beta*kl + nll
  double kl = 0;   // mean KL term
  double nll = 0;  // mean negative reconstruction log-likelihood
};

// eps: [B, d_z] reparameterization noise (one sample per segment).
template <class S>
VaeLossResult<S> vae_loss(const Vae<S>& v, const std::vector<Segment>& segs, S beta,
                          const Tensor<S>& eps) {
  if (segs.empty()) throw error("data", "vae_loss: empty batch");
  int B = (int)segs.size(), H = v.cfg.H, od = v.obs_dim, ad = v.act_dim;

  auto [mu_q, ls_q] = encode_batch(v, segs);
  auto z = add(mu_q, mul(exp_op(ls_q), eps));

  std::vector<S> s0v((size_t)B * od);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < od; ++j) s0v[i * od + j] = (S)segs[i].states[j];
  auto s0 = Tensor<S>::from({B, od}, std::move(s0v));
  auto [mu_p, ls_p] = prior_heads(v, s0);
  auto kl = mean_all(kl_diag_gaussians(mu_q, ls_q, mu_p, ls_p));

  Tensor<S> nll;
  for (int h = 0; h < H; ++h) {
    std::vector<S> sv((size_t)B * od), av((size_t)B * ad);
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < od; ++j) sv[i * od + j] = (S)segs[i].states[h * od + j];
      for (int j = 0; j < ad; ++j) av[i * ad + j] = (S)segs[i].actions[h * ad + j];
    }
    auto s_h = Tensor<S>::from({B, od}, std::move(sv));
    auto a_h = Tensor<S>::from({B, ad}, std::move(av));
    auto [mu_a, ls_a] = decoder_heads(v, s_h, z);
    auto lp = mean_all(diag_gaussian_log_prob(a_h, mu_a, ls_a));
    nll = nll.defined() ? sub(nll, lp) : neg(lp);
  }

  VaeLossResult<S> res;
  res.kl = (double)kl.item();
  res.nll = (double)nll.item();
  res.loss = add(scale(kl, beta), nll);
  if (!std::isfinite((double)res.loss.item())) {
    std::string which = !std::isfinite(res.kl) ? "KL" : "reconstruction";
    throw error("numeric", "vae_loss: non-finite " + which + " term");
  }
  return res;
}

// ---- training ----

struct VaeTrainResult {
  Vae<float> vae;
  std::vector<float> loss_curve;
  std::vector<float> kl_curve;
};

inline VaeTrainResult train_vae(const VaeConfig& cfg, const Dataset& ds, uint64_t seed,
                                int obs_dim = kObsDim, int act_dim = kActDim) {
  cfg.validate();
  if (ds.empty()) throw error("data", "train_vae: empty dataset");
  Rng init_rng = sub_rng(seed, 0);
  Rng data_rng = sub_rng(seed, 1);
  Rng noise_rng = sub_rng(seed, 2);
  VaeTrainResult res;
  res.vae = make_vae<float>(cfg, obs_dim, act_dim, init_rng);
  std::vector<Tensor<float>> params;
  std::vector<std::string> names;
  res.vae.collect_params(params, names);
  Adam<float> opt(params, names, cfg.lr);
  for (int it = 0; it < cfg.steps; ++it) {
    auto segs = sample_segments(ds, cfg.H, cfg.batch, data_rng);
    std::vector<float> noise((size_t)cfg.batch * cfg.d_z);
    for (auto& e : noise) e = gaussian<float>(noise_rng);
    auto eps = Tensor<float>::from({cfg.batch, cfg.d_z}, std::move(noise));
    // KL warmup: ramp beta over the first half of training so the encoder
    // commits to informative latents before the prior term bites
    float beta = cfg.beta * std::min(1.0f, (float)it / (0.5f * cfg.steps));
    opt.zero_grad();
    VaeLossResult<float> l;
    try {
      l = vae_loss(res.vae, segs, beta, eps);
    } catch (const error& e) {
      throw error("numeric", "train_vae diverged at step " + std::to_string(it) +
                                 ": " + e.what());
    }
    backward(l.loss);
    opt.step();
    res.loss_curve.push_back(l.loss.item());
    res.kl_curve.push_back((float)l.kl);
  }
  return res;
}

// ---- skill execution ----

struct SkillRollout {
  std::vector<EnvState> states;  // visited states, starting state first
  std::vector<std::array<float, kActDim>> actions;
  std::vector<float> rewards;
  EnvState end;
  bool done = false, goal = false;
  int steps = 0;
};

// Decoder action for a single observation; mean when sample == false.
template <class S>
std::array<float, kActDim> skill_action(const Vae<S>& v,
                                        const std::array<float, kObsDim>& obs,
                                        const std::vector<S>& z, bool sample, Rng& rng) {
  std::vector<S> in(v.obs_dim + v.cfg.d_z);
  for (int j = 0; j < v.obs_dim; ++j) in[j] = (S)obs[j];
  for (int j = 0; j < v.cfg.d_z; ++j) in[v.obs_dim + j] = z[j];
  std::vector<S> h((size_t)v.cfg.mlp_width);
  v.dec_body.forward_values(in.data(), 1, h.data());
  for (auto& x : h) x = x > S(0) ? x : S(0);
  std::vector<S> mu(v.act_dim), ls(v.act_dim);
  v.dec_mu.forward_values(h.data(), 1, mu.data());
  v.dec_ls.forward_values(h.data(), 1, ls.data());
  std::array<float, kActDim> a{};
  for (int j = 0; j < v.act_dim; ++j) {
    double x = mu[j];
    if (sample) {
      double sd = std::exp(std::min(kLogStdMax, std::max(kLogStdMin, (double)ls[j])));
      x += sd * gaussian<double>(rng);
    }
    a[j] = (float)std::min(1.0, std::max(-1.0, x));
  }
  return a;
}

// Executes the decoder for up to H env steps (stops early on termination).
template <class S>
SkillRollout rollout_skill(const MazeSpec& spec, const EnvState& start, const Vae<S>& v,
                           const std::vector<S>& z, int H, bool sample, Rng& rng) {
  for (S x : z)
    if (!std::isfinite((double)x)) throw error("numeric", "rollout_skill: non-finite z");
  SkillRollout out;
  out.states.push_back(start);
  EnvState s = start;
  for (int h = 0; h < H; ++h) {
    auto a = skill_action(v, observe(s), z, sample, rng);
    auto res = step(spec, s, a[0], a[1]);
    s = res.state;
    out.actions.push_back(a);
    out.rewards.push_back(res.reward);
    out.states.push_back(s);
    ++out.steps;
    if (res.done) {
      out.done = true;
      out.goal = res.goal;
      break;
    }
  }
  out.end = s;
  return out;
}

// ---- SUPV checkpoint: magic, version, named parameter blocks ----
// block: name_len u32 | name bytes | rank u32 | dims u32... | f32 data

inline void save_vae(const std::string& path, const Vae<float>& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os.write("SUPV", 4);
  detail::put_u32(os, 1);
  auto put_block = [&](const std::string& name, const std::vector<int>& shape,
                       const std::vector<float>& data) {
    detail::put_u32(os, (uint32_t)name.size());
    os.write(name.data(), (std::streamsize)name.size());
    detail::put_u32(os, (uint32_t)shape.size());
    for (int d : shape) detail::put_u32(os, (uint32_t)d);
    for (float x : data) detail::put_f32(os, x);
  };
  std::vector<float> cfgv = {(float)v.cfg.H,        (float)v.cfg.d_z,
                             v.cfg.beta,            (float)v.cfg.gru_hidden,
                             (float)v.cfg.gru_layers, (float)v.cfg.mlp_width,
                             (float)v.cfg.mlp_depth, (float)v.cfg.batch,
                             (float)v.cfg.steps,    v.cfg.lr,
                             (float)v.obs_dim,      (float)v.act_dim};
  detail::put_u32(os, 0);  // placeholder block count, rewritten below
  std::vector<Tensor<float>> params;
  std::vector<std::string> names;
  v.collect_params(params, names);
  put_block("config", {(int)cfgv.size()}, cfgv);
  for (size_t i = 0; i < params.size(); ++i)
    put_block(names[i], params[i].shape(), params[i].val());
  os.seekp(8);
  detail::put_u32(os, (uint32_t)(params.size() + 1));
  if (!os) throw error("io", "write failed for '" + path + "'");
}

inline Vae<float> load_vae(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error("io", "cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SUPV")
    throw error("io", "'" + path + "' is not a SUPV checkpoint");
  if (detail::get_u32(is) != 1) throw error("io", "unsupported SUPV version");
  uint32_t nblocks = detail::get_u32(is);
  auto get_block = [&](std::string& name, std::vector<int>& shape,
                       std::vector<float>& data) {
    uint32_t nl = detail::get_u32(is);
    name.resize(nl);
    is.read(name.data(), nl);
    uint32_t rank = detail::get_u32(is);
    shape.resize(rank);
    size_t sz = 1;
    for (auto& d : shape) { d = (int)detail::get_u32(is); sz *= (size_t)d; }
    data.resize(sz);
    for (auto& x : data) x = detail::get_f32(is);
  };
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
  get_block(name, shape, data);
  if (name != "config" || data.size() != 12)
    throw error("io", "SUPV: missing config block");
  VaeConfig cfg;
  cfg.H = (int)data[0]; cfg.d_z = (int)data[1]; cfg.beta = data[2];
  cfg.gru_hidden = (int)data[3]; cfg.gru_layers = (int)data[4];
  cfg.mlp_width = (int)data[5]; cfg.mlp_depth = (int)data[6];
  cfg.batch = (int)data[7]; cfg.steps = (int)data[8]; cfg.lr = data[9];
  Rng rng = make_rng(0);
  Vae<float> v = make_vae<float>(cfg, (int)data[10], (int)data[11], rng);
  std::vector<Tensor<float>> params;
  std::vector<std::string> names;
  v.collect_params(params, names);
  for (uint32_t b = 1; b < nblocks; ++b) {
    get_block(name, shape, data);
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw error("io", "SUPV: unknown block '" + name + "'");
    auto& p = params[it - names.begin()];
    if (p.shape() != shape || (size_t)p.size() != data.size())
      throw error("io", "SUPV: shape mismatch in block '" + name + "'");
    p.val() = data;
  }
  return v;
}

}  // namespace supe
