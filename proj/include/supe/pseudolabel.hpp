// Pseudo-labeling of unlabeled offline data for the high-level agent:
// each length-H segment gets a skill-latent label z (sampled once from the
// trajectory encoder, tanh-squashed) and an optimistic reward label
// r = base + alpha * ||g(s0,z) - g_bar(s0,z)||^2 recomputed at every use.
// The RND target g_bar is frozen at construction; the predictor g trains
// only on online transitions.

#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "supe/adam.hpp"
#include "supe/nn.hpp"
#include "supe/vae.hpp"

namespace supe {

struct HighLevelTransition {
  std::vector<float> s;       // s0 observation
  std::vector<float> z;       // squashed high-level action, strictly in (-1,1)^d
  float r = 0.0f;
  std::vector<float> s_next;  // s after the executed steps
  bool done = false;          // goal termination; always false for offline data
  int steps = 1;              // executed env steps (discount exponent, <= H)
  bool offline = false;
};

struct SkillLabel {
  int traj = 0, offset = 0;
  std::vector<float> s0, s_end, z_squashed;
};

// FNV-1a over the raw bytes of every parameter tensor.
template <class S>
uint64_t params_checksum(const Mlp<S>& m) {
  uint64_t h = 1469598103934665603ull;
  std::vector<Tensor<S>> p;
  std::vector<std::string> n;
  m.collect_params(p, n, "m");
  for (auto& t : p) {
    const unsigned char* bytes = (const unsigned char*)t.val().data();
    for (size_t i = 0; i < t.val().size() * sizeof(S); ++i)
      h = (h ^ bytes[i]) * 1099511628211ull;
  }
  return h;
}

// On low-dimensional smooth inputs a plain RND predictor generalizes across
// the whole space and the novelty signal never localizes. Both networks
// therefore see a frozen random Fourier expansion [sin(Wx), cos(Wx)]; the
// state block of W uses a high frequency scale (decorrelation length on the
// order of one maze cell) and the skill block a low one.
#ifndef SUPE_RND_STATE_FREQ
#define SUPE_RND_STATE_FREQ 3.0f
#endif
#ifndef SUPE_RND_SKILL_FREQ
#define SUPE_RND_SKILL_FREQ 0.5f
#endif
constexpr int kRndFreqs = 64;
constexpr float kRndStateFreqScale = SUPE_RND_STATE_FREQ;
constexpr float kRndSkillFreqScale = SUPE_RND_SKILL_FREQ;

template <class S>
struct RndPair {
  Mlp<S> predictor;
  Mlp<S> target;  // frozen after initialization
  Adam<S> opt;
  int in_raw = 0;             // raw (s, z) dim; nets take the expanded dim
  int state_dim = 0;          // leading dims of the raw input that are state
  std::vector<S> freq;        // in_raw x kRndFreqs, frozen
  uint64_t target_checksum = 0;
};

// FNV-1a over the target parameters and the frozen frequency matrix; both must
// stay byte-identical for the lifetime of the pair.
template <class S>
uint64_t rnd_checksum(const RndPair<S>& r) {
  uint64_t h = params_checksum(r.target);
  const unsigned char* fb = (const unsigned char*)r.freq.data();
  for (size_t i = 0; i < r.freq.size() * sizeof(S); ++i)
    h = (h ^ fb[i]) * 1099511628211ull;
  return h;
}

template <class S>
RndPair<S> make_rnd(int in_dim, int feat_dim, int width, int depth, uint64_t seed,
                    double lr = 3e-4, int state_dim = -1) {
  RndPair<S> r;
  r.in_raw = in_dim;
  r.state_dim = state_dim < 0 ? in_dim : state_dim;
  Rng rng_f = sub_rng(seed, 13);
  r.freq.resize((size_t)in_dim * kRndFreqs);
  for (int i = 0; i < in_dim; ++i) {
    S scale = i < r.state_dim ? (S)kRndStateFreqScale : (S)kRndSkillFreqScale;
    for (int k = 0; k < kRndFreqs; ++k)
      r.freq[(size_t)i * kRndFreqs + k] = scale * gaussian<S>(rng_f);
  }
  std::vector<int> hidden(depth, width);
  Rng rng_p = sub_rng(seed, 10);
  Rng rng_t = sub_rng(seed, 11);
  r.predictor = make_mlp<S>(rng_p, 2 * kRndFreqs, hidden, feat_dim, Act::Relu);
  r.target = make_mlp<S>(rng_t, 2 * kRndFreqs, hidden, feat_dim, Act::Relu);
  for (auto& layer : r.target.layers) {
    layer.W.set_requires_grad(false);
    layer.b.set_requires_grad(false);
  }
  std::vector<Tensor<S>> p;
  std::vector<std::string> n;
  r.predictor.collect_params(p, n, "rnd");
  r.opt = Adam<S>(p, n, lr);
  r.target_checksum = rnd_checksum(r);
  return r;
}

namespace detail {

template <class S>
std::vector<S> rnd_input(const std::vector<float>& s, const std::vector<float>& z) {
  std::vector<S> in(s.size() + z.size());
  for (size_t j = 0; j < s.size(); ++j) in[j] = (S)s[j];
  for (size_t j = 0; j < z.size(); ++j) in[s.size() + j] = (S)z[j];
  return in;
}

// raw batch (B x in_raw) -> [sin(Wx), cos(Wx)] (B x 2*kRndFreqs)
template <class S>
std::vector<S> rnd_expand(const RndPair<S>& r, const std::vector<S>& raw, int B) {
  std::vector<S> out((size_t)B * 2 * kRndFreqs);
  for (int i = 0; i < B; ++i) {
    const S* x = &raw[(size_t)i * r.in_raw];
    for (int k = 0; k < kRndFreqs; ++k) {
      S dot = S(0);
      for (int j = 0; j < r.in_raw; ++j)
        dot += x[j] * r.freq[(size_t)j * kRndFreqs + k];
      out[(size_t)i * 2 * kRndFreqs + k] = std::sin(dot);
      out[(size_t)i * 2 * kRndFreqs + kRndFreqs + k] = std::cos(dot);
    }
  }
  return out;
}

}  // namespace detail

// Squared feature error per input; value-only, no gradient side effects.
template <class S>
std::vector<double> rnd_bonus_batch(const RndPair<S>& r,
                                    const std::vector<std::vector<S>>& inputs) {
  int B = (int)inputs.size();
  int d = r.in_raw, f = r.predictor.out();
  std::vector<S> raw((size_t)B * d);
  for (int i = 0; i < B; ++i) std::copy_n(inputs[i].data(), d, &raw[(size_t)i * d]);
  auto x = detail::rnd_expand(r, raw, B);
  std::vector<S> yp((size_t)B * f), yt((size_t)B * f);
  r.predictor.forward_values(x.data(), B, yp.data());
  r.target.forward_values(x.data(), B, yt.data());
  std::vector<double> out(B, 0.0);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < f; ++j) {
      double e = (double)yp[(size_t)i * f + j] - (double)yt[(size_t)i * f + j];
      out[i] += e * e;
    }
  return out;
}

template <class S>
double rnd_bonus(const RndPair<S>& r, const std::vector<float>& s,
                 const std::vector<float>& z) {
  return rnd_bonus_batch(r, {detail::rnd_input<S>(s, z)})[0];
}

// One Adam step on mean ||g(s,z) - g_bar(s,z)||^2 over an online batch.
template <class S>
double rnd_update(RndPair<S>& r, const std::vector<HighLevelTransition>& batch) {
  if (batch.empty()) throw error("data", "rnd_update: empty batch");
  for (auto& t : batch)
    if (t.offline)
      throw error("contract", "rnd_update: offline transition in RND batch");
  int B = (int)batch.size(), d = r.in_raw, f = r.predictor.out();
  std::vector<S> raw((size_t)B * d);
  for (int i = 0; i < B; ++i) {
    auto in = detail::rnd_input<S>(batch[i].s, batch[i].z);
    std::copy_n(in.data(), d, &raw[(size_t)i * d]);
  }
  auto x = detail::rnd_expand(r, raw, B);
  auto xt = Tensor<S>::from({B, 2 * kRndFreqs}, x);
  std::vector<S> yt((size_t)B * f);
  r.target.forward_values(x.data(), B, yt.data());
  auto target = Tensor<S>::from({B, f}, std::move(yt));
  auto err = sub(r.predictor.forward(xt), target);
  auto loss = scale(mean_all(mul(err, err)), S(f));  // mean over batch of sq. norms
  r.opt.zero_grad();
  backward(loss);
  r.opt.step();
  return (double)loss.item();
}

// ---- reward estimate ----

enum class RewardMode { ConstantMin, Learned };

template <class S>
struct RewardEstimator {
  RewardMode mode = RewardMode::ConstantMin;
  float r_min = -1.0f;
  std::optional<Mlp<S>> model;  // r(s, z), learned mode only
  Adam<S> opt;
};

template <class S>
RewardEstimator<S> make_reward_estimator(RewardMode mode, float r_min, int in_dim,
                                         int width, int depth, uint64_t seed,
                                         double lr = 3e-4) {
  RewardEstimator<S> e;
  e.mode = mode;
  e.r_min = r_min;
  if (mode == RewardMode::Learned) {
    Rng rng = sub_rng(seed, 12);
    e.model = make_mlp<S>(rng, in_dim, std::vector<int>(depth, width), 1, Act::Relu);
    std::vector<Tensor<S>> p;
    std::vector<std::string> n;
    e.model->collect_params(p, n, "reward");
    e.opt = Adam<S>(p, n, lr);
  }
  return e;
}

template <class S>
std::vector<double> base_reward_batch(const RewardEstimator<S>& e,
                                      const std::vector<std::vector<S>>& inputs) {
  if (e.mode == RewardMode::ConstantMin)
    return std::vector<double>(inputs.size(), (double)e.r_min);
  int B = (int)inputs.size(), d = e.model->in();
  std::vector<S> x((size_t)B * d);
  for (int i = 0; i < B; ++i) std::copy_n(inputs[i].data(), d, &x[(size_t)i * d]);
  std::vector<S> y(B);
  e.model->forward_values(x.data(), B, y.data());
  return std::vector<double>(y.begin(), y.end());
}

// r_UCB(s, z) = base(s, z) + alpha * rnd_bonus(s, z)
template <class S>
double ucb_reward(const RewardEstimator<S>& e, const RndPair<S>& r,
                  const std::vector<float>& s, const std::vector<float>& z,
                  double alpha) {
  if (alpha < 0) throw error("config", "ucb_reward: alpha must be >= 0");
  auto in = detail::rnd_input<S>(s, z);
  return base_reward_batch(e, {in})[0] + alpha * rnd_bonus_batch(r, {in})[0];
}

// One Adam step on ||r_model(s, z) - r||^2 over online transitions.
template <class S>
double reward_model_update(RewardEstimator<S>& e,
                           const std::vector<HighLevelTransition>& batch) {
  if (e.mode != RewardMode::Learned)
    throw error("contract", "reward_model_update called in constant-min mode");
  if (batch.empty()) throw error("data", "reward_model_update: empty batch");
  int B = (int)batch.size(), d = e.model->in();
  std::vector<S> x((size_t)B * d), y(B);
  for (int i = 0; i < B; ++i) {
    auto in = detail::rnd_input<S>(batch[i].s, batch[i].z);
    std::copy_n(in.data(), d, &x[(size_t)i * d]);
    y[i] = (S)batch[i].r;
  }
  auto pred = e.model->forward(Tensor<S>::from({B, d}, std::move(x)));
  auto err = sub(pred, Tensor<S>::from({B, 1}, std::move(y)));
  auto loss = mean_all(mul(err, err));
  e.opt.zero_grad();
  backward(loss);
  e.opt.step();
  return (double)loss.item();
}

// ---- label precomputation (before online learning; labels never change) ----

// Non-overlapping segments at stride H; one sampled z per segment.
inline std::vector<SkillLabel> precompute_labels(const Vae<float>& v, const Dataset& ds,
                                                 int H, uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<SkillLabel> out;
  for (int ti = 0; ti < (int)ds.size(); ++ti) {
    int L = (int)ds[ti].actions.size();
    for (int off = 0; off + H <= L; off += H) {
      Segment seg = segment_at(ds, ti, off, H);
      auto [mu, ls] = encode(v, seg);
      SkillLabel lab;
      lab.traj = ti;
      lab.offset = off;
      lab.s0.assign(seg.states.begin(), seg.states.begin() + v.obs_dim);
      lab.s_end.assign(seg.states.end() - v.obs_dim, seg.states.end());
      lab.z_squashed.resize(v.cfg.d_z);
      for (int j = 0; j < v.cfg.d_z; ++j) {
        float z = mu.val()[j] + std::exp(ls.val()[j]) * gaussian<float>(rng);
        lab.z_squashed[j] = std::tanh(z);
      }
      out.push_back(std::move(lab));
    }
  }
  return out;
}

// Flat-agent analog: every low-level (s, a, s') transition becomes a label
// with the raw action as the "latent" (nudged strictly inside the cube).
inline std::vector<SkillLabel> flat_labels(const Dataset& ds) {
  const float lim = 1.0f - 1e-6f;
  std::vector<SkillLabel> out;
  for (int ti = 0; ti < (int)ds.size(); ++ti) {
    for (int off = 0; off < (int)ds[ti].actions.size(); ++off) {
      SkillLabel lab;
      lab.traj = ti;
      lab.offset = off;
      lab.s0.assign(ds[ti].states[off].begin(), ds[ti].states[off].end());
      lab.s_end.assign(ds[ti].states[off + 1].begin(), ds[ti].states[off + 1].end());
      for (float a : ds[ti].actions[off])
        lab.z_squashed.push_back(std::min(lim, std::max(-lim, a)));
      out.push_back(std::move(lab));
    }
  }
  return out;
}

// Samples B_off labels and relabels rewards fresh with the current UCB
// estimate; offline transitions never terminate and span `steps` env steps.
// The constant-min base is scaled to the SMDP macro-reward sum(gamma^k r_min)
// so offline labels live on the same scale as online macro-step rewards.
template <class S>
std::vector<HighLevelTransition> label_offline_batch(
    const std::vector<SkillLabel>& labels, const RewardEstimator<S>& est,
    const RndPair<S>& rnd, double alpha, int b_off, int steps, double gamma,
    Rng& rng) {
  if (labels.empty()) throw error("data", "label_offline_batch: no labels");
  std::vector<HighLevelTransition> out;
  out.reserve(b_off);
  std::vector<std::vector<S>> inputs;
  inputs.reserve(b_off);
  std::uniform_int_distribution<size_t> pick(0, labels.size() - 1);
  for (int i = 0; i < b_off; ++i) {
    const SkillLabel& lab = labels[pick(rng)];
    HighLevelTransition t;
    t.s = lab.s0;
    t.z = lab.z_squashed;
    t.s_next = lab.s_end;
    t.done = false;
    t.steps = steps;
    t.offline = true;
    inputs.push_back(detail::rnd_input<S>(t.s, t.z));
    out.push_back(std::move(t));
  }
  auto base = base_reward_batch(est, inputs);
  auto bonus = rnd_bonus_batch(rnd, inputs);
  double scale = 1.0;
  if (est.mode == RewardMode::ConstantMin)
    for (int k = 1; k < steps; ++k) scale += std::pow(gamma, k);
  for (int i = 0; i < b_off; ++i)
    out[i].r = (float)(scale * base[i] + alpha * bonus[i]);
  return out;
}

// ---- SUPL label table file ----
// "SUPL" | version u32 | count u32 | per entry: traj u32, offset u32,
// d_z u32, z_squashed f32...

inline void save_labels(const std::string& path, const std::vector<SkillLabel>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os.write("SUPL", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, (uint32_t)labels.size());
  for (auto& l : labels) {
    detail::put_u32(os, (uint32_t)l.traj);
    detail::put_u32(os, (uint32_t)l.offset);
    detail::put_u32(os, (uint32_t)l.z_squashed.size());
    for (float z : l.z_squashed) detail::put_f32(os, z);
  }
  if (!os) throw error("io", "write failed for '" + path + "'");
}

// s0 / s_end are rebuilt from the dataset the labels were computed on.
inline std::vector<SkillLabel> load_labels(const std::string& path, const Dataset& ds,
                                           int H) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error("io", "cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SUPL")
    throw error("io", "'" + path + "' is not a SUPL file");
  if (detail::get_u32(is) != 1) throw error("io", "unsupported SUPL version");
  uint32_t n = detail::get_u32(is);
  std::vector<SkillLabel> out(n);
  for (auto& l : out) {
    l.traj = (int)detail::get_u32(is);
    l.offset = (int)detail::get_u32(is);
    uint32_t dz = detail::get_u32(is);
    l.z_squashed.resize(dz);
    for (auto& z : l.z_squashed) z = detail::get_f32(is);
    if (l.traj >= (int)ds.size() || l.offset + H > (int)ds[l.traj].actions.size())
      throw error("io", "SUPL: label does not fit the dataset");
    l.s0.assign(ds[l.traj].states[l.offset].begin(), ds[l.traj].states[l.offset].end());
    l.s_end.assign(ds[l.traj].states[l.offset + H].begin(),
                   ds[l.traj].states[l.offset + H].end());
  }
  return out;
}

}  // namespace supe
