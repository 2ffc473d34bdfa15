// High-level off-policy actor-critic in the RLPD style: an ensemble of
// LayerNorm critics, tanh-Gaussian actor over the (squashed) skill space,
// entropy-free TD backups with the min over a random subset of target
// critics, and balanced online/offline batches.

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "supe/adam.hpp"
#include "supe/dists.hpp"
#include "supe/nn.hpp"
#include "supe/pseudolabel.hpp"

namespace supe {

struct AgentConfig {
  float gamma = 0.99f;
  int ensemble = 10;       // E critics
  int min_ensemble = 1;    // m: min over this many random target critics
  int utd = 4;             // gradient updates per macro-step
  int actor_delay = 4;
  int batch_online = 128;
  int batch_offline = 128;
  float init_temp = 0.05f;
  float target_entropy = 0.0f;  // 0 -> resolved to -act_dim/2
  float alpha = 8.0f;           // RND coefficient
  bool online_bonus = true;     // add alpha*bonus to online rewards too
  float polyak = 0.02f;
  int warmup_steps = 1000;      // env steps before agent updates
  int rnd_warmup = 2000;        // env steps before RND updates
  int width = 32;
  int depth = 2;
  float lr = 3e-4f;
  int buffer_capacity = 1000000;

  void validate() const {
    if (min_ensemble < 1 || min_ensemble > ensemble)
      throw error("config", "agent: need 1 <= min_ensemble <= ensemble");
    if (gamma <= 0.0f || gamma >= 1.0f)
      throw error("config", "agent: gamma must be in (0,1)");
    if (batch_online < 0 || batch_offline < 0 || batch_online + batch_offline == 0)
      throw error("config", "agent: bad batch split");
  }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

  void push(HighLevelTransition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);  // FIFO overwrite
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::vector<HighLevelTransition> sample(int n, Rng& rng) const {
    if (data_.empty()) throw error("data", "replay buffer empty");
    std::uniform_int_distribution<size_t> pick(0, data_.size() - 1);
    std::vector<HighLevelTransition> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(data_[pick(rng)]);
    return out;
  }

  size_t size() const { return data_.size(); }

 private:
  size_t capacity_, head_ = 0;
  std::vector<HighLevelTransition> data_;
};

template <class S>
struct Sac {
  AgentConfig cfg;
  int obs_dim = 0, act_dim = 0;  // act = skill latent dim (env action dim if flat)
  Mlp<S> actor_body;
  Linear<S> actor_mu, actor_ls;
  std::vector<Mlp<S>> critics, targets;
  Tensor<S> log_temp;
  Adam<S> opt_actor, opt_critic, opt_temp;
  long critic_updates = 0;
};

template <class S>
Sac<S> make_sac(const AgentConfig& cfg, int obs_dim, int act_dim, uint64_t seed) {
  cfg.validate();
  Sac<S> a;
  a.cfg = cfg;
  if (a.cfg.target_entropy == 0.0f) a.cfg.target_entropy = -0.5f * act_dim;
  a.obs_dim = obs_dim;
  a.act_dim = act_dim;
  std::vector<int> widths(std::max(0, cfg.depth - 1), cfg.width);
  Rng rng = sub_rng(seed, 20);
  a.actor_body = make_mlp<S>(rng, obs_dim, widths, cfg.width, Act::Relu);
  a.actor_mu = make_linear<S>(rng, cfg.width, act_dim);
  a.actor_ls = make_linear<S>(rng, cfg.width, act_dim);
  std::vector<int> chidden(cfg.depth, cfg.width);
  for (int e = 0; e < cfg.ensemble; ++e)
    a.critics.push_back(make_mlp<S>(rng, obs_dim + act_dim, chidden, 1, Act::Relu,
                                    /*layernorm=*/true));
  for (int e = 0; e < cfg.ensemble; ++e) {
    Rng dummy = rng;
    a.targets.push_back(make_mlp<S>(dummy, obs_dim + act_dim, chidden, 1, Act::Relu,
                                    /*layernorm=*/true));
    // start targets equal to the online critics and freeze them
    std::vector<Tensor<S>> src, dst;
    std::vector<std::string> n1, n2;
    a.critics[e].collect_params(src, n1, "c");
    a.targets[e].collect_params(dst, n2, "t");
    for (size_t i = 0; i < src.size(); ++i) {
      dst[i].val() = src[i].val();
      dst[i].set_requires_grad(false);
    }
  }
  a.log_temp = Tensor<S>::scalar(std::log((S)cfg.init_temp)).set_requires_grad();

  std::vector<Tensor<S>> pa, pc;
  std::vector<std::string> na, nc;
  a.actor_body.collect_params(pa, na, "actor");
  pa.push_back(a.actor_mu.W); na.push_back("actor_mu.W");
  pa.push_back(a.actor_mu.b); na.push_back("actor_mu.b");
  pa.push_back(a.actor_ls.W); na.push_back("actor_ls.W");
  pa.push_back(a.actor_ls.b); na.push_back("actor_ls.b");
  for (int e = 0; e < cfg.ensemble; ++e)
    a.critics[e].collect_params(pc, nc, "critic" + std::to_string(e));
  a.opt_actor = Adam<S>(pa, na, cfg.lr);
  a.opt_critic = Adam<S>(pc, nc, cfg.lr);
  a.opt_temp = Adam<S>({a.log_temp}, {"log_temp"}, cfg.lr);
  return a;
}

// ---- acting ----

enum class ActMode { Sample, Mean, Prior };

template <class S>
void actor_heads_values(const Sac<S>& a, const std::vector<S>& obs, int batch,
                        std::vector<S>& mu, std::vector<S>& ls) {
  std::vector<S> h((size_t)batch * a.cfg.width);
  a.actor_body.forward_values(obs.data(), batch, h.data());
  for (auto& x : h) x = x > S(0) ? x : S(0);
  mu.resize((size_t)batch * a.act_dim);
  ls.resize((size_t)batch * a.act_dim);
  a.actor_mu.forward_values(h.data(), batch, mu.data());
  a.actor_ls.forward_values(h.data(), batch, ls.data());
  for (auto& x : ls) x = (S)std::min(kLogStdMax, std::max(kLogStdMin, (double)x));
}

// Returns a squashed action strictly inside (-1,1)^act_dim.
// Prior mode samples the VAE's state-conditioned prior and squashes it;
// pass vae = nullptr for flat agents (falls back to uniform).
template <class S>
std::vector<float> act(const Sac<S>& a, const std::vector<float>& obs, ActMode mode,
                       const Vae<float>* vae, Rng& rng) {
  const float lim = 1.0f - 1e-6f;
  std::vector<float> out(a.act_dim);
  if (mode == ActMode::Prior) {
    if (vae) {
      std::vector<float> o(obs.begin(), obs.end());
      std::vector<float> h(vae->cfg.mlp_width);
      vae->prior_body.forward_values(o.data(), 1, h.data());
      for (auto& x : h) x = x > 0 ? x : 0;
      std::vector<float> mu(vae->cfg.d_z), ls(vae->cfg.d_z);
      vae->prior_mu.forward_values(h.data(), 1, mu.data());
      vae->prior_ls.forward_values(h.data(), 1, ls.data());
      for (int j = 0; j < a.act_dim; ++j) {
        double sd = std::exp(std::min(kLogStdMax, std::max(kLogStdMin, (double)ls[j])));
        out[j] = std::tanh(mu[j] + (float)(sd * gaussian<double>(rng)));
      }
    } else {
      for (auto& x : out) x = uniform<float>(rng, -1.0, 1.0);
    }
  } else {
    std::vector<S> o(obs.begin(), obs.end()), mu, ls;
    actor_heads_values(a, o, 1, mu, ls);
    for (int j = 0; j < a.act_dim; ++j) {
      double pre = mu[j];
      if (mode == ActMode::Sample) pre += std::exp((double)ls[j]) * gaussian<double>(rng);
      out[j] = (float)std::tanh(pre);
    }
  }
  for (auto& x : out) x = std::min(lim, std::max(-lim, x));
  return out;
}

// sum_i gamma^i r_i over the executed steps of one skill
inline double high_level_reward(const std::vector<float>& rewards, double gamma) {
  if (rewards.empty()) throw error("data", "high_level_reward: empty rewards");
  double acc = 0.0, g = 1.0;
  for (float r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

// ---- updates ----

// TD targets: r + gamma^steps * (1-done) * min over m random target critics
// of Q(s', z' ~ pi). No entropy term in the backup. Online rewards get the
// RND bonus added here, at update time.
template <class S>
double critic_update(Sac<S>& a, const std::vector<HighLevelTransition>& batch,
                     const RndPair<S>* rnd, Rng& rng) {
  int B = (int)batch.size();
  int n_on = 0;
  for (int i = 0; i < B; ++i) {
    if (batch[i].offline != (i >= a.cfg.batch_online))
      throw error("contract", "critic_update: batch must be B_on online then B_off offline");
    n_on += !batch[i].offline;
  }
  if (n_on != a.cfg.batch_online || B - n_on != a.cfg.batch_offline)
    throw error("contract", "critic_update: batch split " + std::to_string(n_on) + "/" +
                                std::to_string(B - n_on) + " does not match config " +
                                std::to_string(a.cfg.batch_online) + "/" +
                                std::to_string(a.cfg.batch_offline));

  int od = a.obs_dim, ad = a.act_dim;
  std::vector<S> s((size_t)B * od), sn((size_t)B * od), z((size_t)B * ad);
  std::vector<double> rew(B);
  for (int i = 0; i < B; ++i) {
    std::copy_n(batch[i].s.data(), od, &s[(size_t)i * od]);
    std::copy_n(batch[i].s_next.data(), od, &sn[(size_t)i * od]);
    std::copy_n(batch[i].z.data(), ad, &z[(size_t)i * ad]);
    rew[i] = batch[i].r;
  }
  if (rnd && a.cfg.online_bonus && a.cfg.alpha > 0) {
    std::vector<std::vector<S>> inputs;
    for (int i = 0; i < n_on; ++i)
      inputs.push_back(detail::rnd_input<S>(batch[i].s, batch[i].z));
    auto bonus = rnd_bonus_batch(*rnd, inputs);
    for (int i = 0; i < n_on; ++i) rew[i] += a.cfg.alpha * bonus[i];
  }

  // next actions from the current policy (no gradient)
  std::vector<S> mu, ls;
  actor_heads_values(a, sn, B, mu, ls);
  std::vector<S> zn((size_t)B * ad);
  for (size_t i = 0; i < zn.size(); ++i)
    zn[i] = (S)std::tanh((double)mu[i] +
                         std::exp((double)ls[i]) * gaussian<double>(rng));

  std::vector<S> snz((size_t)B * (od + ad));
  for (int i = 0; i < B; ++i) {
    std::copy_n(&sn[(size_t)i * od], od, &snz[(size_t)i * (od + ad)]);
    std::copy_n(&zn[(size_t)i * ad], ad, &snz[(size_t)i * (od + ad) + od]);
  }
  // min over m randomly chosen target critics
  std::vector<int> idx(a.cfg.ensemble);
  for (int e = 0; e < a.cfg.ensemble; ++e) idx[e] = e;
  for (int e = 0; e < a.cfg.min_ensemble; ++e) {
    int j = uniform_int(rng, e, a.cfg.ensemble - 1);
    std::swap(idx[e], idx[j]);
  }
  std::vector<double> qmin(B, std::numeric_limits<double>::infinity());
  std::vector<S> q(B);
  for (int e = 0; e < a.cfg.min_ensemble; ++e) {
    a.targets[idx[e]].forward_values(snz.data(), B, q.data());
    for (int i = 0; i < B; ++i) qmin[i] = std::min(qmin[i], (double)q[i]);
  }
  std::vector<S> tgt(B);
  for (int i = 0; i < B; ++i) {
    double boot = batch[i].done ? 0.0
                                : std::pow((double)a.cfg.gamma, (double)batch[i].steps) *
                                      qmin[i];
    tgt[i] = (S)(rew[i] + boot);
  }
  auto target = Tensor<S>::from({B, 1}, std::move(tgt));

  std::vector<S> sz((size_t)B * (od + ad));
  for (int i = 0; i < B; ++i) {
    std::copy_n(&s[(size_t)i * od], od, &sz[(size_t)i * (od + ad)]);
    std::copy_n(&z[(size_t)i * ad], ad, &sz[(size_t)i * (od + ad) + od]);
  }
  auto sz_t = Tensor<S>::from({B, od + ad}, std::move(sz));
  Tensor<S> loss;
  for (auto& critic : a.critics) {
    auto err = sub(critic.forward(sz_t), target);
    auto l = mean_all(mul(err, err));
    loss = loss.defined() ? add(loss, l) : l;
  }
  a.opt_critic.zero_grad();
  backward(loss);
  a.opt_critic.step();
  ++a.critic_updates;
  return (double)loss.item() / a.cfg.ensemble;
}

// Maximizes mean-over-ensemble Q(s, z~pi) + temperature * entropy, via the
// squashed log-prob. `eps` is the reparameterization noise [B, act_dim].
template <class S>
double actor_update(Sac<S>& a, const std::vector<S>& states, int B,
                    const Tensor<S>& eps) {
  auto s = Tensor<S>::from({B, a.obs_dim}, states);
  auto h = relu(a.actor_body.forward(s));
  auto mu = a.actor_mu.forward(h);
  auto ls = clamp_log_std(a.actor_ls.forward(h));
  auto pre = add(mu, mul(exp_op(ls), eps));
  auto [action, logp] = tanh_squash_log_prob(pre, mu, ls);
  Tensor<S> qsum;
  auto sa = concat_cols(s, action);
  for (auto& critic : a.critics) {
    auto q = critic.forward(sa);
    qsum = qsum.defined() ? add(qsum, q) : q;
  }
  auto qmean = scale(qsum, S(1) / S(a.cfg.ensemble));
  S temp = std::exp(a.log_temp.item());
  auto loss = mean_all(sub(scale(logp, temp), sum_rows(qmean)));
  a.opt_actor.zero_grad();
  a.opt_critic.zero_grad();  // discard Q gradients leaking through the action
  backward(loss);
  a.opt_actor.step();
  a.opt_critic.zero_grad();
  return (double)loss.item();
}

// Dual gradient step so the policy entropy tracks the target.
template <class S>
double temperature_update(Sac<S>& a, const std::vector<double>& log_probs) {
  double mean_lp = 0.0;
  for (double lp : log_probs) mean_lp += lp;
  mean_lp /= std::max<size_t>(1, log_probs.size());
  // d/dlog_temp of -exp(log_temp) * (mean_lp + target_entropy)
  auto loss = scale(exp_op(a.log_temp), S(-(mean_lp + a.cfg.target_entropy)));
  a.opt_temp.zero_grad();
  backward(loss);
  a.opt_temp.step();
  return std::exp((double)a.log_temp.item());
}

// target <- (1 - tau) * target + tau * online, per parameter
template <class S>
void polyak_update(Sac<S>& a) {
  S tau = (S)a.cfg.polyak;
  for (int e = 0; e < a.cfg.ensemble; ++e) {
    std::vector<Tensor<S>> src, dst;
    std::vector<std::string> n1, n2;
    a.critics[e].collect_params(src, n1, "c");
    a.targets[e].collect_params(dst, n2, "t");
    for (size_t i = 0; i < src.size(); ++i)
      for (int64_t j = 0; j < src[i].size(); ++j)
        dst[i].val()[j] = (S(1) - tau) * dst[i].val()[j] + tau * src[i].val()[j];
  }
}

// Squashed-policy log-probs for sampled actions, used for the temperature
// dual; value-only.
template <class S>
std::vector<double> policy_log_probs(const Sac<S>& a, const std::vector<S>& states,
                                     int B, Rng& rng) {
  std::vector<S> mu, ls;
  actor_heads_values(a, states, B, mu, ls);
  std::vector<double> out(B, 0.0);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < a.act_dim; ++j) {
      size_t k = (size_t)i * a.act_dim + j;
      double sd = std::exp((double)ls[k]);
      double e = gaussian<double>(rng);
      double pre = (double)mu[k] + sd * e;
      double lp = -0.5 * e * e - (double)ls[k] - 0.5 * kLogTwoPi;
      double x = -2.0 * pre;
      double sp = x > 30.0 ? x : std::log1p(std::exp(x));
      lp -= 2.0 * (std::log(2.0) - pre - sp);
      out[i] += lp;
    }
  }
  return out;
}

}  // namespace supe
