// The online phase: every H env steps the high-level agent picks a skill,
// the frozen low-level policy executes it, and the agent trains on balanced
// batches of online replay data and freshly relabeled offline data.
// Flat (non-skill) agents run the same loop with H = 1 and raw env actions.

#pragma once

#include <string>
#include <vector>

#include "supe/dataset.hpp"
#include "supe/sac.hpp"

namespace supe {

struct MetricRow {
  uint64_t seed = 0;
  long env_step = 0;
  std::string metric;
  double value = 0.0;
};

enum class Method { Supe, SkillsOnly, FlatExplore, OnlineOnly };

inline Method method_from_string(const std::string& s) {
  if (s == "supe") return Method::Supe;
  if (s == "skills_only") return Method::SkillsOnly;
  if (s == "flat_explore") return Method::FlatExplore;
  if (s == "online_only") return Method::OnlineOnly;
  throw error("config", "unknown method '" + s + "'");
}

struct LoopConfig {
  AgentConfig agent;
  int rnd_feat = 32;
  int rnd_width = 32;
  float rnd_lr = 1e-3f;  // predictor must outpace the agent to localize novelty
  RewardMode reward_mode = RewardMode::ConstantMin;
  long total_steps = 100000;
  int eval_interval = 2000;
  int eval_episodes = 20;
  uint64_t seed = 0;
};

struct LoopResult {
  std::vector<MetricRow> rows;
  long offline_label_calls = 0;
  uint64_t rnd_checksum_start = 0, rnd_checksum_end = 0;
  Sac<float> agent;
};

// Runs `episodes` deterministic episodes of an arbitrary per-step policy;
// returns the fraction that reach the goal.
template <class PolicyFn>
double evaluate_with_policy(const MazeSpec& spec, int episodes, uint64_t seed,
                            PolicyFn&& policy) {
  Rng rng = make_rng(seed);
  int wins = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    EnvState s = reset(spec, rng);
    while (true) {
      auto a = policy(s, rng);
      auto res = step(spec, s, a[0], a[1]);
      s = res.state;
      if (res.done) {
        wins += res.goal;
        break;
      }
    }
  }
  return (double)wins / episodes;
}

// Deterministic (mean-action) evaluation of the current agent.
inline double evaluate_policy(const MazeSpec& spec, const Sac<float>& agent,
                              const Vae<float>* vae, int H, int episodes,
                              uint64_t seed) {
  std::vector<float> z;
  int until_repick = 0;
  return evaluate_with_policy(
      spec, episodes, seed,
      [&](const EnvState& s, Rng& rng) -> std::array<float, kActDim> {
        auto obs = observe(s);
        std::vector<float> ov(obs.begin(), obs.end());
        if (s.t == 0) until_repick = 0;  // new episode
        if (!vae) {
          auto a = act(agent, ov, ActMode::Mean, nullptr, rng);
          return {a[0], a[1]};
        }
        if (until_repick == 0) {
          z = act(agent, ov, ActMode::Mean, vae, rng);
          until_repick = H;
        }
        --until_repick;
        auto zu = unsquash_values(z);
        return skill_action(*vae, obs, zu, /*sample=*/false, rng);
      });
}

// Single entry point shared by SUPE and every baseline; the method
// differences are entirely in the arguments (vae, labels, batch split, alpha).
inline LoopResult online_loop(const MazeSpec& spec, const Vae<float>* vae,
                              const std::vector<SkillLabel>* labels,
                              const LoopConfig& cfg) {
  spec.validate();
  const int H = vae ? vae->cfg.H : 1;
  const int act_dim = vae ? vae->cfg.d_z : kActDim;
  const int obs_dim = kObsDim;
  if (cfg.agent.batch_offline > 0 && (!labels || labels->empty()))
    throw error("config", "online_loop: offline batch requested but no labels given");

  Rng env_rng = sub_rng(cfg.seed, 1);
  Rng act_rng = sub_rng(cfg.seed, 2);
  Rng update_rng = sub_rng(cfg.seed, 3);
  Rng label_rng = sub_rng(cfg.seed, 4);

  LoopResult res{.agent = make_sac<float>(cfg.agent, obs_dim, act_dim, cfg.seed)};
  Sac<float>& agent = res.agent;
  auto rnd = make_rnd<float>(obs_dim + act_dim, cfg.rnd_feat, cfg.rnd_width, 2,
                             cfg.seed, cfg.rnd_lr, obs_dim);
  auto est = make_reward_estimator<float>(cfg.reward_mode, -1.0f, obs_dim + act_dim,
                                          cfg.rnd_width, 2, cfg.seed, cfg.agent.lr);
  res.rnd_checksum_start = rnd.target_checksum;
  ReplayBuffer buffer((size_t)cfg.agent.buffer_capacity);

  std::vector<std::pair<float, float>> visited;
  long env_step = 0, next_eval = cfg.eval_interval;
  bool goal_seen = false;
  double last_closs = 0.0, last_aloss = 0.0, last_rloss = 0.0;
  EnvState s = reset(spec, env_rng);
  visited.push_back({s.x, s.y});

  auto emit = [&](const std::string& metric, double value) {
    res.rows.push_back({cfg.seed, env_step, metric, value});
  };

  while (env_step < cfg.total_steps) {
    auto obs = observe(s);
    std::vector<float> ov(obs.begin(), obs.end());
    ActMode mode = env_step < cfg.agent.warmup_steps ? ActMode::Prior : ActMode::Sample;
    std::vector<float> z = act(agent, ov, mode, vae, act_rng);

    // 2a: interact for up to H steps
    std::vector<float> rewards;
    EnvState end = s;
    bool done = false, goal = false;
    int k = 0;
    if (vae) {
      auto zu = unsquash_values(z);
      auto ro = rollout_skill(spec, s, *vae, zu, H, /*sample=*/true, act_rng);
      for (size_t i = 1; i < ro.states.size(); ++i)
        visited.push_back({ro.states[i].x, ro.states[i].y});
      rewards = ro.rewards;
      end = ro.end;
      done = ro.done;
      goal = ro.goal;
      k = ro.steps;
    } else {
      auto r1 = step(spec, s, z[0], z[1]);
      end = r1.state;
      visited.push_back({end.x, end.y});
      rewards = {r1.reward};
      done = r1.done;
      goal = r1.goal;
      k = 1;
    }
    auto end_obs = observe(end);
    HighLevelTransition tr;
    tr.s = ov;
    tr.z = z;
    tr.r = (float)high_level_reward(rewards, cfg.agent.gamma);
    tr.s_next.assign(end_obs.begin(), end_obs.end());
    tr.done = goal;
    tr.steps = k;
    tr.offline = false;
    buffer.push(std::move(tr));

    env_step += k;
    if (goal && !goal_seen) {
      goal_seen = true;
      emit("first_goal_step", (double)env_step);
    }
    if (done) {
      emit("success", goal ? 1.0 : 0.0);
      s = reset(spec, env_rng);
      visited.push_back({s.x, s.y});
    } else {
      s = end;
    }

    // RND trains on online data only, after its own warmup
    if (env_step >= cfg.agent.rnd_warmup &&
        buffer.size() >= (size_t)cfg.agent.batch_online) {
      auto online = buffer.sample(cfg.agent.batch_online, update_rng);
      last_rloss = rnd_update(rnd, online);
      if (cfg.reward_mode == RewardMode::Learned)
        reward_model_update(est, online);
    }

    // 2b + 2c: relabel offline data and update the agent
    if (env_step >= cfg.agent.warmup_steps &&
        buffer.size() >= (size_t)cfg.agent.batch_online) {
      for (int u = 0; u < cfg.agent.utd; ++u) {
        auto batch = buffer.sample(cfg.agent.batch_online, update_rng);
        if (cfg.agent.batch_offline > 0) {
          ++res.offline_label_calls;
          auto off = label_offline_batch(*labels, est, rnd, cfg.agent.alpha,
                                         cfg.agent.batch_offline, H,
                                         cfg.agent.gamma, label_rng);
          batch.insert(batch.end(), std::make_move_iterator(off.begin()),
                       std::make_move_iterator(off.end()));
        }
        last_closs = critic_update(agent, batch, &rnd, update_rng);
        polyak_update(agent);
        if (agent.critic_updates % cfg.agent.actor_delay == 0) {
          int B = (int)batch.size();
          std::vector<float> states((size_t)B * obs_dim);
          for (int i = 0; i < B; ++i)
            std::copy_n(batch[i].s.data(), obs_dim, &states[(size_t)i * obs_dim]);
          std::vector<float> noise((size_t)B * act_dim);
          for (auto& e : noise) e = gaussian<float>(update_rng);
          auto eps = Tensor<float>::from({B, act_dim}, std::move(noise));
          last_aloss = actor_update(agent, states, B, eps);
          temperature_update(agent, policy_log_probs(agent, states, B, update_rng));
        }
      }
    }

    if (env_step >= next_eval || env_step >= cfg.total_steps) {
      while (next_eval <= env_step) next_eval += cfg.eval_interval;
      emit("return", evaluate_policy(spec, agent, vae, H, cfg.eval_episodes,
                                     cfg.seed * 1000003 + (uint64_t)env_step));
      emit("coverage", coverage(visited, spec));
      emit("critic_loss", last_closs);
      emit("actor_loss", last_aloss);
      emit("rnd_loss", last_rloss);
      emit("temperature", std::exp((double)agent.log_temp.item()));
    }
  }
  res.rnd_checksum_end = rnd_checksum(rnd);
  return res;
}

}  // namespace supe
