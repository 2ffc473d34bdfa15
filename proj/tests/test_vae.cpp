#include <catch_amalgamated.hpp>

#include <cstdio>

#include "supe/gradcheck.hpp"
#include "supe/vae.hpp"

using namespace supe;

namespace {

// tiny synthetic dataset: straight-line drifts, enough structure to encode
Dataset toy_dataset(int num_traj, int len, uint64_t seed) {
  Rng rng = make_rng(seed);
  Dataset ds(num_traj);
  for (auto& t : ds) {
    std::array<float, kObsDim> s{uniform<float>(rng, -0.5, 0.5),
                                 uniform<float>(rng, -0.5, 0.5), 0.0f, 0.0f};
    t.states.push_back(s);
    for (int i = 0; i < len; ++i) {
      std::array<float, kActDim> a{uniform<float>(rng, -1.0, 1.0),
                                   uniform<float>(rng, -1.0, 1.0)};
      s[0] += 0.01f * a[0];
      s[1] += 0.01f * a[1];
      s[2] = a[0];
      s[3] = a[1];
      t.actions.push_back(a);
      t.states.push_back(s);
    }
  }
  return ds;
}

template <class S>
void zero_params(std::vector<Tensor<S>>& ps) {
  for (auto& p : ps) std::fill(p.val().begin(), p.val().end(), S(0));
}

}  // namespace

TEST_CASE("segment sampling respects trajectory bounds") {
  auto ds = toy_dataset(1, 4, 1);
  Rng rng = make_rng(2);
  auto segs = sample_segments(ds, 4, 16, rng);
  for (auto& s : segs) {
    REQUIRE(s.offset == 0);  // only one valid offset
    REQUIRE(s.actions.size() == 4 * kActDim);
    REQUIRE(s.states.size() == 5 * kObsDim);
  }

  // mixed lengths: short trajectories skipped with a counter
  auto mixed = toy_dataset(3, 10, 3);
  mixed.push_back(toy_dataset(1, 2, 4)[0]);
  int skipped = 0;
  auto more = sample_segments(mixed, 4, 32, rng, &skipped);
  REQUIRE(skipped == 1);
  for (auto& s : more) {
    REQUIRE(s.traj < 3);
    REQUIRE(s.offset + 4 <= 10);
  }

  auto all_short = toy_dataset(2, 2, 5);
  REQUIRE_THROWS_AS(sample_segments(all_short, 4, 8, rng), error);
}

TEST_CASE("segment offsets are uniform (chi-squared)") {
  auto ds = toy_dataset(1, 13, 6);  // 10 valid offsets at H=4
  Rng rng = make_rng(7);
  const int N = 100000;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < N; i += 100) {
    auto segs = sample_segments(ds, 4, 100, rng);
    for (auto& s : segs) counts[s.offset]++;
  }
  double expect = N / 10.0, chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  REQUIRE(chi2 < 21.67);  // 9 dof, p = 0.01
}

TEST_CASE("encoder is deterministic, right-sized, and order sensitive") {
  VaeConfig cfg;
  cfg.H = 4;
  cfg.d_z = 3;
  cfg.gru_hidden = 8;
  cfg.mlp_width = 8;
  Rng rng = make_rng(8);
  auto v = make_vae<float>(cfg, kObsDim, kActDim, rng);
  auto ds = toy_dataset(1, 8, 9);
  auto seg = segment_at(ds, 0, 1, 4);

  auto [mu1, ls1] = encode(v, seg);
  auto [mu2, ls2] = encode(v, seg);
  REQUIRE(mu1.shape() == std::vector<int>{1, 3});
  REQUIRE(ls1.shape() == std::vector<int>{1, 3});
  REQUIRE(mu1.val() == mu2.val());
  REQUIRE(ls1.val() == ls2.val());

  // permuting the step order must change the encoding
  Segment perm = seg;
  for (int j = 0; j < kObsDim; ++j)
    std::swap(perm.states[j], perm.states[kObsDim + j]);
  for (int j = 0; j < kActDim; ++j)
    std::swap(perm.actions[j], perm.actions[kActDim + j]);
  auto [mu3, ls3] = encode(v, perm);
  bool any_diff = false;
  for (int j = 0; j < 3; ++j) any_diff |= mu3.val()[j] != mu1.val()[j];
  REQUIRE(any_diff);
}

TEST_CASE("reconstruction term at the closed-form gaussian value") {
  // decoder mean = true actions (all zero), decoder sigma = 1, beta = 0:
  // NLL = H * d_a * 0.5*log(2*pi*e^0...) = 4 * 2 * 0.9189385
  VaeConfig cfg;
  cfg.H = 4;
  cfg.d_z = 2;
  cfg.gru_hidden = 4;
  cfg.mlp_width = 4;
  Rng rng = make_rng(10);
  auto v = make_vae<double>(cfg, kObsDim, kActDim, rng);
  std::vector<Tensor<double>> ps;
  std::vector<std::string> ns;
  v.collect_params(ps, ns);
  zero_params(ps);

  Segment seg;
  seg.states.assign(5 * kObsDim, 0.25);
  seg.actions.assign(4 * kActDim, 0.0);
  auto eps = Tensor<double>::zeros({1, cfg.d_z});
  auto res = vae_loss(v, {seg}, 0.0, eps);
  REQUIRE(res.nll == Catch::Approx(7.3515).margin(1e-3));
  REQUIRE(res.nll == Catch::Approx(8 * 0.9189385).margin(1e-6));
  REQUIRE(res.kl == Catch::Approx(0.0).margin(1e-9));  // enc == prior == N(0,1)
  REQUIRE(res.loss.item() == Catch::Approx(res.nll).margin(1e-9));
}

TEST_CASE("loss decomposes as beta*kl + nll on random batches") {
  VaeConfig cfg;
  cfg.H = 3;
  cfg.d_z = 2;
  cfg.gru_hidden = 6;
  cfg.mlp_width = 6;
  Rng rng = make_rng(11);
  auto v = make_vae<double>(cfg, kObsDim, kActDim, rng);
  auto ds = toy_dataset(4, 8, 12);
  Rng srng = make_rng(13);
  auto segs = sample_segments(ds, 3, 5, srng);
  std::vector<double> noise(5 * cfg.d_z);
  for (auto& e : noise) e = gaussian<double>(srng);
  auto eps = Tensor<double>::from({5, cfg.d_z}, noise);
  auto res = vae_loss(v, segs, 0.1, eps);
  REQUIRE(res.loss.item() == Catch::Approx(0.1 * res.kl + res.nll).margin(1e-6));
  REQUIRE(res.kl >= 0.0);
}

TEST_CASE("vae loss passes the finite-difference gradient check") {
  VaeConfig cfg;
  cfg.H = 2;
  cfg.d_z = 2;
  cfg.gru_hidden = 3;
  cfg.mlp_width = 3;
  // init seed chosen so no ReLU sits exactly at its kink, where central
  // differences straddle the non-differentiable point
  Rng rng = make_rng(142);
  auto v = make_vae<double>(cfg, kObsDim, kActDim, rng);
  auto ds = toy_dataset(2, 5, 15);
  Rng srng = make_rng(16);
  auto segs = sample_segments(ds, 2, 2, srng);
  std::vector<double> noise(2 * cfg.d_z);
  for (auto& e : noise) e = gaussian<double>(srng);
  auto eps = Tensor<double>::from({2, cfg.d_z}, noise);
  std::vector<Tensor<double>> ps;
  std::vector<std::string> ns;
  v.collect_params(ps, ns);
  auto loss_fn = [&] { return vae_loss(v, segs, 0.1, eps).loss; };
  REQUIRE(grad_check(loss_fn, ps) < 1e-4);
}

TEST_CASE("short training run improves the loss deterministically") {
  VaeConfig cfg;
  cfg.H = 4;
  cfg.d_z = 2;
  cfg.gru_hidden = 8;
  cfg.mlp_width = 8;
  cfg.batch = 32;
  cfg.steps = 150;
  auto ds = toy_dataset(6, 24, 17);
  auto r1 = train_vae(cfg, ds, 99);
  auto r2 = train_vae(cfg, ds, 99);

  auto window_mean = [&](const std::vector<float>& v, size_t from, size_t n) {
    double s = 0;
    for (size_t i = from; i < from + n; ++i) s += v[i];
    return s / n;
  };
  REQUIRE(window_mean(r1.loss_curve, 100, 50) < window_mean(r1.loss_curve, 0, 50));
  REQUIRE(std::isfinite(r1.kl_curve.back()));
  REQUIRE(r1.kl_curve.back() > 0.0f);

  // bit-identical across reruns with the same seed
  std::vector<Tensor<float>> p1, p2;
  std::vector<std::string> n1, n2;
  r1.vae.collect_params(p1, n1);
  r2.vae.collect_params(p2, n2);
  for (size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].val() == p2[i].val());
}

TEST_CASE("skill rollout clips actions and stops at termination") {
  auto spec = make_maze("medium", 0);
  VaeConfig cfg;
  cfg.H = 4;
  cfg.d_z = 2;
  cfg.gru_hidden = 4;
  cfg.mlp_width = 4;
  Rng rng = make_rng(18);
  auto v = make_vae<float>(cfg, kObsDim, kActDim, rng);

  EnvState s = reset(spec, (uint64_t)4);
  Rng arng = make_rng(5);
  auto ro = rollout_skill(spec, s, v, std::vector<float>{0.2f, -0.4f}, 4, true, arng);
  REQUIRE(ro.steps >= 1);
  REQUIRE(ro.steps <= 4);
  REQUIRE(ro.rewards.size() == (size_t)ro.steps);
  for (auto& a : ro.actions) {
    REQUIRE(a[0] >= -1.0f);
    REQUIRE(a[0] <= 1.0f);
  }

  // place the agent so the first step terminates at the goal
  EnvState near_goal{spec.center_x(spec.goal_c) - 0.1f * spec.cell_w(),
                     spec.center_y(spec.goal_r), 0.0f, 0.0f, 0};
  auto ro2 = rollout_skill(spec, near_goal, v, std::vector<float>{0.0f, 0.0f}, 4,
                           false, arng);
  REQUIRE(ro2.steps == 1);
  REQUIRE(ro2.done);
  REQUIRE(ro2.goal);

  REQUIRE_THROWS_AS(rollout_skill(spec, s, v,
                                  std::vector<float>{std::nanf(""), 0.0f}, 4, false,
                                  arng),
                    error);
}

TEST_CASE("checkpoint round trip restores every parameter bit-exactly") {
  VaeConfig cfg;
  cfg.H = 4;
  cfg.d_z = 3;
  cfg.gru_hidden = 6;
  cfg.mlp_width = 6;
  Rng rng = make_rng(19);
  auto v = make_vae<float>(cfg, kObsDim, kActDim, rng);
  std::string path = std::filesystem::temp_directory_path() / "vae_roundtrip.supv";
  save_vae(path, v);
  auto back = load_vae(path);
  REQUIRE(back.cfg.H == cfg.H);
  REQUIRE(back.cfg.d_z == cfg.d_z);
  REQUIRE(back.cfg.beta == cfg.beta);
  std::vector<Tensor<float>> p1, p2;
  std::vector<std::string> n1, n2;
  v.collect_params(p1, n1);
  back.collect_params(p2, n2);
  REQUIRE(n1 == n2);
  for (size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].val() == p2[i].val());
  std::remove(path.c_str());
}
