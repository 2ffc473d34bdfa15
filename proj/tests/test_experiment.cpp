#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "supe/supe.hpp"

using namespace supe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path fresh_dir(const char* name) {
  fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// small-everything config that still exercises updates and evals
ExperimentConfig tiny_config(const std::string& out) {
  ExperimentConfig c;
  c.method = "online_only";
  c.maze = "medium";
  c.out = out;
  c.seed = 5;
  c.seeds = 2;
  c.steps = 600;
  c.num_traj = 5;
  c.workers = 1;
  c.loop.eval_interval = 200;
  c.loop.eval_episodes = 3;
  c.loop.agent.warmup_steps = 200;
  c.loop.agent.rnd_warmup = 300;
  c.loop.agent.batch_online = 16;
  c.loop.agent.batch_offline = 0;
  c.loop.agent.ensemble = 2;
  c.loop.agent.width = 16;
  return c;
}

}  // namespace

TEST_CASE("resolved config materializes every default") {
  ExperimentConfig c;
  auto s = resolved_config(c);
  REQUIRE(s.find("beta = 0.1\n") != std::string::npos);
  REQUIRE(s.find("d_z = 8\n") != std::string::npos);
  REQUIRE(s.find("H = 4\n") != std::string::npos);
  REQUIRE(s.find("method = supe\n") != std::string::npos);
  REQUIRE(s.find("batch_online = 128\n") != std::string::npos);
  REQUIRE(s.find("batch_offline = 128\n") != std::string::npos);
  // every emitted key parses back
  std::istringstream ss(s);
  std::string line;
  ExperimentConfig back;
  while (std::getline(ss, line)) {
    auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    REQUIRE_NOTHROW(apply_config_kv(back, trim(line.substr(0, eq)),
                                    trim(line.substr(eq + 1))));
  }
  REQUIRE(resolved_config(back) == s);
}

TEST_CASE("config files parse with comments and later keys win") {
  auto d = fresh_dir("supe_test_cfg");
  std::string p = d / "cfg.txt";
  std::ofstream(p) << "# comment line\n"
                      "maze = large   # trailing comment\n"
                      "steps = 500\n"
                      "\n"
                      "steps = 700\n";
  ExperimentConfig c;
  load_config_file(c, p);
  REQUIRE(c.maze == "large");
  REQUIRE(c.steps == 700);
  apply_config_kv(c, "steps", "900");  // flag overrides come after the file
  REQUIRE(c.steps == 900);

  try {
    apply_config_kv(c, "bogus_key", "1");
    FAIL("expected config error");
  } catch (const error& e) {
    REQUIRE(e.category() == "config");
  }
  std::ofstream(p) << "steps 900\n";  // missing '='
  REQUIRE_THROWS_AS(load_config_file(c, p), error);
  REQUIRE_THROWS_AS(load_config_file(c, d / "missing.txt"), error);
  fs::remove_all(d);
}

TEST_CASE("cache keys isolate the knobs of each stage") {
  ExperimentConfig a, b;
  REQUIRE(dataset_key(a) == dataset_key(b));
  REQUIRE(run_key(a) == run_key(b));

  b.data_seed = 9;
  REQUIRE(dataset_key(a) != dataset_key(b));
  REQUIRE(vae_key(a) != vae_key(b));  // dataset feeds the vae

  b = a;
  b.seed = 3;
  b.seeds = 8;
  b.out = "elsewhere";
  b.workers = 4;
  REQUIRE(run_key(a) == run_key(b));  // seeds/out/workers never change the run
  b = a;
  b.loop.agent.alpha = 0.0f;
  REQUIRE(run_key(a) != run_key(b));
}

TEST_CASE("method wiring keeps the total batch and update budget") {
  ExperimentConfig c;
  auto supe_lc = wire_method(c, Method::Supe, 0);
  REQUIRE(supe_lc.agent.batch_online == 128);
  REQUIRE(supe_lc.agent.batch_offline == 128);
  REQUIRE(supe_lc.agent.utd == 4);

  auto skills = wire_method(c, Method::SkillsOnly, 0);
  REQUIRE(skills.agent.batch_online == 256);
  REQUIRE(skills.agent.batch_offline == 0);

  auto flat = wire_method(c, Method::FlatExplore, 0);
  REQUIRE(flat.agent.batch_offline == 128);
  REQUIRE(flat.agent.alpha == c.flat_alpha);
  // one env step per macro-step, so UTD is scaled down by H for parity
  REQUIRE(flat.agent.utd == 1);

  auto online = wire_method(c, Method::OnlineOnly, 7);
  REQUIRE(online.agent.batch_online == 256);
  REQUIRE(online.agent.batch_offline == 0);
  REQUIRE(online.seed == 7);
}

TEST_CASE("evaluate_with_policy scores a perfect and a frozen policy") {
  auto spec = make_maze("medium", 0);
  double frozen = evaluate_with_policy(
      spec, 3, 11, [](const EnvState&, Rng&) { return std::array<float, 2>{0, 0}; });
  REQUIRE(frozen == 0.0);

  WaypointController oracle{&spec, spec.goal_r, spec.goal_c, 0.0f};
  double perfect = evaluate_with_policy(
      spec, 3, 11, [&](const EnvState& s, Rng& rng) { return oracle.act(s, rng); });
  REQUIRE(perfect == 1.0);
}

TEST_CASE("methods without offline data never touch the labeler") {
  auto spec = make_maze("medium", 0);
  VaeConfig vc;
  vc.H = 4;
  vc.d_z = 2;
  vc.gru_hidden = 4;
  vc.mlp_width = 4;
  Rng rng = make_rng(21);
  auto vae = make_vae<float>(vc, kObsDim, kActDim, rng);

  LoopConfig lc;
  lc.agent.batch_online = 8;
  lc.agent.batch_offline = 0;
  lc.agent.warmup_steps = 40;
  lc.agent.rnd_warmup = 60;
  lc.agent.ensemble = 2;
  lc.agent.width = 8;
  lc.total_steps = 200;
  lc.eval_interval = 100;
  lc.eval_episodes = 2;
  lc.seed = 22;
  auto res = online_loop(spec, &vae, nullptr, lc);
  REQUIRE(res.offline_label_calls == 0);
  REQUIRE(res.rnd_checksum_start == res.rnd_checksum_end);  // target stayed frozen
  REQUIRE_FALSE(res.rows.empty());

  lc.agent.batch_offline = 8;  // offline batches without labels must refuse
  REQUIRE_THROWS_AS(online_loop(spec, &vae, nullptr, lc), error);
}

TEST_CASE("run_experiment caches stages and reruns byte-identically") {
  auto d = fresh_dir("supe_test_run");
  auto cfg = tiny_config(d);
  std::ostringstream log;
  auto r1 = run_experiment(cfg, log);
  REQUIRE(r1.seeds.size() == 2);
  for (auto& st : r1.seeds) {
    REQUIRE(st.ok);
    REQUIRE_FALSE(st.cached);
  }
  std::string csv5 = r1.run_dir + "/seed5.csv";
  std::string csv6 = r1.run_dir + "/seed6.csv";
  REQUIRE(fs::exists(csv5));
  REQUIRE(fs::exists(csv6));
  REQUIRE(fs::exists(r1.run_dir + "/config.txt"));
  REQUIRE_FALSE(load_metrics(csv5).empty());

  auto r2 = run_experiment(cfg, log);
  REQUIRE(r2.run_dir == r1.run_dir);
  for (auto& st : r2.seeds) REQUIRE(st.cached);

  // a deleted seed regenerates the exact same bytes; the other stays cached
  std::string want = slurp(csv5);
  fs::remove(csv5);
  auto r3 = run_experiment(cfg, log);
  REQUIRE_FALSE(r3.seeds[0].cached);
  REQUIRE(r3.seeds[1].cached);
  REQUIRE(slurp(csv5) == want);
  fs::remove_all(d);
}

TEST_CASE("aggregation reduces seed rows to an iqm curve") {
  auto d = fresh_dir("supe_test_agg");
  auto run = d / "run_demo";
  fs::create_directories(run);
  std::ofstream(run / "config.txt") << "method = supe\n";
  save_metrics(run / "seed0.csv",
               {{0, 100, "return", 0.2}, {0, 100, "coverage", 0.5},
                {0, 200, "return", 0.6}, {0, 200, "coverage", 0.7}});
  save_metrics(run / "seed1.csv",
               {{1, 100, "return", 0.4}, {1, 100, "coverage", 0.5},
                {1, 200, "return", 0.8}, {1, 200, "coverage", 0.9}});

  auto agg = aggregate_run(run);
  REQUIRE(agg.method == "supe");
  auto& ret = agg.curves.at("return");
  REQUIRE(ret.points.size() == 2);
  REQUIRE(ret.points[0].step == 100.0);
  REQUIRE(ret.points[0].mid == Catch::Approx(0.3));
  REQUIRE(ret.points[1].mid == Catch::Approx(0.7));
  for (auto& p : ret.points) {
    REQUIRE(p.lo <= p.mid);
    REQUIRE(p.hi >= p.mid);
  }
  REQUIRE(agg.curves.count("rnd_loss") == 0);  // metric absent from the rows

  save_aggregate(run / "aggregate.csv", agg);
  auto text = slurp(run / "aggregate.csv");
  REQUIRE(text.rfind("metric,env_step,iqm,lo,hi\n", 0) == 0);
  REQUIRE(text.find("return,100,0.3") != std::string::npos);
  fs::remove_all(d);
}

TEST_CASE("svg plots are deterministic and refuse empty input") {
  auto d = fresh_dir("supe_test_plot");
  std::string empty = d / "empty.svg";
  REQUIRE_FALSE(write_svg_plot(empty, "t", "y", {}));
  REQUIRE_FALSE(write_svg_plot(empty, "t", "y", {Curve{"a", {}}}));
  REQUIRE_FALSE(fs::exists(empty));

  Curve c{"supe", {{0, 0.1, 0.05, 0.15}, {1000, 0.5, 0.4, 0.6}, {2000, 0.9, 0.8, 1.0}}};
  std::string p1 = d / "a.svg", p2 = d / "b.svg";
  REQUIRE(write_svg_plot(p1, "return", "return", {c}));
  REQUIRE(write_svg_plot(p2, "return", "return", {c}));
  auto text = slurp(p1);
  REQUIRE(text == slurp(p2));
  REQUIRE(text.rfind("<svg", 0) == 0);
  REQUIRE(text.find("</svg>") != std::string::npos);
  REQUIRE(text.find("supe") != std::string::npos);  // legend entry
  fs::remove_all(d);
}
