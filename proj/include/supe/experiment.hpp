// Experiment orchestration: flat key=value configs with every default
// materialized, content-addressed caching of the dataset / VAE / label
// stages, per-seed online runs, and IQM + bootstrap-CI aggregation.

#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "supe/loop.hpp"
#include "supe/metrics.hpp"
#include "supe/plot.hpp"

namespace supe {

struct ExperimentConfig {
  std::string method = "supe";
  std::string maze = "medium";
  int goal = 0;
  uint64_t seed = 0;
  int seeds = 1;  // consecutive seeds starting at `seed`
  long steps = 100000;
  std::string out = "runs";
  std::string data_style = "diverse";
  int num_traj = 200;
  uint64_t data_seed = 1000, vae_seed = 2000, label_seed = 3000;
  float flat_alpha = 2.0f;  // RND coefficient for non-skill methods
  int workers = 0;          // 0 -> one per hardware thread
  VaeConfig vae;
  LoopConfig loop;  // loop.seed is set per seed at run time
};

namespace detail {

template <class T>
std::string kv(const std::string& k, T v) {
  std::ostringstream ss;
  ss << k << " = " << v << "\n";
  return ss.str();
}

// shortest decimal that parses back to the same float, so float-typed
// fields print as written (0.1, not 0.100000001)
inline std::string kvf(const std::string& k, double v) {
  char buf[40];
  for (int prec = 1; prec <= 9; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtof(buf, nullptr) == (float)v) break;
  }
  return k + " = " + std::string(buf) + "\n";
}

}  // namespace detail

// Every field, defaults materialized; this exact text is stored in each run
// directory and hashed for the cache keys.
inline std::string resolved_config(const ExperimentConfig& c) {
  using detail::kv;
  using detail::kvf;
  const AgentConfig& a = c.loop.agent;
  std::string s;
  s += kv("method", c.method);
  s += kv("maze", c.maze);
  s += kv("goal", c.goal);
  s += kv("seed", c.seed);
  s += kv("seeds", c.seeds);
  s += kv("steps", c.steps);
  s += kv("out", c.out);
  s += kv("data_style", c.data_style);
  s += kv("num_traj", c.num_traj);
  s += kv("data_seed", c.data_seed);
  s += kv("vae_seed", c.vae_seed);
  s += kv("label_seed", c.label_seed);
  s += kv("workers", c.workers);
  s += kv("H", c.vae.H);
  s += kv("d_z", c.vae.d_z);
  s += kvf("beta", c.vae.beta);
  s += kv("gru_hidden", c.vae.gru_hidden);
  s += kv("mlp_width", c.vae.mlp_width);
  s += kv("mlp_depth", c.vae.mlp_depth);
  s += kv("vae_batch", c.vae.batch);
  s += kv("vae_steps", c.vae.steps);
  s += kvf("vae_lr", c.vae.lr);
  s += kvf("gamma", a.gamma);
  s += kv("ensemble", a.ensemble);
  s += kv("min_ensemble", a.min_ensemble);
  s += kv("utd", a.utd);
  s += kv("actor_delay", a.actor_delay);
  s += kv("batch_online", a.batch_online);
  s += kv("batch_offline", a.batch_offline);
  s += kvf("init_temp", a.init_temp);
  s += kvf("target_entropy", a.target_entropy);
  s += kvf("alpha", a.alpha);
  s += kvf("flat_alpha", c.flat_alpha);
  s += kv("online_bonus", (int)a.online_bonus);
  s += kvf("polyak", a.polyak);
  s += kv("warmup_steps", a.warmup_steps);
  s += kv("rnd_warmup", a.rnd_warmup);
  s += kv("width", a.width);
  s += kv("depth", a.depth);
  s += kvf("lr", a.lr);
  s += kv("buffer_capacity", a.buffer_capacity);
  s += kv("rnd_feat", c.loop.rnd_feat);
  s += kv("rnd_width", c.loop.rnd_width);
  s += kvf("rnd_lr", c.loop.rnd_lr);
  s += kv("reward_mode",
          c.loop.reward_mode == RewardMode::ConstantMin ? "constant_min" : "learned");
  s += kv("eval_interval", c.loop.eval_interval);
  s += kv("eval_episodes", c.loop.eval_episodes);
  return s;
}

inline void apply_config_kv(ExperimentConfig& c, const std::string& k,
                            const std::string& v) {
  AgentConfig& a = c.loop.agent;
  auto i = [&] { return std::stoi(v); };
  auto l = [&] { return std::stol(v); };
  auto u = [&] { return std::stoull(v); };
  auto f = [&] { return std::stof(v); };
  if (k == "method") c.method = v;
  else if (k == "maze") c.maze = v;
  else if (k == "goal") c.goal = i();
  else if (k == "seed") c.seed = u();
  else if (k == "seeds") c.seeds = i();
  else if (k == "steps") c.steps = l();
  else if (k == "out") c.out = v;
  else if (k == "data_style") c.data_style = v;
  else if (k == "num_traj") c.num_traj = i();
  else if (k == "data_seed") c.data_seed = u();
  else if (k == "vae_seed") c.vae_seed = u();
  else if (k == "label_seed") c.label_seed = u();
  else if (k == "workers") c.workers = i();
  else if (k == "H") c.vae.H = i();
  else if (k == "d_z") c.vae.d_z = i();
  else if (k == "beta") c.vae.beta = f();
  else if (k == "gru_hidden") c.vae.gru_hidden = i();
  else if (k == "mlp_width") c.vae.mlp_width = i();
  else if (k == "mlp_depth") c.vae.mlp_depth = i();
  else if (k == "vae_batch") c.vae.batch = i();
  else if (k == "vae_steps") c.vae.steps = i();
  else if (k == "vae_lr") c.vae.lr = f();
  else if (k == "gamma") a.gamma = f();
  else if (k == "ensemble") a.ensemble = i();
  else if (k == "min_ensemble") a.min_ensemble = i();
  else if (k == "utd") a.utd = i();
  else if (k == "actor_delay") a.actor_delay = i();
  else if (k == "batch_online") a.batch_online = i();
  else if (k == "batch_offline") a.batch_offline = i();
  else if (k == "init_temp") a.init_temp = f();
  else if (k == "target_entropy") a.target_entropy = f();
  else if (k == "alpha") a.alpha = f();
  else if (k == "flat_alpha") c.flat_alpha = f();
  else if (k == "online_bonus") a.online_bonus = i() != 0;
  else if (k == "polyak") a.polyak = f();
  else if (k == "warmup_steps") a.warmup_steps = i();
  else if (k == "rnd_warmup") a.rnd_warmup = i();
  else if (k == "width") a.width = i();
  else if (k == "depth") a.depth = i();
  else if (k == "lr") a.lr = f();
  else if (k == "buffer_capacity") a.buffer_capacity = i();
  else if (k == "rnd_feat") c.loop.rnd_feat = i();
  else if (k == "rnd_width") c.loop.rnd_width = i();
  else if (k == "rnd_lr") c.loop.rnd_lr = f();
  else if (k == "reward_mode") {
    if (v == "constant_min") c.loop.reward_mode = RewardMode::ConstantMin;
    else if (v == "learned") c.loop.reward_mode = RewardMode::Learned;
    else throw error("config", "unknown reward_mode '" + v + "'");
  }
  else if (k == "eval_interval") c.loop.eval_interval = i();
  else if (k == "eval_episodes") c.loop.eval_episodes = i();
  else throw error("config", "unknown config key '" + k + "'");
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat `key = value` text; '#' starts a comment.
inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw error("io", "cannot open config '" + path + "'");
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw error("config", path + ":" + std::to_string(ln) + ": expected key = value");
    apply_config_kv(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ull;
  return h;
}

inline std::string hex16(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

// ---- stage cache keys ----

// keyed on the layout itself, not just the maze id, so editing a layout
// invalidates everything downstream
inline std::string dataset_key(const ExperimentConfig& c) {
  MazeSpec spec = make_maze(c.maze, 0);  // data generation ignores the goal
  std::ostringstream ss;
  ss << "data|" << hex16(fnv1a(maze_to_ascii(spec))) << "|" << spec.max_steps << "|"
     << c.data_style << "|" << c.num_traj << "|" << c.data_seed;
  return hex16(fnv1a(ss.str()));
}

inline std::string vae_key(const ExperimentConfig& c) {
  std::ostringstream ss;
  ss << "vae|" << dataset_key(c) << "|" << c.vae.H << "|" << c.vae.d_z << "|"
     << format_value(c.vae.beta) << "|" << c.vae.gru_hidden << "|" << c.vae.mlp_width
     << "|" << c.vae.mlp_depth << "|" << c.vae.batch << "|" << c.vae.steps << "|"
     << format_value(c.vae.lr) << "|" << c.vae_seed;
  return hex16(fnv1a(ss.str()));
}

inline std::string label_key(const ExperimentConfig& c) {
  std::ostringstream ss;
  ss << "label|" << vae_key(c) << "|" << c.vae.H << "|" << c.label_seed;
  return hex16(fnv1a(ss.str()));
}

// The run key excludes `seed`/`seeds`/`out` so adding seeds reuses the
// directory, and excludes the stages keyed above only through their hashes.
inline std::string run_key(const ExperimentConfig& c) {
  ExperimentConfig norm = c;
  norm.seed = 0;
  norm.seeds = 0;
  norm.out = "";
  norm.workers = 0;
  std::string s = "run|" + resolved_config(norm);
  s += "|" + hex16(fnv1a(maze_to_ascii(make_maze(c.maze, c.goal))));
  bool skills = c.method == "supe" || c.method == "skills_only";
  s += skills ? ("|" + label_key(c)) : ("|" + dataset_key(c));
  return hex16(fnv1a(s));
}

// ---- method wiring: one entry point, method differences as arguments ----

struct MethodSetup {
  bool needs_vae = false;
  bool needs_offline = false;  // relabeled offline batches
};

inline MethodSetup method_setup(Method m) {
  switch (m) {
    case Method::Supe: return {true, true};
    case Method::SkillsOnly: return {true, false};
    case Method::FlatExplore: return {false, true};
    case Method::OnlineOnly: return {false, false};
  }
  throw error("config", "bad method");
}

inline LoopConfig wire_method(const ExperimentConfig& c, Method m, uint64_t seed) {
  LoopConfig lc = c.loop;
  lc.total_steps = c.steps;
  lc.seed = seed;
  MethodSetup ms = method_setup(m);
  if (!ms.needs_offline) {
    lc.agent.batch_online += lc.agent.batch_offline;  // same total batch size
    lc.agent.batch_offline = 0;
  }
  if (!ms.needs_vae) {
    lc.agent.alpha = c.flat_alpha;
    // flat agents take one env step per macro-step; scale UTD so every
    // method performs the same number of gradient updates per env step
    lc.agent.utd = std::max(1, lc.agent.utd / c.vae.H);
  }
  return lc;
}

struct SeedStatus {
  uint64_t seed = 0;
  bool ok = false;
  bool cached = false;
  std::string error_msg;
};

struct RunResult {
  std::string run_dir;
  std::vector<SeedStatus> seeds;
};

// Per-seed pipeline with content-addressed stage caching. A failure in one
// seed is recorded and the remaining seeds still run.
inline RunResult run_experiment(const ExperimentConfig& cfg,
                                std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  Method m = method_from_string(cfg.method);
  MethodSetup ms = method_setup(m);
  MazeSpec spec = make_maze(cfg.maze, cfg.goal);
  fs::create_directories(cfg.out);

  // stage 1: dataset
  std::string data_path = cfg.out + "/data_" + dataset_key(cfg) + ".supd";
  Dataset ds;
  if (fs::exists(data_path)) {
    ds = load_dataset(data_path);
    log << "dataset: cached " << data_path << "\n";
  } else {
    ds = generate_dataset(spec, cfg.num_traj, cfg.data_seed,
                          data_style_from_string(cfg.data_style));
    save_dataset(data_path, ds);
    log << "dataset: wrote " << data_path << "\n";
  }

  // stage 2: VAE (skill methods only)
  Vae<float> vae;
  bool have_vae = false;
  if (ms.needs_vae) {
    std::string vae_path = cfg.out + "/vae_" + vae_key(cfg) + ".supv";
    if (fs::exists(vae_path)) {
      vae = load_vae(vae_path);
      log << "vae: cached " << vae_path << "\n";
    } else {
      auto tr = train_vae(cfg.vae, ds, cfg.vae_seed);
      vae = std::move(tr.vae);
      save_vae(vae_path, vae);
      log << "vae: wrote " << vae_path;
      if (!tr.loss_curve.empty())
        log << " (loss " << tr.loss_curve.front() << " -> " << tr.loss_curve.back()
            << ")";
      log << "\n";
    }
    have_vae = true;
  }

  // stage 3: labels
  std::vector<SkillLabel> labels;
  if (ms.needs_offline) {
    if (ms.needs_vae) {
      std::string lab_path = cfg.out + "/labels_" + label_key(cfg) + ".supl";
      if (fs::exists(lab_path)) {
        labels = load_labels(lab_path, ds, cfg.vae.H);
        log << "labels: cached " << lab_path << "\n";
      } else {
        labels = precompute_labels(vae, ds, cfg.vae.H, cfg.label_seed);
        save_labels(lab_path, labels);
        log << "labels: wrote " << lab_path << " (" << labels.size() << ")\n";
      }
    } else {
      labels = flat_labels(ds);  // cheap; recomputed every run
    }
  }

  // stage 4: per-seed online runs
  RunResult res;
  res.run_dir = cfg.out + "/run_" + run_key(cfg);
  fs::create_directories(res.run_dir);
  {
    std::ofstream os(res.run_dir + "/config.txt");
    os << resolved_config(cfg);
  }
  res.seeds.resize(cfg.seeds);
  auto run_seed = [&](int i) {
    uint64_t seed = cfg.seed + (uint64_t)i;
    SeedStatus& st = res.seeds[i];
    st.seed = seed;
    std::string csv = res.run_dir + "/seed" + std::to_string(seed) + ".csv";
    if (fs::exists(csv)) {
      st.ok = st.cached = true;
      return;
    }
    try {
      LoopConfig lc = wire_method(cfg, m, seed);
      auto lr = online_loop(spec, have_vae ? &vae : nullptr,
                            labels.empty() ? nullptr : &labels, lc);
      save_metrics(csv + ".tmp", lr.rows);
      fs::rename(csv + ".tmp", csv);
      st.ok = true;
    } catch (const std::exception& e) {
      st.error_msg = e.what();
      std::ofstream os(res.run_dir + "/seed" + std::to_string(seed) + ".error");
      os << e.what() << "\n";
    }
  };
  int workers = cfg.workers > 0 ? cfg.workers
                                : (int)std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.seeds);
  if (workers <= 1) {
    for (int i = 0; i < cfg.seeds; ++i) {
      run_seed(i);
      log << "seed " << res.seeds[i].seed << ": "
          << (res.seeds[i].cached ? "cached"
                                  : res.seeds[i].ok ? "done" : res.seeds[i].error_msg)
          << "\n";
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < cfg.seeds; i = next.fetch_add(1))
          run_seed(i);
      });
    for (auto& t : pool) t.join();
    for (auto& st : res.seeds)
      log << "seed " << st.seed << ": "
          << (st.cached ? "cached" : st.ok ? "done" : st.error_msg) << "\n";
  }
  return res;
}

// ---- aggregation over a run directory ----

struct Aggregate {
  std::string method;
  // metric name -> curve over the eval grid
  std::map<std::string, Curve> curves;
};

inline std::vector<MetricRow> load_run_rows(const std::string& run_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (auto& e : fs::directory_iterator(run_dir))
    if (e.path().extension() == ".csv" &&
        e.path().filename().string().rfind("seed", 0) == 0)
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<MetricRow> rows;
  for (auto& f : files) {
    auto r = load_metrics(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline std::string run_dir_method(const std::string& run_dir) {
  std::ifstream is(run_dir + "/config.txt");
  if (!is) throw error("io", "no config.txt in '" + run_dir + "'");
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos && trim(line.substr(0, eq)) == "method")
      return trim(line.substr(eq + 1));
  }
  throw error("io", "no method key in '" + run_dir + "/config.txt'");
}

// IQM + 95% bootstrap CI across seeds on the eval-step grid; pure function
// of the per-seed CSVs.
inline Aggregate aggregate_run(const std::string& run_dir, uint64_t boot_seed = 7) {
  auto rows = load_run_rows(run_dir);
  Aggregate agg;
  agg.method = run_dir_method(run_dir);
  static const char* metrics[] = {"return", "coverage", "critic_loss", "actor_loss",
                                  "rnd_loss", "temperature"};
  std::vector<long> grid;
  for (auto& r : rows)
    if (r.metric == "coverage") grid.push_back(r.env_step);  // eval rows only
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (const char* name : metrics) {
    Curve c;
    c.name = agg.method;
    for (long step : grid) {
      auto vals = metric_at_step(rows, name, step);
      if (vals.empty()) continue;
      CurvePoint p;
      p.step = (double)step;
      p.mid = iqm(vals);
      if (vals.size() >= 2) {
        Ci ci = bootstrap_ci(vals, boot_seed);
        p.lo = std::min(ci.lo, p.mid);
        p.hi = std::max(ci.hi, p.mid);
      } else {
        p.lo = p.hi = p.mid;
      }
      c.points.push_back(p);
    }
    if (!c.points.empty()) agg.curves[name] = std::move(c);
  }
  return agg;
}

inline void save_aggregate(const std::string& path, const Aggregate& agg) {
  std::ofstream os(path);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os << "metric,env_step,iqm,lo,hi\n";
  for (auto& [name, c] : agg.curves)
    for (auto& p : c.points)
      os << name << ',' << (long)p.step << ',' << format_value(p.mid) << ','
         << format_value(p.lo) << ',' << format_value(p.hi) << '\n';
}

inline std::vector<std::string> list_run_dirs(const std::string& out) {
  namespace fs = std::filesystem;
  std::vector<std::string> dirs;
  if (!fs::exists(out)) return dirs;
  for (auto& e : fs::directory_iterator(out))
    if (e.is_directory() && e.path().filename().string().rfind("run_", 0) == 0)
      dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

// One SVG per metric, one curve per run directory (method).
inline int emit_plots(const std::string& out) {
  auto dirs = list_run_dirs(out);
  std::map<std::string, std::vector<Curve>> by_metric;
  for (auto& d : dirs) {
    Aggregate agg = aggregate_run(d);
    for (auto& [name, c] : agg.curves) by_metric[name].push_back(c);
  }
  int written = 0;
  for (auto& [name, curves] : by_metric)
    written += write_svg_plot(out + "/plot_" + name + ".svg", name, name, curves);
  if (by_metric.empty()) std::cerr << "warning: no curves found under '" << out << "'\n";
  return written;
}

}  // namespace supe
