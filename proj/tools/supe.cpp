// Command-line front end: dataset generation, skill pretraining, labeling,
// online runs, aggregation, and plots. Exit code 0 on success; on failure a
// single "error:<category>: <message>" line goes to stderr.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "supe/supe.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> config, method, maze, out;
  std::optional<uint64_t> seed;
  std::optional<int> goal;
  std::optional<long> steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value config file");
  cmd->add_option("--seed", f.seed, "base RNG seed");
  cmd->add_option("--method", f.method, "supe | skills_only | flat_explore | online_only");
  cmd->add_option("--maze", f.maze, "maze layout id (medium | large | ultra)");
  cmd->add_option("--goal", f.goal, "goal id");
  cmd->add_option("--steps", f.steps, "total env steps per seed");
  cmd->add_option("--out", f.out, "output directory");
}

// CLI flags override config-file values.
supe::ExperimentConfig resolve(const CommonFlags& f) {
  supe::ExperimentConfig cfg;
  if (f.config) supe::load_config_file(cfg, *f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.method) cfg.method = *f.method;
  if (f.maze) cfg.maze = *f.maze;
  if (f.goal) cfg.goal = *f.goal;
  if (f.steps) cfg.steps = *f.steps;
  if (f.out) cfg.out = *f.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill pretraining + optimistic pseudo-labeling on point mazes"};
  app.require_subcommand(1);

  CommonFlags fl;
  auto* gen = app.add_subcommand("gen-data", "generate an unlabeled trajectory dataset");
  auto* tv = app.add_subcommand("train-vae", "pretrain the trajectory-segment VAE");
  auto* lab = app.add_subcommand("label", "precompute skill labels for the dataset");
  auto* run = app.add_subcommand("run", "run the online phase for each seed");
  auto* agg = app.add_subcommand("aggregate", "IQM + bootstrap CI over run directories");
  auto* plot = app.add_subcommand("plot", "emit SVG learning curves");
  for (auto* c : {gen, tv, lab, run, agg, plot}) add_common(c, fl);

  CLI11_PARSE(app, argc, argv);

  try {
    supe::ExperimentConfig cfg = resolve(fl);
    if (gen->parsed()) {
      auto spec = supe::make_maze(cfg.maze, cfg.goal);
      std::filesystem::create_directories(cfg.out);
      std::string path = cfg.out + "/data_" + supe::dataset_key(cfg) + ".supd";
      auto ds = supe::generate_dataset(spec, cfg.num_traj, cfg.data_seed,
                                       supe::data_style_from_string(cfg.data_style));
      supe::save_dataset(path, ds);
      std::cout << path << "\n";
    } else if (tv->parsed()) {
      auto spec = supe::make_maze(cfg.maze, cfg.goal);
      std::filesystem::create_directories(cfg.out);
      std::string dpath = cfg.out + "/data_" + supe::dataset_key(cfg) + ".supd";
      if (!std::filesystem::exists(dpath))
        supe::save_dataset(dpath,
                           supe::generate_dataset(spec, cfg.num_traj, cfg.data_seed,
                                                  supe::data_style_from_string(cfg.data_style)));
      auto ds = supe::load_dataset(dpath);
      auto tr = supe::train_vae(cfg.vae, ds, cfg.vae_seed);
      std::string vpath = cfg.out + "/vae_" + supe::vae_key(cfg) + ".supv";
      supe::save_vae(vpath, tr.vae);
      std::cout << vpath;
      if (!tr.loss_curve.empty())
        std::cout << " loss " << tr.loss_curve.front() << " -> " << tr.loss_curve.back();
      std::cout << "\n";
    } else if (lab->parsed()) {
      std::string dpath = cfg.out + "/data_" + supe::dataset_key(cfg) + ".supd";
      std::string vpath = cfg.out + "/vae_" + supe::vae_key(cfg) + ".supv";
      auto ds = supe::load_dataset(dpath);
      auto vae = supe::load_vae(vpath);
      auto labels = supe::precompute_labels(vae, ds, cfg.vae.H, cfg.label_seed);
      std::string lpath = cfg.out + "/labels_" + supe::label_key(cfg) + ".supl";
      supe::save_labels(lpath, labels);
      std::cout << lpath << " (" << labels.size() << " labels)\n";
    } else if (run->parsed()) {
      auto res = supe::run_experiment(cfg);
      int failed = 0;
      for (auto& s : res.seeds) failed += !s.ok;
      std::cout << res.run_dir << "\n";
      if (failed)
        throw supe::error("data", std::to_string(failed) + " of " +
                                      std::to_string(res.seeds.size()) + " seeds failed");
    } else if (agg->parsed()) {
      auto dirs = supe::list_run_dirs(cfg.out);
      if (dirs.empty()) throw supe::error("io", "no run directories under '" + cfg.out + "'");
      for (auto& d : dirs) {
        auto a = supe::aggregate_run(d);
        supe::save_aggregate(d + "/aggregate.csv", a);
        std::cout << d << "/aggregate.csv (" << a.method << ")\n";
      }
    } else if (plot->parsed()) {
      int n = supe::emit_plots(cfg.out);
      std::cout << n << " plots under " << cfg.out << "\n";
    }
  } catch (const supe::error& e) {
    std::cerr << "error:" << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
