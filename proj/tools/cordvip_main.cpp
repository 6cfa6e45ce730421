// cordvip: data generation, pretraining, policy training, evaluation, inspection and FK benchmarks.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "cordvip/pipeline.hpp"

namespace {

using namespace cordvip;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

void log_line(const std::string& line) { std::cout << line << std::endl; }

RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  RunConfig c = path.empty() ? RunConfig{} : RunConfig::load(path);
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correspondence-pretrained visuomotor diffusion policy at desk scale"};
  app.require_subcommand(1);

  std::string env = toy::kTaskName, out, data, config_path, encoder, policy, report, episode_file;
  std::size_t episodes = 50, step = 0, links = 20, points = 1024, n_points = kDefaultCloudSize;
  std::size_t max_steps = toy::kDefaultMaxSteps;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_override;
  double seconds = 3.0;
  bool resume = false, freeze = false;

  auto* gen = app.add_subcommand("gen-data", "Record scripted demonstrations");
  gen->add_option("--env", env, "Environment name")->check(CLI::IsMember({std::string(toy::kTaskName)}));
  gen->add_option("--episodes", episodes, "Number of episodes")->required();
  gen->add_option("--seed", seed, "Run seed")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--n-points", n_points, "Points per cloud");
  gen->add_option("--max-steps", max_steps, "Episode step limit");

  auto* pre = app.add_subcommand("pretrain", "Pretrain the correspondence encoder");
  pre->add_option("--data", data, "Dataset directory")->required();
  pre->add_option("--config", config_path, "JSON run configuration");
  pre->add_option("--out", out, "Encoder checkpoint")->required();
  pre->add_option("--seed", seed_override, "Override the configured seed");
  pre->add_flag("--resume", resume, "Continue from the checkpoint at --out");

  auto* train = app.add_subcommand("train", "Train the diffusion policy");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--encoder", encoder, "Pretrained encoder checkpoint (omit for random init)");
  train->add_option("--config", config_path, "JSON run configuration");
  train->add_option("--out", out, "Policy checkpoint")->required();
  train->add_option("--seed", seed_override, "Override the configured seed");
  train->add_flag("--freeze-encoder", freeze, "Exclude encoder parameters from the optimizer");

  auto* eval = app.add_subcommand("eval", "Roll out a policy checkpoint");
  eval->add_option("--policy", policy, "Policy checkpoint")->required();
  eval->add_option("--episodes", episodes, "Number of rollouts")->required();
  eval->add_option("--seed", seed, "Evaluation seed")->required();
  eval->add_option("--report", report, "CSV report path")->required();

  auto* insp = app.add_subcommand("inspect", "Dump clouds and contact maps of one frame");
  insp->add_option("--episode", episode_file, "Episode pack")->required();
  insp->add_option("--step", step, "Frame index")->required();
  insp->add_option("--out", out, "Output prefix")->required();
  insp->add_option("--encoder", encoder, "Encoder checkpoint for predicted contacts");
  insp->add_option("--config", config_path, "JSON run configuration (gamma, theta, crop)");

  auto* bench = app.add_subcommand("bench-fk", "Time fk_pointcloud on a serial chain");
  bench->add_option("--links", links, "Chain length")->check(CLI::PositiveNumber);
  bench->add_option("--points", points, "Surface samples per link")->check(CLI::PositiveNumber);
  bench->add_option("--seconds", seconds, "Measurement time")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      GenDataOptions opts;
      opts.episodes = episodes;
      opts.seed = seed;
      opts.out_dir = out;
      opts.max_steps = max_steps;
      opts.n_points = n_points;
      const auto files = gen_data(opts);
      std::cout << "episodes=" << files.size() << " out=" << out << std::endl;
    } else if (*pre) {
      const RunConfig cfg = load_config(config_path, seed_override);
      const auto r = pretrain(data, cfg, out, resume, log_line);
      const auto& first = r.history.front();
      const auto& last = r.history.back();
      std::cout << "initial_val_contact_mse=" << first.val_contact << " final_val_contact_mse=" << last.val_contact
                << " final_val_pearson=" << last.val_pearson << " metrics=" << r.metrics_csv << std::endl;
    } else if (*train) {
      const RunConfig cfg = load_config(config_path, seed_override);
      TrainOptions opts;
      if (!encoder.empty()) opts.encoder_ckpt = encoder;
      opts.freeze_encoder = freeze;
      const auto r = train_policy(data, cfg, opts, out, log_line);
      std::cout << "first_loss=" << r.history.front().loss << " final_loss=" << r.history.back().loss
                << " checkpoint=" << r.checkpoint << std::endl;
    } else if (*eval) {
      const auto r = evaluate(policy, episodes, seed, report, log_line);
      std::cout << r.summary << std::endl;
    } else if (*insp) {
      const RunConfig cfg = load_config(config_path, std::nullopt);
      std::optional<std::string> enc;
      if (!encoder.empty()) enc = encoder;
      const auto r = inspect(episode_file, step, out, enc, cfg);
      std::cout << "rows=" << r.rows << " object=" << r.object_csv << " hand=" << r.hand_csv;
      if (r.pearson) std::cout << " pearson=" << *r.pearson;
      std::cout << std::endl;
    } else if (*bench) {
      std::cout << "config links=" << links << " points_per_link=" << points << " out_points=" << kDefaultCloudSize
                << std::endl;
      const auto r = bench_fk(links, points, seconds);
      std::cout << "calls=" << r.calls << " seconds=" << r.seconds << " calls_per_second=" << r.calls_per_second
                << std::endl;
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kData;
  }
  return kOk;
}
