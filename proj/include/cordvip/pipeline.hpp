#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cordvip/corrnet.hpp"
#include "cordvip/diffpolicy.hpp"
#include "cordvip/episode.hpp"
#include "cordvip/nn/checkpoint.hpp"
#include "cordvip/pcgeom.hpp"

namespace cordvip {

/// Every tunable of a run. Loaded from one flat JSON object; unknown keys are rejected.
struct RunConfig {
  std::size_t n_points = kDefaultCloudSize;
  EncoderConfig encoder;
  PolicyConfig policy;
  std::size_t K = 100;
  ScheduleKind schedule = ScheduleKind::kSquaredCosine;
  std::size_t denoiser_hidden = 512;
  std::size_t denoiser_blocks = 3;
  std::size_t embed_dim = 64;
  double weight_decay = 1e-2;

  double pretrain_lr = 1e-3;
  std::size_t pretrain_epochs = 8;
  std::size_t pretrain_batch = 8;
  std::size_t pretrain_frames = 500;  // frames drawn per epoch; 0 uses every training frame
  double val_fraction = 0.2;
  std::size_t val_frames = 200;

  double train_lr = 1e-3;
  double encoder_lr = 1e-4;
  std::size_t finetune_epochs = 1;
  std::size_t head_epochs = 300;
  std::size_t train_batch = 64;
  std::size_t window = 8;
  std::size_t noise_draws = 4;

  std::size_t max_steps = toy::kDefaultMaxSteps;
  std::uint64_t seed = 0;
  Aabb crop;

  void validate() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_json() const;
  DenoiserConfig denoiser_config() const;
  DiffusionSchedule make_diffusion_schedule() const { return make_schedule(K, schedule); }
};

using LogFn = std::function<void(const std::string&)>;

// --- data ------------------------------------------------------------------

struct GenDataOptions {
  std::size_t episodes = 50;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t max_steps = toy::kDefaultMaxSteps;
  std::size_t n_points = kDefaultCloudSize;
};

/// Scripted demonstrations as episode_NNN.cvip plus manifest.json. Returns the file paths.
std::vector<std::string> gen_data(const GenDataOptions& options, const LogFn& log = {});

std::uint64_t demo_env_seed(std::uint64_t run_seed, std::size_t episode);
std::uint64_t eval_env_seed(std::uint64_t run_seed, std::size_t episode);

struct Dataset {
  std::vector<EpisodePack> episodes;
  std::vector<std::string> files;
  std::size_t total_frames() const;
};

/// Reads manifest.json from `dir` and every episode it lists.
Dataset load_dataset(const std::string& dir);

/// Raw clouds of one stored frame as points.
PointSet episode_cloud(std::span<const float> flat);

/// Normalized future actions from step t, padded with the final action: [H, Da] and [H, Dh].
std::pair<std::vector<double>, std::vector<double>> future_actions(const EpisodePack& ep, std::size_t t,
                                                                   std::size_t horizon, const Normalizer& norm);

template <typename T>
EncoderInputs<T> episode_inputs(const EpisodePack& ep, std::size_t t, const Normalizer& norm);

double pearson(std::span<const double> a, std::span<const double> b);

// --- pretraining -------------------------------------------------------------

struct PretrainMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_contact = 0.0;
  double train_coordination = 0.0;
  double val_contact = 0.0;
  double val_coordination = 0.0;
  double val_pearson = 0.0;
};

struct PretrainResult {
  std::vector<PretrainMetrics> history;  // epoch 0 is the initialization
  std::string checkpoint;
  std::string metrics_csv;
};

/// Trains the encoder on contact and coordination targets. The checkpoint is rewritten after
/// every epoch; with `resume`, training continues from the epoch stored in `out_ckpt`.
PretrainResult pretrain(const std::string& data_dir, const RunConfig& config, const std::string& out_ckpt,
                        bool resume = false, const LogFn& log = {});

/// Held-out contact statistics of an encoder checkpoint over a dataset.
struct ContactEval {
  double mse = 0.0;
  double pearson = 0.0;
  std::size_t frames = 0;
};

std::string metrics_path(const std::string& ckpt);

// --- policy ------------------------------------------------------------------

struct TrainMetrics {
  std::size_t epoch = 0;
  std::string phase;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TrainMetrics> history;
  std::string checkpoint;
};

struct TrainOptions {
  std::optional<std::string> encoder_ckpt;  // none: random initialization
  bool freeze_encoder = false;
};

TrainResult train_policy(const std::string& data_dir, const RunConfig& config, const TrainOptions& options,
                         const std::string& out_ckpt, const LogFn& log = {});

struct LoadedPolicy {
  RunConfig config;
  std::shared_ptr<CorrEncoder<float>> encoder;
  std::shared_ptr<Denoiser<float>> denoiser;
  Normalizer normalizer;
  DiffusionSchedule schedule;
};

LoadedPolicy load_policy(const std::string& ckpt);

struct LoadedEncoder {
  EncoderConfig config;
  std::shared_ptr<CorrEncoder<float>> encoder;
  Normalizer normalizer;
};

LoadedEncoder load_encoder(const std::string& ckpt);

// --- evaluation ----------------------------------------------------------------

struct EvalEpisode {
  std::size_t episode = 0;
  std::uint64_t env_seed = 0;
  bool success = false;
  std::size_t steps = 0;
  double final_distance = 0.0;
  double wall_seconds = 0.0;
};

struct EvalResult {
  std::vector<EvalEpisode> episodes;
  double success_rate = 0.0;
  double steps_per_second = 0.0;  // executed steps over total wall time
  std::string summary;
};

/// Seeded receding-horizon rollouts. Writes `report` (deterministic columns) and
/// `<report>.timing.csv` when `report` is non-empty.
EvalResult evaluate(const std::string& policy_ckpt, std::size_t episodes, std::uint64_t seed,
                    const std::string& report, const LogFn& log = {});
EvalResult evaluate(Planner& planner, const PolicyConfig& config, std::size_t episodes, std::uint64_t seed,
                    std::size_t max_steps, const std::string& report, const LogFn& log = {});

// --- inspection and benchmarks ------------------------------------------------

struct InspectResult {
  std::string object_csv;
  std::string hand_csv;
  std::size_t rows = 0;
  std::optional<double> pearson;
};

InspectResult inspect(const std::string& episode_file, std::size_t step, const std::string& out_prefix,
                      const std::optional<std::string>& encoder_ckpt, const RunConfig& config);

struct BenchResult {
  std::size_t links = 0;
  std::size_t points = 0;
  double seconds = 0.0;
  std::size_t calls = 0;
  double calls_per_second = 0.0;
};

/// Repeated fk_pointcloud on a benchmark chain with `points` samples per link, output 1024 points.
BenchResult bench_fk(std::size_t links, std::size_t points, double seconds);

}  // namespace cordvip
