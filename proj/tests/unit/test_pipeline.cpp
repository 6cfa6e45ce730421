#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cordvip/pipeline.hpp"

using namespace cordvip;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cordvip_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_config() {
  RunConfig c = RunConfig::from_json(R"({
    "n_points": 64, "d": 16, "heads": 2, "state_dim": 4, "state_heads": 2, "head_hidden": 16,
    "denoiser_hidden": 32, "denoiser_blocks": 1, "embed_dim": 8,
    "pretrain_epochs": 2, "pretrain_frames": 16, "pretrain_batch": 4, "val_frames": 8,
    "finetune_epochs": 1, "head_epochs": 2, "train_batch": 16, "window": 2, "noise_draws": 1,
    "max_steps": 30, "seed": 3
  })");
  return c;
}

// Small shared dataset: 4 episodes of at most 40 frames with 64-point clouds.
const fs::path& tiny_data() {
  static const fs::path dir = [] {
    const fs::path d = scratch("data");
    GenDataOptions o;
    o.episodes = 4;
    o.seed = 2;
    o.out_dir = d.string();
    o.max_steps = 40;
    o.n_points = 64;
    gen_data(o);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("run config") {
  const RunConfig defaults;
  CHECK(defaults.encoder.d == 128);
  CHECK(defaults.policy.horizon == 12);
  CHECK(defaults.policy.n_obs_steps == 4);
  CHECK(defaults.policy.n_action_steps == 6);
  CHECK(defaults.K == 100);
  CHECK(defaults.policy.ddim_steps == 10);
  CHECK(RunConfig::from_json(defaults.to_json()).to_json() == defaults.to_json());

  const auto c = RunConfig::from_json(R"({"horizon": 8, "theta": 5.0, "crop_min": [-1, -1, -1], "crop_max": null})");
  CHECK(c.policy.horizon == 8);
  CHECK(c.encoder.horizon == 8);
  CHECK(c.encoder.theta == 5.0);
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());

  CHECK_THROWS_AS(RunConfig::from_json(R"({"lerning_rate": 0.1})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"d": "wide"})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"d": -3})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"schedule": "sigmoid"})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"d": 10, "heads": 4})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load((fs::temp_directory_path() / "cordvip_missing.json").string()), IoError);
}

TEST_CASE("gen-data") {
  const auto& dir = tiny_data();
  const auto manifest = nlohmann::json::parse(slurp((dir / "manifest.json").string()));
  CHECK(manifest["count"] == 4);
  CHECK(manifest["episodes"].size() == 4);
  const auto ds = load_dataset(dir.string());
  CHECK(ds.episodes.size() == 4);
  for (const auto& ep : ds.episodes) {
    CHECK(ep.header.n_points == 64);
    CHECK(ep.header.steps <= 40);
  }

  SUBCASE("same seed gives byte-identical files") {
    const fs::path again = scratch("data_again");
    GenDataOptions o;
    o.episodes = 4;
    o.seed = 2;
    o.out_dir = again.string();
    o.max_steps = 40;
    o.n_points = 64;
    const auto files = gen_data(o);
    CHECK(files.size() == 4);
    for (const auto& name : {"manifest.json", "episode_000.cvip", "episode_003.cvip"}) {
      CHECK(slurp((again / name).string()) == slurp((dir / name).string()));
    }
  }
  SUBCASE("zero episodes writes only a manifest") {
    const fs::path empty = scratch("data_empty");
    GenDataOptions o;
    o.episodes = 0;
    o.out_dir = empty.string();
    CHECK(gen_data(o).empty());
    CHECK(std::distance(fs::directory_iterator(empty), fs::directory_iterator{}) == 1);
    CHECK_THROWS_AS(load_dataset(empty.string()), ShapeError);
  }
  CHECK(demo_env_seed(1, 0) != eval_env_seed(1, 0));
  CHECK_THROWS_AS(load_dataset((fs::temp_directory_path() / "cordvip_no_such_dir").string()), IoError);
}

TEST_CASE("dataset helpers") {
  const auto ds = load_dataset(tiny_data().string());
  const auto& ep = ds.episodes[0];
  const Normalizer norm = fit_normalizer(ds.episodes);
  const auto [arm, hand] = future_actions(ep, ep.header.steps - 1, 5, norm);
  CHECK(arm.size() == 15);
  CHECK(hand.size() == 10);
  // Past the end the final action repeats.
  for (std::size_t h = 1; h < 5; ++h)
    for (std::size_t j = 0; j < 3; ++j) CHECK(arm[h * 3 + j] == arm[j]);
  const auto in = episode_inputs<float>(ep, 0, norm);
  CHECK(in.obj_pc.rows() == 64);
  for (float v : in.obj_pc.data()) CHECK((v >= -1.0f && v <= 1.0f));

  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 8}, c = {4, 3, 2, 1};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  CHECK(pearson(a, c) == doctest::Approx(-1.0));
}

TEST_CASE("pretrain writes metrics and resumes exactly") {
  const auto cfg = tiny_config();
  const fs::path out = scratch("pretrain");
  const std::string full = (out / "full.ckpt").string();
  const auto res = pretrain(tiny_data().string(), cfg, full);
  REQUIRE(res.history.size() == 3);
  CHECK(res.history[0].epoch == 0);
  CHECK(res.history[2].epoch == 2);
  const std::string csv = slurp(metrics_path(full));
  CHECK(csv.rfind("epoch,train_loss,train_contact_mse,train_coord_mse,val_contact_mse,val_coord_mse,val_pearson", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  // One epoch, then resume for the second: same bytes as the uninterrupted run.
  RunConfig one = cfg;
  one.pretrain_epochs = 1;
  const std::string split = (out / "split.ckpt").string();
  pretrain(tiny_data().string(), one, split);
  const auto resumed = pretrain(tiny_data().string(), cfg, split, true);
  CHECK(resumed.history.size() == 3);
  CHECK(resumed.history[2].train_loss == res.history[2].train_loss);
  CHECK(slurp(split) == slurp(full));
  CHECK(slurp(metrics_path(split)) == csv);

  SUBCASE("lambda zero keeps coordination out of the total") {
    RunConfig z = cfg;
    z.encoder.lambda = 0.0;
    z.pretrain_epochs = 1;
    const auto r = pretrain(tiny_data().string(), z, (out / "lambda0.ckpt").string());
    CHECK(r.history[1].train_coordination > 0.0);
    CHECK(r.history[1].train_loss == doctest::Approx(r.history[1].train_contact));
  }
  SUBCASE("resume with a different encoder is rejected") {
    RunConfig wide = cfg;
    wide.encoder.d = 32;
    CHECK_THROWS_AS(pretrain(tiny_data().string(), wide, split, true), ConfigError);
  }
  const auto enc = load_encoder(full);
  CHECK(enc.config.d == 16);
  CHECK_THROWS_AS(pretrain((out / "nothing").string(), cfg, (out / "x.ckpt").string()), IoError);
}

TEST_CASE("train and evaluate a tiny policy") {
  const auto cfg = tiny_config();
  const fs::path out = scratch("train");
  const std::string enc = (out / "enc.ckpt").string();
  RunConfig pre = cfg;
  pre.pretrain_epochs = 1;
  pretrain(tiny_data().string(), pre, enc);

  TrainOptions with;
  with.encoder_ckpt = enc;
  const std::string pol = (out / "policy.ckpt").string();
  const auto r = train_policy(tiny_data().string(), cfg, with, pol);
  CHECK(!r.history.empty());
  const std::string pol2 = (out / "policy2.ckpt").string();
  train_policy(tiny_data().string(), cfg, with, pol2);
  CHECK(slurp(pol) == slurp(pol2));

  const auto loaded = load_policy(pol);
  CHECK(loaded.config.to_json() == cfg.to_json());
  CHECK(loaded.schedule.K == cfg.K);

  SUBCASE("frozen encoder keeps the pretrained weights") {
    TrainOptions frozen = with;
    frozen.freeze_encoder = true;
    const std::string fp = (out / "frozen.ckpt").string();
    train_policy(tiny_data().string(), cfg, frozen, fp);
    const auto a = load_encoder(enc);
    const auto b = load_policy(fp);
    for (const auto& [name, t] : a.encoder->params().entries()) {
      const auto other = b.encoder->params().get(name);
      CHECK(std::equal(t.data().begin(), t.data().end(), other.data().begin()));
    }
  }
  SUBCASE("random init differs from the pretrained arm") {
    const std::string rp = (out / "scratch.ckpt").string();
    train_policy(tiny_data().string(), cfg, TrainOptions{}, rp);
    CHECK(slurp(rp) != slurp(pol));
  }

  const std::string report = (out / "report.csv").string();
  const auto ev = evaluate(pol, 2, 5, report);
  CHECK(ev.episodes.size() == 2);
  double wins = 0;
  for (const auto& e : ev.episodes) {
    wins += e.success;
    CHECK(e.steps <= cfg.max_steps);
  }
  CHECK(ev.success_rate == doctest::Approx(wins / 2));
  const std::string bytes = slurp(report);
  CHECK(bytes.rfind("episode,env_seed,success,steps,final_distance", 0) == 0);
  evaluate(pol, 2, 5, report);
  CHECK(slurp(report) == bytes);
  CHECK(fs::exists(report + ".timing.csv"));

  RunConfig mismatched = cfg;
  mismatched.encoder.d = 32;
  CHECK_THROWS_AS(train_policy(tiny_data().string(), mismatched, with, (out / "bad.ckpt").string()), ConfigError);
}

TEST_CASE("inspect") {
  const auto cfg = tiny_config();
  const fs::path out = scratch("inspect");
  const auto file = (tiny_data() / "episode_001.cvip").string();
  const auto r = inspect(file, 3, (out / "frame").string(), std::nullopt, cfg);
  CHECK(r.rows == 64);
  CHECK(!r.pearson);
  std::ifstream in(r.object_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,y,z,contact");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const double c = std::stod(line.substr(line.rfind(',') + 1));
    CHECK((c >= 0.0 && c <= 1.0));
  }
  CHECK(rows == 64);
  CHECK_THROWS_AS(inspect(file, 999, (out / "frame").string(), std::nullopt, cfg), ShapeError);

  const std::string enc = (out / "enc.ckpt").string();
  RunConfig pre = cfg;
  pre.pretrain_epochs = 1;
  pretrain(tiny_data().string(), pre, enc);
  const auto p = inspect(file, 3, (out / "pred").string(), enc, cfg);
  CHECK(p.pearson.has_value());
  std::ifstream pin(p.object_csv);
  std::getline(pin, line);
  CHECK(line == "x,y,z,contact,predicted");
}

TEST_CASE("bench-fk") {
  const auto r = bench_fk(4, 64, 0.05);
  CHECK(r.links == 4);
  CHECK(r.points == 64);
  CHECK(r.calls > 0);
  CHECK(r.calls_per_second > 0.0);
}
