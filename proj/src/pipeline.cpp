#include "cordvip/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "cordvip/nn/optim.hpp"
#include "cordvip/se3kin.hpp"

namespace cordvip {

namespace fs = std::filesystem;
using json = nlohmann::json;
using nn::Tensor;

namespace {

constexpr std::uint64_t kDemoSeedBase = 0x1000;
constexpr std::uint64_t kEvalSeedBase = 0x2000;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void emit(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

std::size_t as_size(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("config: '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<double>();
}

Vec3 as_bound(const json& v, const std::string& key, double fallback) {
  if (v.is_null()) return Vec3::Constant(fallback);
  if (!v.is_array() || v.size() != 3) throw ConfigError("config: '" + key + "' must be null or [x, y, z]");
  return Vec3(as_double(v[0], key), as_double(v[1], key), as_double(v[2], key));
}

json bound_json(const Vec3& b) {
  if (!b.allFinite()) return nullptr;
  return json::array({b.x(), b.y(), b.z()});
}

}  // namespace

// --- config ------------------------------------------------------------------

void RunConfig::validate() const {
  encoder.validate();
  policy.validate();
  if (encoder.horizon != policy.horizon) throw ConfigError("config: encoder and policy horizons differ");
  if (n_points < 16) throw ConfigError("config: n_points must be at least 16");
  if (K < 2) throw ConfigError("config: K must be at least 2");
  if (policy.ddim_steps > K) throw ConfigError("config: ddim_steps exceeds K");
  if (!(pretrain_lr > 0) || !(train_lr > 0) || !(encoder_lr > 0)) throw ConfigError("config: learning rates must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("config: weight_decay must be >= 0");
  if (pretrain_batch == 0 || train_batch == 0 || window == 0 || noise_draws == 0) {
    throw ConfigError("config: batch sizes, window and noise_draws must be positive");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("config: val_fraction must be in [0, 1)");
  if (denoiser_hidden == 0 || embed_dim == 0 || embed_dim % 2 != 0) {
    throw ConfigError("config: denoiser_hidden must be positive and embed_dim even");
  }
  if (max_steps == 0) throw ConfigError("config: max_steps must be positive");
  for (int i = 0; i < 3; ++i) {
    if (crop.lo[i] > crop.hi[i]) throw ConfigError("config: crop_min exceeds crop_max");
  }
}

RunConfig RunConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  const std::map<std::string, std::function<void(const json&, const std::string&)>> setters = {
      {"n_points", [&](const json& v, const std::string& k) { c.n_points = as_size(v, k); }},
      {"d", [&](const json& v, const std::string& k) { c.encoder.d = as_size(v, k); }},
      {"heads", [&](const json& v, const std::string& k) { c.encoder.heads = as_size(v, k); }},
      {"state_dim", [&](const json& v, const std::string& k) { c.encoder.state_dim = as_size(v, k); }},
      {"state_heads", [&](const json& v, const std::string& k) { c.encoder.state_heads = as_size(v, k); }},
      {"head_hidden", [&](const json& v, const std::string& k) { c.encoder.head_hidden = as_size(v, k); }},
      {"lambda", [&](const json& v, const std::string& k) { c.encoder.lambda = as_double(v, k); }},
      {"gamma", [&](const json& v, const std::string& k) { c.encoder.gamma = as_double(v, k); }},
      {"theta", [&](const json& v, const std::string& k) { c.encoder.theta = as_double(v, k); }},
      {"K", [&](const json& v, const std::string& k) { c.K = as_size(v, k); }},
      {"schedule",
       [&](const json& v, const std::string& k) {
         if (!v.is_string()) throw ConfigError("config: '" + k + "' must be a string");
         c.schedule = parse_schedule_kind(v.get<std::string>());
       }},
      {"horizon",
       [&](const json& v, const std::string& k) { c.policy.horizon = c.encoder.horizon = as_size(v, k); }},
      {"n_obs_steps", [&](const json& v, const std::string& k) { c.policy.n_obs_steps = as_size(v, k); }},
      {"n_action_steps", [&](const json& v, const std::string& k) { c.policy.n_action_steps = as_size(v, k); }},
      {"ddim_steps", [&](const json& v, const std::string& k) { c.policy.ddim_steps = as_size(v, k); }},
      {"denoiser_hidden", [&](const json& v, const std::string& k) { c.denoiser_hidden = as_size(v, k); }},
      {"denoiser_blocks", [&](const json& v, const std::string& k) { c.denoiser_blocks = as_size(v, k); }},
      {"embed_dim", [&](const json& v, const std::string& k) { c.embed_dim = as_size(v, k); }},
      {"weight_decay", [&](const json& v, const std::string& k) { c.weight_decay = as_double(v, k); }},
      {"pretrain_lr", [&](const json& v, const std::string& k) { c.pretrain_lr = as_double(v, k); }},
      {"pretrain_epochs", [&](const json& v, const std::string& k) { c.pretrain_epochs = as_size(v, k); }},
      {"pretrain_batch", [&](const json& v, const std::string& k) { c.pretrain_batch = as_size(v, k); }},
      {"pretrain_frames", [&](const json& v, const std::string& k) { c.pretrain_frames = as_size(v, k); }},
      {"val_fraction", [&](const json& v, const std::string& k) { c.val_fraction = as_double(v, k); }},
      {"val_frames", [&](const json& v, const std::string& k) { c.val_frames = as_size(v, k); }},
      {"train_lr", [&](const json& v, const std::string& k) { c.train_lr = as_double(v, k); }},
      {"encoder_lr", [&](const json& v, const std::string& k) { c.encoder_lr = as_double(v, k); }},
      {"finetune_epochs", [&](const json& v, const std::string& k) { c.finetune_epochs = as_size(v, k); }},
      {"head_epochs", [&](const json& v, const std::string& k) { c.head_epochs = as_size(v, k); }},
      {"train_batch", [&](const json& v, const std::string& k) { c.train_batch = as_size(v, k); }},
      {"window", [&](const json& v, const std::string& k) { c.window = as_size(v, k); }},
      {"noise_draws", [&](const json& v, const std::string& k) { c.noise_draws = as_size(v, k); }},
      {"max_steps", [&](const json& v, const std::string& k) { c.max_steps = as_size(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { c.seed = as_size(v, k); }},
      {"crop_min",
       [&](const json& v, const std::string& k) { c.crop.lo = as_bound(v, k, -std::numeric_limits<double>::infinity()); }},
      {"crop_max",
       [&](const json& v, const std::string& k) { c.crop.hi = as_bound(v, k, std::numeric_limits<double>::infinity()); }},
  };
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(value, key);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return from_json(read_text(path)); }

std::string RunConfig::to_json() const {
  json j = {
      {"n_points", n_points},
      {"d", encoder.d},
      {"heads", encoder.heads},
      {"state_dim", encoder.state_dim},
      {"state_heads", encoder.state_heads},
      {"head_hidden", encoder.head_hidden},
      {"lambda", encoder.lambda},
      {"gamma", encoder.gamma},
      {"theta", encoder.theta},
      {"K", K},
      {"schedule", cordvip::to_string(schedule)},
      {"horizon", policy.horizon},
      {"n_obs_steps", policy.n_obs_steps},
      {"n_action_steps", policy.n_action_steps},
      {"ddim_steps", policy.ddim_steps},
      {"denoiser_hidden", denoiser_hidden},
      {"denoiser_blocks", denoiser_blocks},
      {"embed_dim", embed_dim},
      {"weight_decay", weight_decay},
      {"pretrain_lr", pretrain_lr},
      {"pretrain_epochs", pretrain_epochs},
      {"pretrain_batch", pretrain_batch},
      {"pretrain_frames", pretrain_frames},
      {"val_fraction", val_fraction},
      {"val_frames", val_frames},
      {"train_lr", train_lr},
      {"encoder_lr", encoder_lr},
      {"finetune_epochs", finetune_epochs},
      {"head_epochs", head_epochs},
      {"train_batch", train_batch},
      {"window", window},
      {"noise_draws", noise_draws},
      {"max_steps", max_steps},
      {"seed", seed},
      {"crop_min", bound_json(crop.lo)},
      {"crop_max", bound_json(crop.hi)},
  };
  return j.dump(2);
}

DenoiserConfig RunConfig::denoiser_config() const {
  DenoiserConfig d;
  d.action_dim = policy.horizon * (encoder.arm_dim + encoder.hand_dim);
  d.cond_dim = policy.n_obs_steps * encoder.feature_dim();
  d.hidden = denoiser_hidden;
  d.blocks = denoiser_blocks;
  d.embed_dim = embed_dim;
  return d;
}

// --- data ------------------------------------------------------------------

std::uint64_t demo_env_seed(std::uint64_t run_seed, std::size_t episode) {
  return derive_seed(run_seed, kDemoSeedBase + episode);
}

std::uint64_t eval_env_seed(std::uint64_t run_seed, std::size_t episode) {
  return derive_seed(run_seed, kEvalSeedBase + episode);
}

std::vector<std::string> gen_data(const GenDataOptions& options, const LogFn& log) {
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec || !fs::is_directory(options.out_dir)) {
    throw IoError("gen-data: cannot create output directory '" + options.out_dir + "'");
  }
  std::optional<toy::ToyWorld> custom;
  if (options.n_points != kDefaultCloudSize) custom.emplace(toy::ToyWorld::build(options.n_points));
  const toy::ToyWorld& world = custom ? *custom : toy::ToyWorld::instance();
  json manifest = {{"task", toy::kTaskName}, {"seed", options.seed}, {"count", options.episodes},
                   {"n_points", options.n_points}, {"episodes", json::array()}};
  std::vector<std::string> files;
  for (std::size_t i = 0; i < options.episodes; ++i) {
    const std::uint64_t env_seed = demo_env_seed(options.seed, i);
    const EpisodePack pack = toy::record_demo(env_seed, options.max_steps, world);
    char name[32];
    std::snprintf(name, sizeof name, "episode_%03zu.cvip", i);
    const std::string path = (fs::path(options.out_dir) / name).string();
    write_episode(pack, path);
    files.push_back(path);
    manifest["episodes"].push_back({{"file", name}, {"env_seed", env_seed}, {"steps", pack.header.steps}});
    emit(log, std::string("wrote ") + name + " steps=" + std::to_string(pack.header.steps));
  }
  write_text((fs::path(options.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return files;
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.header.steps;
  return n;
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("dataset: no manifest.json in '" + dir + "'");
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path.string()));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("dataset manifest: ") + e.what());
  }
  Dataset ds;
  try {
    for (const auto& entry : manifest.at("episodes")) {
      const std::string path = (fs::path(dir) / entry.at("file").get<std::string>()).string();
      ds.episodes.push_back(read_episode(path));
      ds.files.push_back(path);
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("dataset manifest: ") + e.what());
  }
  if (ds.episodes.empty()) throw ShapeError("dataset: '" + dir + "' lists no episodes");
  const auto& h0 = ds.episodes.front().header;
  for (const auto& ep : ds.episodes) {
    if (ep.header.n_points != h0.n_points || ep.header.arm_dim != h0.arm_dim || ep.header.hand_dim != h0.hand_dim) {
      throw ShapeError("dataset: episodes disagree on cloud size or state dimensions");
    }
  }
  return ds;
}

PointSet episode_cloud(std::span<const float> flat) {
  PointSet pts(flat.size() / 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
  return pts;
}

std::pair<std::vector<double>, std::vector<double>> future_actions(const EpisodePack& ep, std::size_t t,
                                                                   std::size_t horizon, const Normalizer& norm) {
  const std::size_t T = ep.header.steps;
  std::vector<double> arm, hand;
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::size_t s = std::min(t + h, T - 1);
    const auto a = ep.arm_action_at(s);
    const auto b = ep.hand_action_at(s);
    arm.insert(arm.end(), a.begin(), a.end());
    hand.insert(hand.end(), b.begin(), b.end());
  }
  return {norm.normalize(arm, stream::kArmAction), norm.normalize(hand, stream::kHandAction)};
}

template <typename T>
EncoderInputs<T> episode_inputs(const EpisodePack& ep, std::size_t t, const Normalizer& norm) {
  auto widen = [](std::span<const float> s) { return std::vector<double>(s.begin(), s.end()); };
  return make_encoder_inputs<T>(widen(ep.object_pc_at(t)), widen(ep.hand_pc_at(t)), widen(ep.arm_state_at(t)),
                                widen(ep.hand_state_at(t)), norm);
}

template EncoderInputs<float> episode_inputs<float>(const EpisodePack&, std::size_t, const Normalizer&);
template EncoderInputs<double> episode_inputs<double>(const EpisodePack&, std::size_t, const Normalizer&);

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: lengths differ");
  if (a.size() < 2) return 0.0;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::string metrics_path(const std::string& ckpt) { return ckpt + ".metrics.csv"; }

// --- pretraining -------------------------------------------------------------

namespace {

struct FrameRefIdx {
  std::size_t ep = 0;
  std::size_t t = 0;
};

class ContactCache {
 public:
  ContactCache(const Dataset& ds, double gamma, double theta) : ds_(ds), gamma_(gamma), theta_(theta) {}

  const std::vector<double>& get(FrameRefIdx f) {
    const auto key = std::make_pair(f.ep, f.t);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const auto& ep = ds_.episodes[f.ep];
      auto c = toy::contact_targets(episode_cloud(ep.object_pc_at(f.t)), episode_cloud(ep.hand_pc_at(f.t)), gamma_,
                                    theta_);
      it = cache_.emplace(key, std::move(c)).first;
    }
    return it->second;
  }

 private:
  const Dataset& ds_;
  double gamma_, theta_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cache_;
};

template <typename T>
Tensor<T> column(const std::vector<double>& v) {
  return Tensor<T>(v.size(), 1, std::vector<T>(v.begin(), v.end()));
}

PretrainSample<float> make_pretrain_sample(const Dataset& ds, FrameRefIdx f, const Normalizer& norm,
                                           const EncoderConfig& cfg, ContactCache& contacts) {
  const auto& ep = ds.episodes[f.ep];
  const auto in = episode_inputs<float>(ep, f.t, norm);
  const auto [arm, hand] = future_actions(ep, f.t, cfg.horizon, norm);
  PretrainSample<float> s;
  s.obj_pc = in.obj_pc;
  s.hand_pc = in.hand_pc;
  s.arm_state = in.arm_state;
  s.hand_state = in.hand_state;
  s.contact = column<float>(contacts.get(f));
  s.arm_seq = Tensor<float>(cfg.horizon, cfg.arm_dim, std::vector<float>(arm.begin(), arm.end()));
  s.hand_seq = Tensor<float>(cfg.horizon, cfg.hand_dim, std::vector<float>(hand.begin(), hand.end()));
  return s;
}

std::vector<FrameRefIdx> frames_of(const Dataset& ds, const std::vector<std::size_t>& eps) {
  std::vector<FrameRefIdx> out;
  for (auto e : eps) {
    for (std::size_t t = 0; t < ds.episodes[e].header.steps; ++t) out.push_back({e, t});
  }
  return out;
}

std::vector<FrameRefIdx> evenly_spaced(const std::vector<FrameRefIdx>& frames, std::size_t cap) {
  if (cap == 0 || frames.size() <= cap) return frames;
  std::vector<FrameRefIdx> out;
  for (std::size_t i = 0; i < cap; ++i) out.push_back(frames[i * frames.size() / cap]);
  return out;
}

struct EvalTerms {
  double contact = 0.0;
  double coordination = 0.0;
  double total = 0.0;
  double pearson = 0.0;
};

EvalTerms evaluate_frames(const CorrEncoder<float>& enc, const Dataset& ds, const std::vector<FrameRefIdx>& frames,
                          const Normalizer& norm, ContactCache& contacts) {
  EvalTerms out;
  if (frames.empty()) return out;
  nn::NoGradGuard no_grad;
  std::vector<double> pred_all, true_all;
  for (const auto& f : frames) {
    const auto s = make_pretrain_sample(ds, f, norm, enc.config(), contacts);
    const auto feat = enc.forward(s.hand_pc, s.obj_pc, s.arm_state, s.hand_state);
    const auto pred = enc.predict_contact(feat);
    const double c = nn::mse(pred, s.contact).item();
    const double k = nn::mse(enc.predict_arm_seq(feat), s.arm_seq).item() +
                     nn::mse(enc.predict_hand_seq(feat), s.hand_seq).item();
    out.contact += c;
    out.coordination += k;
    out.total += c + enc.config().lambda * k;
    pred_all.insert(pred_all.end(), pred.data().begin(), pred.data().end());
    true_all.insert(true_all.end(), s.contact.data().begin(), s.contact.data().end());
  }
  const double n = static_cast<double>(frames.size());
  out.contact /= n;
  out.coordination /= n;
  out.total /= n;
  out.pearson = pearson(pred_all, true_all);
  return out;
}

json metrics_json(const PretrainMetrics& m) {
  return {{"epoch", m.epoch},
          {"train_loss", m.train_loss},
          {"train_contact", m.train_contact},
          {"train_coordination", m.train_coordination},
          {"val_contact", m.val_contact},
          {"val_coordination", m.val_coordination},
          {"val_pearson", m.val_pearson}};
}

PretrainMetrics metrics_from_json(const json& j) {
  PretrainMetrics m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.train_loss = j.at("train_loss").get<double>();
  m.train_contact = j.at("train_contact").get<double>();
  m.train_coordination = j.at("train_coordination").get<double>();
  m.val_contact = j.at("val_contact").get<double>();
  m.val_coordination = j.at("val_coordination").get<double>();
  m.val_pearson = j.at("val_pearson").get<double>();
  return m;
}

void write_pretrain_csv(const std::string& path, const std::vector<PretrainMetrics>& history) {
  std::string text = "epoch,train_loss,train_contact_mse,train_coord_mse,val_contact_mse,val_coord_mse,val_pearson\n";
  for (const auto& m : history) {
    text += std::to_string(m.epoch) + "," + fmt(m.train_loss) + "," + fmt(m.train_contact) + "," +
            fmt(m.train_coordination) + "," + fmt(m.val_contact) + "," + fmt(m.val_coordination) + "," +
            fmt(m.val_pearson) + "\n";
  }
  write_text(path, text);
}

template <typename T>
void store_moments(nn::Checkpoint& ckpt, const nn::AdamW<T>& opt, const std::string& prefix) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    const std::vector<std::size_t> shape = {p.rows(), p.cols()};
    ckpt.put(prefix + "m/" + name, shape, std::vector<float>(opt.first_moments()[i].begin(), opt.first_moments()[i].end()));
    ckpt.put(prefix + "v/" + name, shape, std::vector<float>(opt.second_moments()[i].begin(), opt.second_moments()[i].end()));
  }
}

template <typename T>
void load_moments(const nn::Checkpoint& ckpt, nn::AdamW<T>& opt, const std::string& prefix) {
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ckpt.find(prefix + "m/" + params[i].first);
    const auto* v = ckpt.find(prefix + "v/" + params[i].first);
    if (!m || !v || m->data.size() != params[i].second.numel() || v->data.size() != params[i].second.numel()) {
      throw FormatError(FormatErrorKind::kShapeMismatch, "checkpoint lacks optimizer state for " + params[i].first);
    }
    opt.first_moments()[i].assign(m->data.begin(), m->data.end());
    opt.second_moments()[i].assign(v->data.begin(), v->data.end());
  }
}

json parse_manifest(const nn::Checkpoint& ckpt, const char* kind) {
  json m;
  try {
    m = json::parse(ckpt.manifest);
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("checkpoint manifest: ") + e.what());
  }
  if (!m.is_object() || m.value("kind", "") != kind) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("checkpoint is not a ") + kind + " checkpoint");
  }
  return m;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

}  // namespace

PretrainResult pretrain(const std::string& data_dir, const RunConfig& config, const std::string& out_ckpt,
                        bool resume, const LogFn& log) {
  config.validate();
  const Dataset ds = load_dataset(data_dir);
  const std::size_t E = ds.episodes.size();
  if (ds.episodes.front().header.arm_dim != config.encoder.arm_dim ||
      ds.episodes.front().header.hand_dim != config.encoder.hand_dim) {
    throw ShapeError("pretrain: dataset state dimensions differ from the encoder configuration");
  }

  std::vector<std::size_t> order(E);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(derive_seed(config.seed, seed_offset::kSplit));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = 0;
  if (E >= 2 && config.val_fraction > 0) {
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(E))),
                                    1, E - 1);
  }
  std::vector<std::size_t> val_eps(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_eps(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_eps.begin(), val_eps.end());
  std::sort(train_eps.begin(), train_eps.end());

  std::vector<EpisodePack> train_packs;
  for (auto e : train_eps) train_packs.push_back(ds.episodes[e]);
  Normalizer norm = fit_normalizer(train_packs);
  train_packs.clear();

  CorrEncoder<float> enc(config.encoder, derive_seed(config.seed, seed_offset::kEncoderInit));
  nn::AdamW<float> opt(enc.params().entries(),
                       nn::AdamWConfig{config.pretrain_lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::vector<PretrainMetrics> history;
  std::size_t start_epoch = 0;

  ContactCache contacts(ds, config.encoder.gamma, config.encoder.theta);
  const auto train_frames = frames_of(ds, train_eps);
  const auto val_frames = evenly_spaced(frames_of(ds, val_eps), config.val_frames);
  const auto train_probe = evenly_spaced(train_frames, config.val_frames);

  if (resume) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(out_ckpt);
    const json m = parse_manifest(ckpt, "encoder");
    if (m.at("encoder") != config.encoder.to_json()) {
      throw ConfigError("pretrain: resume checkpoint was trained with a different encoder configuration");
    }
    norm = Normalizer::from_json(m.at("normalizer").dump());
    nn::load_parameters(ckpt, enc.params(), "enc/");
    load_moments(ckpt, opt, "opt/");
    opt.restore_steps(m.at("adam_steps").get<std::uint64_t>());
    start_epoch = m.at("epoch").get<std::size_t>();
    for (const auto& h : m.at("history")) history.push_back(metrics_from_json(h));
    emit(log, "resuming from epoch " + std::to_string(start_epoch));
  } else {
    const auto tr = evaluate_frames(enc, ds, train_probe, norm, contacts);
    const auto va = evaluate_frames(enc, ds, val_frames, norm, contacts);
    history.push_back({0, tr.total, tr.contact, tr.coordination, va.contact, va.coordination, va.pearson});
  }

  auto save = [&](std::size_t epoch) {
    nn::Checkpoint ckpt;
    json hist = json::array();
    for (const auto& h : history) hist.push_back(metrics_json(h));
    json manifest = {{"kind", "encoder"},
                     {"encoder", config.encoder.to_json()},
                     {"normalizer", json::parse(norm.to_json())},
                     {"epoch", epoch},
                     {"adam_steps", opt.steps()},
                     {"config", json::parse(config.to_json())},
                     {"history", hist}};
    ckpt.manifest = manifest.dump();
    nn::store_parameters(ckpt, enc.params(), "enc/");
    store_moments(ckpt, opt, "opt/");
    nn::save_checkpoint(ckpt, out_ckpt);
    write_pretrain_csv(metrics_path(out_ckpt), history);
  };
  if (!resume) save(0);
  {
    const auto& h = history.back();
    emit(log, "epoch " + std::to_string(h.epoch) + " val_contact_mse=" + fmt(h.val_contact) +
                  " val_pearson=" + fmt(h.val_pearson));
  }

  for (std::size_t epoch = start_epoch + 1; epoch <= config.pretrain_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(config.seed, seed_offset::kBatchOrder) + epoch);
    auto frames = train_frames;
    std::shuffle(frames.begin(), frames.end(), rng);
    if (config.pretrain_frames > 0 && frames.size() > config.pretrain_frames) frames.resize(config.pretrain_frames);
    double sum_total = 0, sum_contact = 0, sum_coord = 0;
    for (std::size_t b0 = 0; b0 < frames.size(); b0 += config.pretrain_batch) {
      const std::size_t b1 = std::min(frames.size(), b0 + config.pretrain_batch);
      const float inv = 1.0f / static_cast<float>(b1 - b0);
      opt.zero_grad();
      for (std::size_t i = b0; i < b1; ++i) {
        const auto sample = make_pretrain_sample(ds, frames[i], norm, config.encoder, contacts);
        const auto terms = enc.pretrain_loss(sample);
        check_finite(terms.total.item(), "pretraining loss");
        sum_total += terms.total.item();
        sum_contact += terms.contact.item();
        sum_coord += terms.coordination.item();
        nn::backward(nn::scale(terms.total, inv));
      }
      opt.step();
    }
    const double n = static_cast<double>(std::max<std::size_t>(frames.size(), 1));
    const auto va = evaluate_frames(enc, ds, val_frames, norm, contacts);
    history.push_back({epoch, sum_total / n, sum_contact / n, sum_coord / n, va.contact, va.coordination, va.pearson});
    save(epoch);
    emit(log, "epoch " + std::to_string(epoch) + " train_loss=" + fmt(sum_total / n) + " contact=" +
                  fmt(sum_contact / n) + " coord=" + fmt(sum_coord / n) + " val_contact_mse=" + fmt(va.contact) +
                  " val_pearson=" + fmt(va.pearson));
  }
  if (resume && start_epoch >= config.pretrain_epochs) save(start_epoch);
  return {history, out_ckpt, metrics_path(out_ckpt)};
}

LoadedEncoder load_encoder(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  const json m = parse_manifest(ckpt, "encoder");
  LoadedEncoder out;
  out.config = EncoderConfig::from_json(m.at("encoder"));
  out.encoder = std::make_shared<CorrEncoder<float>>(out.config, 0);
  nn::load_parameters(ckpt, out.encoder->params(), "enc/");
  out.normalizer = Normalizer::from_json(m.at("normalizer").dump());
  return out;
}

// --- policy ------------------------------------------------------------------

namespace {

struct PolicySample {
  std::size_t ep = 0;
  std::size_t t = 0;
  std::vector<float> a0;  // [H * (Da + Dh)], normalized
};

std::vector<float> plan_row(const EpisodePack& ep, std::size_t t, std::size_t horizon, const Normalizer& norm) {
  const auto [arm, hand] = future_actions(ep, t, horizon, norm);
  const std::size_t da = ep.header.arm_dim, dh = ep.header.hand_dim;
  std::vector<float> row;
  row.reserve(horizon * (da + dh));
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t j = 0; j < da; ++j) row.push_back(static_cast<float>(arm[h * da + j]));
    for (std::size_t j = 0; j < dh; ++j) row.push_back(static_cast<float>(hand[h * dh + j]));
  }
  return row;
}

std::size_t history_frame(std::size_t t, std::size_t i, std::size_t n_obs) {
  const std::size_t back = n_obs - 1 - i;
  return t >= back ? t - back : 0;
}

void write_train_csv(const std::string& path, const std::vector<TrainMetrics>& history) {
  std::string text = "epoch,phase,loss\n";
  for (const auto& m : history) text += std::to_string(m.epoch) + "," + m.phase + "," + fmt(m.loss) + "\n";
  write_text(path, text);
}

}  // namespace

TrainResult train_policy(const std::string& data_dir, const RunConfig& config, const TrainOptions& options,
                         const std::string& out_ckpt, const LogFn& log) {
  config.validate();
  const Dataset ds = load_dataset(data_dir);
  const auto& h0 = ds.episodes.front().header;

  std::shared_ptr<CorrEncoder<float>> enc;
  Normalizer norm;
  EncoderConfig enc_cfg = config.encoder;
  if (options.encoder_ckpt) {
    auto loaded = load_encoder(*options.encoder_ckpt);
    enc = loaded.encoder;
    norm = loaded.normalizer;
    enc_cfg = loaded.config;
    const auto& want = config.encoder;
    if (enc_cfg.d != want.d || enc_cfg.heads != want.heads || enc_cfg.state_dim != want.state_dim ||
        enc_cfg.state_heads != want.state_heads || enc_cfg.head_hidden != want.head_hidden ||
        enc_cfg.horizon != want.horizon) {
      throw ConfigError("train: encoder checkpoint architecture differs from the configuration");
    }
    if (enc_cfg.arm_dim != h0.arm_dim || enc_cfg.hand_dim != h0.hand_dim) {
      throw ShapeError("train: encoder checkpoint state dimensions differ from the dataset");
    }
  } else {
    if (config.encoder.arm_dim != h0.arm_dim || config.encoder.hand_dim != h0.hand_dim) {
      throw ShapeError("train: dataset state dimensions differ from the configuration");
    }
    enc = std::make_shared<CorrEncoder<float>>(config.encoder, derive_seed(config.seed, seed_offset::kEncoderInit));
    norm = fit_normalizer(ds.episodes);
  }
  RunConfig effective = config;
  effective.encoder = enc_cfg;
  effective.encoder.horizon = config.policy.horizon;
  const DenoiserConfig den_cfg = effective.denoiser_config();
  auto den = std::make_shared<Denoiser<float>>(den_cfg, derive_seed(config.seed, seed_offset::kDenoiserInit));
  const DiffusionSchedule schedule = config.make_diffusion_schedule();
  const std::size_t H = config.policy.horizon, n_obs = config.policy.n_obs_steps;
  const std::size_t A = den_cfg.action_dim;

  std::vector<PolicySample> samples;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    for (std::size_t t = 0; t < ds.episodes[e].header.steps; ++t) {
      samples.push_back({e, t, plan_row(ds.episodes[e], t, H, norm)});
    }
  }
  if (samples.empty()) throw ShapeError("train: dataset has no frames");

  const nn::AdamWConfig den_opt_cfg{config.train_lr, 0.9, 0.999, 1e-8, config.weight_decay};
  nn::AdamW<float> den_opt(den->params().entries(), den_opt_cfg);
  nn::AdamW<float> enc_opt(enc->params().entries(),
                           nn::AdamWConfig{config.encoder_lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 noise_rng(derive_seed(config.seed, seed_offset::kDiffusionNoise));
  std::vector<TrainMetrics> history;

  // Phase 1: end-to-end through the encoder over windows of consecutive frames.
  struct Window {
    std::size_t ep, t0, t1;
  };
  std::vector<Window> windows;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const std::size_t T = ds.episodes[e].header.steps;
    for (std::size_t t0 = 0; t0 < T; t0 += config.window) windows.push_back({e, t0, std::min(T, t0 + config.window)});
  }
  std::size_t epoch = 0;
  for (std::size_t fe = 0; fe < config.finetune_epochs; ++fe) {
    ++epoch;
    std::mt19937_64 rng(derive_seed(config.seed, seed_offset::kBatchOrder) + epoch);
    auto order = windows;
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0;
    std::size_t count = 0;
    for (const auto& w : order) {
      const auto& ep = ds.episodes[w.ep];
      const std::size_t f0 = history_frame(w.t0, 0, n_obs);
      std::vector<Tensor<float>> feats;
      {
        std::optional<nn::NoGradGuard> guard;
        if (options.freeze_encoder) guard.emplace();
        for (std::size_t f = f0; f < w.t1; ++f) feats.push_back(enc->forward(episode_inputs<float>(ep, f, norm)).condition());
      }
      std::vector<Tensor<float>> cond_rows;
      std::vector<float> a0;
      for (std::size_t m = 0; m < config.noise_draws; ++m) {
        for (std::size_t t = w.t0; t < w.t1; ++t) {
          std::vector<Tensor<float>> parts;
          for (std::size_t i = 0; i < n_obs; ++i) parts.push_back(feats[history_frame(t, i, n_obs) - f0]);
          cond_rows.push_back(nn::concat(parts, 1));
          const auto& row = std::find_if(samples.begin(), samples.end(),
                                         [&](const PolicySample& s) { return s.ep == w.ep && s.t == t; })->a0;
          a0.insert(a0.end(), row.begin(), row.end());
        }
      }
      const std::size_t B = cond_rows.size();
      den_opt.zero_grad();
      enc_opt.zero_grad();
      const auto loss = diffusion_loss(*den, Tensor<float>(B, A, std::move(a0)), nn::concat(cond_rows, 0), schedule, noise_rng);
      sum += loss.item() * static_cast<double>(B);
      count += B;
      nn::backward(loss);
      den_opt.step();
      if (!options.freeze_encoder) enc_opt.step();
    }
    history.push_back({epoch, "finetune", sum / static_cast<double>(std::max<std::size_t>(count, 1))});
    emit(log, "epoch " + std::to_string(epoch) + " finetune loss=" + fmt(history.back().loss));
  }

  // Phase 2: denoiser only, on features cached from the current encoder.
  std::vector<std::vector<float>> frame_feats;  // per sample index, features of that frame
  {
    nn::NoGradGuard no_grad;
    for (const auto& s : samples) {
      const auto c = enc->forward(episode_inputs<float>(ds.episodes[s.ep], s.t, norm)).condition();
      frame_feats.emplace_back(c.data().begin(), c.data().end());
    }
  }
  std::vector<std::size_t> first_sample(ds.episodes.size() + 1, 0);
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) first_sample[e + 1] = first_sample[e] + ds.episodes[e].header.steps;
  const std::size_t C = den_cfg.cond_dim;
  std::vector<float> conds(samples.size() * C);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    float* dst = conds.data() + i * C;
    for (std::size_t j = 0; j < n_obs; ++j) {
      const auto& f = frame_feats[first_sample[s.ep] + history_frame(s.t, j, n_obs)];
      std::copy(f.begin(), f.end(), dst + j * f.size());
    }
  }
  frame_feats.clear();

  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t steps_per_epoch = (samples.size() + config.train_batch - 1) / config.train_batch;
  const double total_steps = static_cast<double>(steps_per_epoch * config.head_epochs);
  std::size_t step_count = 0;
  for (std::size_t he = 0; he < config.head_epochs; ++he) {
    ++epoch;
    std::mt19937_64 rng(derive_seed(config.seed, seed_offset::kBatchOrder) + epoch);
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum = 0;
    for (std::size_t b0 = 0; b0 < idx.size(); b0 += config.train_batch) {
      const std::size_t b1 = std::min(idx.size(), b0 + config.train_batch);
      const std::size_t B = b1 - b0;
      std::vector<float> a0(B * A), cond(B * C);
      for (std::size_t i = 0; i < B; ++i) {
        const std::size_t s = idx[b0 + i];
        std::copy(samples[s].a0.begin(), samples[s].a0.end(), a0.begin() + static_cast<std::ptrdiff_t>(i * A));
        std::copy(conds.begin() + static_cast<std::ptrdiff_t>(s * C), conds.begin() + static_cast<std::ptrdiff_t>((s + 1) * C),
                  cond.begin() + static_cast<std::ptrdiff_t>(i * C));
      }
      // Cosine decay over the head phase.
      den_opt.set_lr(config.train_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step_count) / total_steps)));
      den_opt.zero_grad();
      const auto loss = diffusion_loss(*den, Tensor<float>(B, A, std::move(a0)), Tensor<float>(B, C, std::move(cond)),
                                       schedule, noise_rng);
      sum += loss.item() * static_cast<double>(B);
      nn::backward(loss);
      den_opt.step();
      ++step_count;
    }
    history.push_back({epoch, "head", sum / static_cast<double>(samples.size())});
    if (he == 0 || (he + 1) % 25 == 0 || he + 1 == config.head_epochs) {
      emit(log, "epoch " + std::to_string(epoch) + " head loss=" + fmt(history.back().loss));
    }
  }

  nn::Checkpoint ckpt;
  json hist = json::array();
  for (const auto& h : history) hist.push_back({{"epoch", h.epoch}, {"phase", h.phase}, {"loss", h.loss}});
  json manifest = {{"kind", "policy"},
                   {"config", json::parse(effective.to_json())},
                   {"encoder", enc_cfg.to_json()},
                   {"denoiser", den_cfg.to_json()},
                   {"normalizer", json::parse(norm.to_json())},
                   {"schedule", {{"kind", to_string(schedule.kind)}, {"K", schedule.K}}},
                   {"policy",
                    {{"horizon", H},
                     {"n_obs_steps", n_obs},
                     {"n_action_steps", config.policy.n_action_steps},
                     {"ddim_steps", config.policy.ddim_steps}}},
                   {"pretrained_encoder", options.encoder_ckpt.has_value()},
                   {"freeze_encoder", options.freeze_encoder},
                   {"history", hist}};
  ckpt.manifest = manifest.dump();
  nn::store_parameters(ckpt, enc->params(), "enc/");
  nn::store_parameters(ckpt, den->params(), "den/");
  nn::save_checkpoint(ckpt, out_ckpt);
  write_train_csv(metrics_path(out_ckpt), history);
  return {history, out_ckpt};
}

LoadedPolicy load_policy(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  const json m = parse_manifest(ckpt, "policy");
  LoadedPolicy out;
  try {
    out.config = RunConfig::from_json(m.at("config").dump());
    const auto enc_cfg = EncoderConfig::from_json(m.at("encoder"));
    const auto den_cfg = DenoiserConfig::from_json(m.at("denoiser"));
    out.encoder = std::make_shared<CorrEncoder<float>>(enc_cfg, 0);
    out.denoiser = std::make_shared<Denoiser<float>>(den_cfg, 0);
    out.normalizer = Normalizer::from_json(m.at("normalizer").dump());
    out.schedule = make_schedule(m.at("schedule").at("K").get<std::size_t>(),
                                 parse_schedule_kind(m.at("schedule").at("kind").get<std::string>()));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("policy manifest: ") + e.what());
  }
  nn::load_parameters(ckpt, out.encoder->params(), "enc/");
  nn::load_parameters(ckpt, out.denoiser->params(), "den/");
  return out;
}

// --- evaluation ----------------------------------------------------------------

EvalResult evaluate(Planner& planner, const PolicyConfig& config, std::size_t episodes, std::uint64_t seed,
                    std::size_t max_steps, const std::string& report, const LogFn& log) {
  EvalResult out;
  std::size_t total_steps = 0, successes = 0;
  double total_wall = 0;
  for (std::size_t i = 0; i < episodes; ++i) {
    if (auto* dp = dynamic_cast<DiffusionPlanner*>(&planner)) dp->reset_cache();
    const std::uint64_t env_seed = eval_env_seed(seed, i);
    const auto rec = rollout_policy(planner, config, env_seed, derive_seed(seed, seed_offset::kSampler) + i, max_steps);
    EvalEpisode ep;
    ep.episode = i;
    ep.env_seed = env_seed;
    ep.success = rec.success;
    ep.steps = rec.steps;
    const auto& last = rec.trace.empty() ? toy::reset(env_seed) : rec.trace.back().state;
    ep.final_distance = std::hypot(last.obj_x - last.goal_x, last.obj_y - last.goal_y);
    ep.wall_seconds = rec.wall_seconds;
    out.episodes.push_back(ep);
    total_steps += rec.steps;
    total_wall += rec.wall_seconds;
    successes += rec.success ? 1 : 0;
    emit(log, "episode " + std::to_string(i) + " success=" + std::to_string(rec.success) + " steps=" +
                  std::to_string(rec.steps) + " steps_per_second=" + fmt(rec.steps_per_second()));
  }
  out.success_rate = episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0;
  out.steps_per_second = total_wall > 0 ? static_cast<double>(total_steps) / total_wall : 0.0;
  out.summary = "episodes=" + std::to_string(episodes) + " successes=" + std::to_string(successes) +
                " success_rate=" + fmt(out.success_rate) + " steps_per_second=" + fmt(out.steps_per_second);
  if (!report.empty()) {
    std::string csv = "episode,env_seed,success,steps,final_distance\n";
    std::string timing = "episode,steps,wall_seconds,steps_per_second\n";
    for (const auto& e : out.episodes) {
      csv += std::to_string(e.episode) + "," + std::to_string(e.env_seed) + "," + (e.success ? "1" : "0") + "," +
             std::to_string(e.steps) + "," + fmt(e.final_distance) + "\n";
      timing += std::to_string(e.episode) + "," + std::to_string(e.steps) + "," + fmt(e.wall_seconds) + "," +
                fmt(e.wall_seconds > 0 ? static_cast<double>(e.steps) / e.wall_seconds : 0.0) + "\n";
    }
    csv += "# success_rate=" + fmt(out.success_rate) + "\n";
    write_text(report, csv);
    write_text(report + ".timing.csv", timing);
  }
  return out;
}

EvalResult evaluate(const std::string& policy_ckpt, std::size_t episodes, std::uint64_t seed,
                    const std::string& report, const LogFn& log) {
  LoadedPolicy p = load_policy(policy_ckpt);
  DiffusionPlanner planner(p.encoder, p.denoiser, p.schedule, p.normalizer, p.config.policy);
  return evaluate(planner, p.config.policy, episodes, seed, p.config.max_steps, report, log);
}

// --- inspection and benchmarks ------------------------------------------------

InspectResult inspect(const std::string& episode_file, std::size_t step, const std::string& out_prefix,
                      const std::optional<std::string>& encoder_ckpt, const RunConfig& config) {
  const EpisodePack ep = read_episode(episode_file);
  if (step >= ep.header.steps) {
    throw ShapeError("inspect: step " + std::to_string(step) + " outside [0, " + std::to_string(ep.header.steps) + ")");
  }
  const PointSet obj = episode_cloud(ep.object_pc_at(step));
  const PointSet hand = episode_cloud(ep.hand_pc_at(step));
  const auto contact = toy::contact_targets(obj, hand, config.encoder.gamma, config.encoder.theta);
  InspectResult out;
  std::optional<std::vector<double>> predicted;
  if (encoder_ckpt) {
    const auto loaded = load_encoder(*encoder_ckpt);
    nn::NoGradGuard no_grad;
    const auto f = loaded.encoder->forward(episode_inputs<float>(ep, step, loaded.normalizer));
    const auto p = loaded.encoder->predict_contact(f);
    predicted.emplace(p.data().begin(), p.data().end());
    out.pearson = pearson(*predicted, contact);
  }
  auto inside = [&](const Vec3& p) {
    return (p.array() >= config.crop.lo.array()).all() && (p.array() <= config.crop.hi.array()).all();
  };
  std::string obj_csv = predicted ? "x,y,z,contact,predicted\n" : "x,y,z,contact\n";
  for (std::size_t i = 0; i < obj.size(); ++i) {
    if (!inside(obj[i])) continue;
    obj_csv += fmt(obj[i].x()) + "," + fmt(obj[i].y()) + "," + fmt(obj[i].z()) + "," + fmt(contact[i]);
    if (predicted) obj_csv += "," + fmt((*predicted)[i]);
    obj_csv += "\n";
    ++out.rows;
  }
  std::string hand_csv = "x,y,z\n";
  for (const auto& p : hand) {
    if (inside(p)) hand_csv += fmt(p.x()) + "," + fmt(p.y()) + "," + fmt(p.z()) + "\n";
  }
  out.object_csv = out_prefix + "_object.csv";
  out.hand_csv = out_prefix + "_hand.csv";
  write_text(out.object_csv, obj_csv);
  write_text(out.hand_csv, hand_csv);
  return out;
}

BenchResult bench_fk(std::size_t links, std::size_t points, double seconds) {
  if (links < 1 || points < 1) throw ConfigError("bench-fk: links and points must be positive");
  const KinematicChain chain = make_benchmark_chain(links);
  std::vector<PointSet> samples;
  for (std::size_t i = 0; i < chain.num_links(); ++i) {
    samples.push_back(sample_link_surface(chain.links()[i], points, derive_seed(0xBE7C, i)));
  }
  std::mt19937_64 rng(derive_seed(0xBE7C, seed_offset::kSampler));
  std::vector<JointVector> configs;
  for (int c = 0; c < 16; ++c) {
    std::vector<double> q;
    for (const auto& j : chain.joints()) q.push_back(std::uniform_real_distribution<double>(j.lower, j.upper)(rng));
    configs.emplace_back(chain, std::move(q));
  }
  BenchResult r;
  r.links = links;
  r.points = points;
  const auto start = std::chrono::steady_clock::now();
  double elapsed = 0;
  std::size_t sink = 0;
  do {
    const auto pc = fk_pointcloud(chain, configs[r.calls % configs.size()], samples, std::nullopt, kDefaultCloudSize);
    sink += pc.size();
    ++r.calls;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } while (elapsed < seconds);
  if (sink == 0) throw NumericError("bench-fk: empty clouds");
  r.seconds = elapsed;
  r.calls_per_second = static_cast<double>(r.calls) / elapsed;
  return r;
}

}  // namespace cordvip
