#include "cordvip/obsbuild.hpp"

#include <algorithm>
#include <limits>

#include <json.hpp>

#include "cordvip/episode.hpp"

namespace cordvip {

Observation build_observation(const PointSet& canonical_obj_pc, const Pose& obj_pose,
                              const HandModel& model, std::span<const double> q_arm,
                              std::span<const double> q_hand, std::size_t n_points) {
  if (q_arm.size() != model.arm_joints || q_hand.size() != model.hand_joints()) {
    throw ShapeError("build_observation: expected " + std::to_string(model.arm_joints) + " arm and " +
                     std::to_string(model.hand_joints()) + " hand joints");
  }
  std::vector<double> q(q_arm.begin(), q_arm.end());
  q.insert(q.end(), q_hand.begin(), q_hand.end());
  const JointVector joints(model.chain, q);

  Observation obs;
  obs.obj_pc = pose_apply(obj_pose, canonical_obj_pc);
  obs.hand_pc = fk_pointcloud(model.chain, joints, model.link_samples, model.hand_links, n_points);
  obs.arm_state.assign(joints.values().begin(), joints.values().begin() + model.arm_joints);
  obs.hand_state.assign(joints.values().begin() + model.arm_joints, joints.values().end());
  return obs;
}

// ---------------------------------------------------------------------------

Normalizer::Normalizer(std::map<std::string, StreamRange> ranges) : ranges_(std::move(ranges)) {
  for (auto& [name, r] : ranges_) {
    if (r.min.size() != r.max.size()) throw ShapeError("normalizer: min/max width differ for " + name);
    r.degenerate.resize(r.min.size());
    for (std::size_t i = 0; i < r.min.size(); ++i) {
      if (!(r.min[i] <= r.max[i])) throw ConfigError("normalizer: min above max for " + name);
      r.degenerate[i] = r.min[i] == r.max[i];
    }
  }
}

const StreamRange& Normalizer::range(const std::string& stream) const {
  const auto it = ranges_.find(stream);
  if (it == ranges_.end()) throw ConfigError("normalizer: unknown stream '" + stream + "'");
  return it->second;
}

std::vector<double> Normalizer::normalize(std::span<const double> x, const std::string& stream) const {
  const auto& r = range(stream);
  const std::size_t d = r.dims();
  if (d == 0 || x.size() % d != 0) {
    throw ShapeError("normalize: " + std::to_string(x.size()) + " values do not tile width " +
                     std::to_string(d) + " of stream " + stream);
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t a = i % d;
    out[i] = r.degenerate[a] ? 0.0 : 2.0 * (x[i] - r.min[a]) / (r.max[a] - r.min[a]) - 1.0;
  }
  return out;
}

std::vector<double> Normalizer::denormalize(std::span<const double> x, const std::string& stream) const {
  const auto& r = range(stream);
  const std::size_t d = r.dims();
  if (d == 0 || x.size() % d != 0) {
    throw ShapeError("denormalize: " + std::to_string(x.size()) + " values do not tile width " +
                     std::to_string(d) + " of stream " + stream);
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t a = i % d;
    out[i] = r.degenerate[a] ? r.min[a] : (x[i] + 1.0) * 0.5 * (r.max[a] - r.min[a]) + r.min[a];
  }
  return out;
}

std::string Normalizer::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, r] : ranges_) doc[name] = {{"min", r.min}, {"max", r.max}};
  return doc.dump();
}

Normalizer Normalizer::from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::map<std::string, StreamRange> ranges;
    for (const auto& [name, r] : doc.items()) {
      StreamRange range;
      range.min = r.at("min").get<std::vector<double>>();
      range.max = r.at("max").get<std::vector<double>>();
      ranges.emplace(name, std::move(range));
    }
    return Normalizer(std::move(ranges));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("normalizer: ") + e.what());
  }
}

namespace {

struct RangeAccumulator {
  std::vector<double> lo, hi;
  explicit RangeAccumulator(std::size_t d)
      : lo(d, std::numeric_limits<double>::infinity()), hi(d, -std::numeric_limits<double>::infinity()) {}
  void add(std::span<const float> x) {
    const std::size_t d = lo.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      lo[i % d] = std::min(lo[i % d], v);
      hi[i % d] = std::max(hi[i % d], v);
    }
  }
  StreamRange finish() const { return StreamRange{lo, hi, {}}; }
};

}  // namespace

Normalizer fit_normalizer(std::span<const EpisodePack> episodes) {
  if (episodes.empty()) throw ShapeError("fit_normalizer: no training episodes");
  const auto& h0 = episodes.front().header;
  RangeAccumulator obj(3), hand(3), arm_s(h0.arm_dim), hand_s(h0.hand_dim), arm_a(h0.arm_dim),
      hand_a(h0.hand_dim);
  std::size_t steps = 0;
  for (const auto& ep : episodes) {
    if (ep.header.arm_dim != h0.arm_dim || ep.header.hand_dim != h0.hand_dim) {
      throw ShapeError("fit_normalizer: episodes disagree on state dimensions");
    }
    obj.add(ep.object_pc);
    hand.add(ep.hand_pc);
    arm_s.add(ep.arm_state);
    hand_s.add(ep.hand_state);
    arm_a.add(ep.arm_action);
    hand_a.add(ep.hand_action);
    steps += ep.header.steps;
  }
  if (steps == 0) throw ShapeError("fit_normalizer: episodes contain no steps");
  return Normalizer({{stream::kObjPc, obj.finish()},
                     {stream::kHandPc, hand.finish()},
                     {stream::kArmState, arm_s.finish()},
                     {stream::kHandState, hand_s.finish()},
                     {stream::kArmAction, arm_a.finish()},
                     {stream::kHandAction, hand_a.finish()}});
}

}  // namespace cordvip
