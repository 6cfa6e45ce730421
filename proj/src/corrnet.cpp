#include "cordvip/corrnet.hpp"

namespace cordvip {

using nn::Tensor;

void EncoderConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("encoder: d=" + std::to_string(d) + " must be a positive multiple of heads=" +
                      std::to_string(heads));
  }
  if (state_dim == 0 || state_heads == 0 || state_dim % state_heads != 0) {
    throw ConfigError("encoder: state_dim must be a positive multiple of state_heads");
  }
  if (d < 2) throw ConfigError("encoder: d must be at least 2");
  if (head_hidden == 0 || horizon == 0 || arm_dim == 0 || hand_dim == 0) {
    throw ConfigError("encoder: head_hidden, horizon, arm_dim and hand_dim must be positive");
  }
  if (!(lambda >= 0.0)) throw ConfigError("encoder: lambda must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("encoder: gamma must be >= 0");
  if (!(theta > 0.0)) throw ConfigError("encoder: theta must be > 0");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"d", d},           {"heads", heads},         {"state_dim", state_dim},
          {"state_heads", state_heads}, {"head_hidden", head_hidden}, {"horizon", horizon},
          {"arm_dim", arm_dim}, {"hand_dim", hand_dim},   {"lambda", lambda},
          {"gamma", gamma},   {"theta", theta}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.d = j.at("d").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.state_dim = j.at("state_dim").get<std::size_t>();
    c.state_heads = j.at("state_heads").get<std::size_t>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.arm_dim = j.at("arm_dim").get<std::size_t>();
    c.hand_dim = j.at("hand_dim").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.theta = j.at("theta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

template <typename T>
Tensor<T> to_tensor(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  std::vector<T> data(v.begin(), v.end());
  return Tensor<T>(rows, cols, std::move(data));
}

std::vector<double> flatten(const PointSet& pts) {
  std::vector<double> out;
  out.reserve(pts.size() * 3);
  for (const auto& p : pts) out.insert(out.end(), {p.x(), p.y(), p.z()});
  return out;
}

}  // namespace

template <typename T>
EncoderInputs<T> make_encoder_inputs(std::span<const double> obj_pc, std::span<const double> hand_pc,
                                     std::span<const double> arm_state, std::span<const double> hand_state,
                                     const Normalizer& norm) {
  if (obj_pc.size() % 3 != 0 || hand_pc.size() % 3 != 0) {
    throw ShapeError("encoder inputs: cloud buffers must hold whole xyz rows");
  }
  EncoderInputs<T> in;
  in.obj_pc = to_tensor<T>(norm.normalize(obj_pc, stream::kObjPc), obj_pc.size() / 3, 3);
  in.hand_pc = to_tensor<T>(norm.normalize(hand_pc, stream::kHandPc), hand_pc.size() / 3, 3);
  in.arm_state = to_tensor<T>(norm.normalize(arm_state, stream::kArmState), 1, arm_state.size());
  in.hand_state = to_tensor<T>(norm.normalize(hand_state, stream::kHandState), 1, hand_state.size());
  return in;
}

template <typename T>
EncoderInputs<T> make_encoder_inputs(const Observation& obs, const Normalizer& norm) {
  return make_encoder_inputs<T>(flatten(obs.obj_pc), flatten(obs.hand_pc), obs.arm_state, obs.hand_state, norm);
}

template <typename T>
Tensor<T> CorrFeatures<T>::condition() const {
  return nn::concat<T>({pooled_h, pooled_o, psi_a, psi_h}, 1);
}

template <typename T>
PointEncoder<T> PointEncoder<T>::create(nn::ParameterSet<T>& params, const std::string& name,
                                        std::size_t d, std::mt19937_64& rng) {
  PointEncoder e;
  std::size_t in = 3;
  for (int i = 0; i < 3; ++i) {
    const std::string tag = name + ".fc" + std::to_string(i);
    e.fc[i] = nn::Linear<T>::create(params, tag, in, d, rng);
    e.ln[i] = nn::LayerNorm<T>::create(params, name + ".ln" + std::to_string(i), d);
    in = d;
  }
  return e;
}

template <typename T>
Tensor<T> PointEncoder<T>::operator()(const Tensor<T>& cloud) const {
  if (cloud.cols() != 3 || cloud.rows() == 0) {
    throw ShapeError("point encoder: expected [N, 3] coordinates, got " + cloud.shape_str());
  }
  Tensor<T> x = cloud;
  for (int i = 0; i < 3; ++i) x = nn::relu(ln[i](fc[i](x)));
  return x;
}

template <typename T>
Mlp3<T> Mlp3<T>::create(nn::ParameterSet<T>& params, const std::string& name, std::size_t in,
                        std::size_t hidden1, std::size_t hidden2, std::size_t out,
                        std::mt19937_64& rng) {
  Mlp3 m;
  m.fc[0] = nn::Linear<T>::create(params, name + ".fc0", in, hidden1, rng);
  m.fc[1] = nn::Linear<T>::create(params, name + ".fc1", hidden1, hidden2, rng);
  m.fc[2] = nn::Linear<T>::create(params, name + ".fc2", hidden2, out, rng);
  return m;
}

template <typename T>
Tensor<T> Mlp3<T>::operator()(const Tensor<T>& x) const {
  return fc[2](nn::relu(fc[1](nn::relu(fc[0](x)))));
}

template <typename T>
CorrEncoder<T>::CorrEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  hand_enc_ = PointEncoder<T>::create(params_, "hand_enc", c.d, rng);
  obj_enc_ = PointEncoder<T>::create(params_, "obj_enc", c.d, rng);
  attn_h_ = nn::CrossAttention<T>::create(params_, "attn_h", c.d, c.heads, rng);
  attn_o_ = nn::CrossAttention<T>::create(params_, "attn_o", c.d, c.heads, rng);
  arm_proj_ = nn::Linear<T>::create(params_, "arm_proj", c.arm_dim, c.state_dim, rng);
  hand_proj_ = nn::Linear<T>::create(params_, "hand_proj", c.hand_dim, c.state_dim, rng);
  state_attn_a_ = nn::CrossAttention<T>::create(params_, "state_attn_a", c.state_dim, c.state_heads, rng);
  state_attn_h_ = nn::CrossAttention<T>::create(params_, "state_attn_h", c.state_dim, c.state_heads, rng);
  contact_head_ = Mlp3<T>::create(params_, "contact_head", 2 * c.d, c.d, c.d / 2, 1, rng);
  const std::size_t head_in = 2 * c.d + c.state_dim;
  arm_head_ = Mlp3<T>::create(params_, "arm_head", head_in, c.head_hidden, c.head_hidden,
                              c.horizon * c.arm_dim, rng);
  hand_head_ = Mlp3<T>::create(params_, "hand_head", head_in, c.head_hidden, c.head_hidden,
                               c.horizon * c.hand_dim, rng);
}

template <typename T>
Tensor<T> CorrEncoder<T>::encode_hand_tokens(const Tensor<T>& cloud) const {
  return hand_enc_(cloud);
}

template <typename T>
Tensor<T> CorrEncoder<T>::encode_object_tokens(const Tensor<T>& cloud) const {
  return obj_enc_(cloud);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> CorrEncoder<T>::cross_fuse(const Tensor<T>& hand_tokens,
                                                           const Tensor<T>& obj_tokens) const {
  if (hand_tokens.cols() != obj_tokens.cols()) {
    throw ShapeError("cross_fuse: token widths differ (" + hand_tokens.shape_str() + " vs " +
                     obj_tokens.shape_str() + ")");
  }
  Tensor<T> phi_h = nn::add(attn_h_(hand_tokens, obj_tokens), hand_tokens);
  Tensor<T> phi_o = nn::add(attn_o_(obj_tokens, hand_tokens), obj_tokens);
  return {phi_h, phi_o};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> CorrEncoder<T>::project_states(const Tensor<T>& arm_state,
                                                               const Tensor<T>& hand_state) const {
  if (arm_state.rows() != 1 || arm_state.cols() != config_.arm_dim) {
    throw ShapeError("project_states: arm state must be [1, " + std::to_string(config_.arm_dim) +
                     "], got " + arm_state.shape_str());
  }
  if (hand_state.rows() != 1 || hand_state.cols() != config_.hand_dim) {
    throw ShapeError("project_states: hand state must be [1, " + std::to_string(config_.hand_dim) +
                     "], got " + hand_state.shape_str());
  }
  const Tensor<T> a = arm_proj_(arm_state);
  const Tensor<T> h = hand_proj_(hand_state);
  return {nn::add(state_attn_a_(a, h), a), nn::add(state_attn_h_(h, a), h)};
}

template <typename T>
CorrFeatures<T> CorrEncoder<T>::forward(const Tensor<T>& hand_pc, const Tensor<T>& obj_pc,
                                        const Tensor<T>& arm_state, const Tensor<T>& hand_state) const {
  if (hand_pc.rows() != obj_pc.rows()) {
    throw ShapeError("encoder: hand and object clouds differ in size (" + hand_pc.shape_str() +
                     " vs " + obj_pc.shape_str() + ")");
  }
  CorrFeatures<T> f;
  auto [phi_h, phi_o] = cross_fuse(encode_hand_tokens(hand_pc), encode_object_tokens(obj_pc));
  f.phi_h = phi_h;
  f.phi_o = phi_o;
  f.pooled_h = nn::max_pool(phi_h, 0);
  f.pooled_o = nn::max_pool(phi_o, 0);
  auto [psi_a, psi_h] = project_states(arm_state, hand_state);
  f.psi_a = psi_a;
  f.psi_h = psi_h;
  return f;
}

template <typename T>
Tensor<T> CorrEncoder<T>::predict_contact(const CorrFeatures<T>& f) const {
  const Tensor<T> in = nn::concat<T>({f.phi_o, nn::repeat_rows(f.pooled_h, f.phi_o.rows())}, 1);
  return nn::sigmoid(contact_head_(in));
}

template <typename T>
Tensor<T> CorrEncoder<T>::predict_arm_seq(const CorrFeatures<T>& f) const {
  const Tensor<T> in = nn::concat<T>({f.pooled_h, f.pooled_o, f.psi_h}, 1);
  return nn::reshape(arm_head_(in), config_.horizon, config_.arm_dim);
}

template <typename T>
Tensor<T> CorrEncoder<T>::predict_hand_seq(const CorrFeatures<T>& f) const {
  const Tensor<T> in = nn::concat<T>({f.pooled_h, f.pooled_o, f.psi_a}, 1);
  return nn::reshape(hand_head_(in), config_.horizon, config_.hand_dim);
}

template <typename T>
PretrainTerms<T> CorrEncoder<T>::pretrain_loss(const PretrainSample<T>& s) const {
  if (!s.contact.defined() || !s.arm_seq.defined() || !s.hand_seq.defined()) {
    throw ConfigError("pretrain_loss: sample lacks contact or action targets");
  }
  const CorrFeatures<T> f = forward(s.hand_pc, s.obj_pc, s.arm_state, s.hand_state);
  PretrainTerms<T> out;
  out.contact = nn::mse(predict_contact(f), s.contact);
  out.coordination = nn::add(nn::mse(predict_arm_seq(f), s.arm_seq), nn::mse(predict_hand_seq(f), s.hand_seq));
  out.total = nn::add(out.contact, nn::scale(out.coordination, static_cast<T>(config_.lambda)));
  return out;
}

template EncoderInputs<float> make_encoder_inputs<float>(std::span<const double>, std::span<const double>,
                                                        std::span<const double>, std::span<const double>,
                                                        const Normalizer&);
template EncoderInputs<double> make_encoder_inputs<double>(std::span<const double>, std::span<const double>,
                                                          std::span<const double>, std::span<const double>,
                                                          const Normalizer&);
template EncoderInputs<float> make_encoder_inputs<float>(const Observation&, const Normalizer&);
template EncoderInputs<double> make_encoder_inputs<double>(const Observation&, const Normalizer&);
template struct CorrFeatures<float>;
template struct CorrFeatures<double>;
template struct PointEncoder<float>;
template struct PointEncoder<double>;
template struct Mlp3<float>;
template struct Mlp3<double>;
template class CorrEncoder<float>;
template class CorrEncoder<double>;

}  // namespace cordvip
