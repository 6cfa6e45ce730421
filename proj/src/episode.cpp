#include "cordvip/episode.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace cordvip {

namespace le {
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }
}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

namespace {

constexpr char kMagic[4] = {'C', 'V', 'I', 'P'};

struct StreamSpec {
  const char* name;
  std::vector<float> EpisodePack::*field;
  std::size_t per_step;
  std::vector<std::size_t> shape;
};

std::vector<StreamSpec> stream_specs(const EpisodeHeader& h) {
  const std::size_t T = h.steps;
  return {
      {"object_pc", &EpisodePack::object_pc, h.n_points * 3, {T, h.n_points, 3}},
      {"hand_pc", &EpisodePack::hand_pc, h.n_points * 3, {T, h.n_points, 3}},
      {"arm_state", &EpisodePack::arm_state, h.arm_dim, {T, h.arm_dim}},
      {"hand_state", &EpisodePack::hand_state, h.hand_dim, {T, h.hand_dim}},
      {"arm_action", &EpisodePack::arm_action, h.arm_dim, {T, h.arm_dim}},
      {"hand_action", &EpisodePack::hand_action, h.hand_dim, {T, h.hand_dim}},
      {"object_pose", &EpisodePack::object_pose, 7, {T, 7}},
  };
}

nlohmann::json header_json(const EpisodeHeader& h) {
  nlohmann::json streams = nlohmann::json::array();
  for (const auto& s : stream_specs(h)) streams.push_back({{"name", s.name}, {"shape", s.shape}});
  return {{"version", h.version}, {"task", h.task},     {"dt", h.dt},
          {"n_points", h.n_points}, {"arm_dim", h.arm_dim}, {"hand_dim", h.hand_dim},
          {"steps", h.steps},     {"streams", streams}};
}

}  // namespace

void EpisodePack::validate() const {
  for (const auto& s : stream_specs(header)) {
    const auto& data = this->*(s.field);
    if (data.size() != s.per_step * header.steps) {
      throw ShapeError(std::string("episode stream ") + s.name + " has " +
                       std::to_string(data.size()) + " values, header implies " +
                       std::to_string(s.per_step * header.steps));
    }
  }
  for (std::size_t t = 0; t < header.steps; ++t) {
    double sq = 0.0;
    for (int i = 0; i < 4; ++i) sq += double(object_pose[t * 7 + i]) * object_pose[t * 7 + i];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ShapeError("episode object_pose row " + std::to_string(t) + " is not a unit quaternion");
    }
  }
}

std::span<const float> EpisodePack::object_pc_at(std::size_t t) const {
  const std::size_t w = header.n_points * 3;
  return {object_pc.data() + t * w, w};
}
std::span<const float> EpisodePack::hand_pc_at(std::size_t t) const {
  const std::size_t w = header.n_points * 3;
  return {hand_pc.data() + t * w, w};
}
std::span<const float> EpisodePack::arm_state_at(std::size_t t) const {
  return {arm_state.data() + t * header.arm_dim, header.arm_dim};
}
std::span<const float> EpisodePack::hand_state_at(std::size_t t) const {
  return {hand_state.data() + t * header.hand_dim, header.hand_dim};
}
std::span<const float> EpisodePack::arm_action_at(std::size_t t) const {
  return {arm_action.data() + t * header.arm_dim, header.arm_dim};
}
std::span<const float> EpisodePack::hand_action_at(std::size_t t) const {
  return {hand_action.data() + t * header.hand_dim, header.hand_dim};
}

std::vector<std::uint8_t> encode_episode(const EpisodePack& pack) {
  pack.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  le::put_u16(out, kEpisodeFormatVersion);
  const std::string header = header_json(pack.header).dump();
  le::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& s : stream_specs(pack.header)) {
    const auto& data = pack.*(s.field);
    const std::size_t begin = out.size();
    out.reserve(out.size() + data.size() * 4 + 4);
    for (float v : data) le::put_f32(out, v);
    const auto crc = crc32(std::span<const std::uint8_t>(out.data() + begin, data.size() * 4));
    le::put_u32(out, crc);
  }
  return out;
}

EpisodePack decode_episode(std::span<const std::uint8_t> bytes) {
  using K = FormatErrorKind;
  if (bytes.size() < 4) throw FormatError(K::kTruncated, "file shorter than magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(K::kBadMagic, "not an episode pack");
  if (bytes.size() < 10) throw FormatError(K::kTruncated, "file shorter than preamble");
  const auto version = le::get_u16(bytes.data() + 4);
  if (version != kEpisodeFormatVersion) {
    throw FormatError(K::kVersionMismatch, "file version " + std::to_string(version) +
                                               ", reader supports " +
                                               std::to_string(kEpisodeFormatVersion));
  }
  const std::size_t header_len = le::get_u32(bytes.data() + 6);
  std::size_t offset = 10;
  if (bytes.size() - offset < header_len) throw FormatError(K::kTruncated, "header cut short");

  EpisodePack pack;
  try {
    const auto doc = nlohmann::json::parse(bytes.begin() + offset, bytes.begin() + offset + header_len);
    auto& h = pack.header;
    h.version = doc.at("version").get<std::uint16_t>();
    h.task = doc.at("task").get<std::string>();
    h.dt = doc.at("dt").get<double>();
    h.n_points = doc.at("n_points").get<std::size_t>();
    h.arm_dim = doc.at("arm_dim").get<std::size_t>();
    h.hand_dim = doc.at("hand_dim").get<std::size_t>();
    h.steps = doc.at("steps").get<std::size_t>();
    if (h.version != version) {
      throw FormatError(K::kVersionMismatch, "header version disagrees with preamble");
    }
    const auto declared = doc.at("streams");
    const auto expected = stream_specs(h);
    if (declared.size() != expected.size()) {
      throw FormatError(K::kShapeMismatch, "unexpected stream count");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (declared[i].at("name").get<std::string>() != expected[i].name ||
          declared[i].at("shape").get<std::vector<std::size_t>>() != expected[i].shape) {
        throw FormatError(K::kShapeMismatch,
                          std::string("stream ") + expected[i].name + " shape disagrees with header");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(K::kMalformedHeader, e.what());
  }
  offset += header_len;

  const auto specs = stream_specs(pack.header);
  std::size_t per_step_bytes = 0;
  for (const auto& s : specs) per_step_bytes += 4 * s.per_step;
  const std::size_t crc_bytes = 4 * specs.size();
  const std::size_t expected_bytes = per_step_bytes * pack.header.steps + crc_bytes;
  const std::size_t actual = bytes.size() - offset;
  if (actual != expected_bytes) {
    // A payload that is a whole number of steps, just not the declared count, means the
    // header and streams disagree; anything else is a cut-off file.
    const bool whole_steps = actual >= crc_bytes && per_step_bytes > 0 &&
                             (actual - crc_bytes) % per_step_bytes == 0;
    if (whole_steps) {
      throw FormatError(K::kShapeMismatch,
                        "header declares T=" + std::to_string(pack.header.steps) +
                            " but streams hold T=" +
                            std::to_string((actual - crc_bytes) / per_step_bytes));
    }
    if (actual < expected_bytes) {
      throw FormatError(K::kTruncated, "expected " + std::to_string(expected_bytes) +
                                           " stream bytes, found " + std::to_string(actual));
    }
    throw FormatError(K::kShapeMismatch, "trailing bytes after last stream");
  }

  for (const auto& s : specs) {
    const std::size_t n = s.per_step * pack.header.steps;
    const std::uint8_t* p = bytes.data() + offset;
    const auto crc = crc32(std::span<const std::uint8_t>(p, n * 4));
    if (crc != le::get_u32(p + n * 4)) {
      throw FormatError(K::kChecksumMismatch, std::string("stream ") + s.name);
    }
    auto& data = pack.*(s.field);
    data.resize(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = le::get_f32(p + 4 * i);
    offset += n * 4 + 4;
  }
  return pack;
}

void write_episode(const EpisodePack& pack, const std::string& path) {
  write_file_bytes(path, encode_episode(pack));
}

EpisodePack read_episode(const std::string& path) { return decode_episode(read_file_bytes(path)); }

}  // namespace cordvip
