#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cordvip/common.hpp"

namespace cordvip {

inline constexpr std::uint16_t kEpisodeFormatVersion = 1;

struct EpisodeHeader {
  std::uint16_t version = kEpisodeFormatVersion;
  std::string task;
  double dt = 0.2;
  std::size_t n_points = 0;
  std::size_t arm_dim = 0;
  std::size_t hand_dim = 0;
  std::size_t steps = 0;
};

/// One demonstration. Streams are row-major f32; object_pose rows are (w,x,y,z, x,y,z).
struct EpisodePack {
  EpisodeHeader header;
  std::vector<float> object_pc;    // [T, N_P, 3]
  std::vector<float> hand_pc;      // [T, N_P, 3]
  std::vector<float> arm_state;    // [T, Da]
  std::vector<float> hand_state;   // [T, Dh]
  std::vector<float> arm_action;   // [T, Da]
  std::vector<float> hand_action;  // [T, Dh]
  std::vector<float> object_pose;  // [T, 7]

  /// Throws ShapeError if stream sizes disagree with the header or a quaternion is not unit.
  void validate() const;

  std::span<const float> object_pc_at(std::size_t t) const;
  std::span<const float> hand_pc_at(std::size_t t) const;
  std::span<const float> arm_state_at(std::size_t t) const;
  std::span<const float> hand_state_at(std::size_t t) const;
  std::span<const float> arm_action_at(std::size_t t) const;
  std::span<const float> hand_action_at(std::size_t t) const;
};

/// Serialized bytes: "CVIP", u16 version, u32 header length, JSON header, then each stream as
/// little-endian f32 followed by its CRC32.
std::vector<std::uint8_t> encode_episode(const EpisodePack& pack);
EpisodePack decode_episode(std::span<const std::uint8_t> bytes);

void write_episode(const EpisodePack& pack, const std::string& path);
EpisodePack read_episode(const std::string& path);

// Little-endian helpers shared with the checkpoint format.
namespace le {
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint16_t get_u16(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);
}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace cordvip
