#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cordvip/nn/layers.hpp"

namespace cordvip::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// "CVCK", u16 version, u32-prefixed JSON manifest, u32 tensor count, then per tensor:
/// u32-prefixed name, u32 ndim, u64 dims, f32 payload, CRC32 of the payload.
struct Checkpoint {
  std::string manifest = "{}";
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  void put(std::string name, std::vector<std::size_t> shape, std::vector<float> data);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Stores every parameter as "<prefix><name>".
template <typename T>
void store_parameters(Checkpoint& ckpt, const ParameterSet<T>& params, const std::string& prefix = "");

/// Loads "<prefix><name>" into each parameter; missing or misshapen entries raise FormatError.
template <typename T>
void load_parameters(const Checkpoint& ckpt, ParameterSet<T>& params, const std::string& prefix = "");

}  // namespace cordvip::nn
