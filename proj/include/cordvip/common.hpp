#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cordvip {

using Vec3 = Eigen::Vector3d;

/// Ordered list of 3D points in meters.
using PointSet = std::vector<Vec3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes or lengths between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required (inputs, gradients, losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kChecksumMismatch,
  kShapeMismatch,
  kMalformedHeader,
};

const char* to_string(FormatErrorKind kind);

/// Structural problem in an on-disk file (episode pack or checkpoint).
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

bool all_finite(const PointSet& pts);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Derives an independent seed for a named component from a run seed.
/// Components are split by fixed offsets fed through SplitMix64.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t component);

namespace seed_offset {
inline constexpr std::uint64_t kLinkSampling = 1;
inline constexpr std::uint64_t kObjectCloud = 2;
inline constexpr std::uint64_t kEnvReset = 3;
inline constexpr std::uint64_t kEncoderInit = 4;
inline constexpr std::uint64_t kDenoiserInit = 5;
inline constexpr std::uint64_t kBatchOrder = 6;
inline constexpr std::uint64_t kDiffusionNoise = 7;
inline constexpr std::uint64_t kSampler = 8;
inline constexpr std::uint64_t kSplit = 9;
}  // namespace seed_offset

}  // namespace cordvip
