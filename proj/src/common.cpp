#include "cordvip/common.hpp"

#include <zlib.h>

#include <algorithm>

namespace cordvip {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic:
      return "bad magic";
    case FormatErrorKind::kVersionMismatch:
      return "version mismatch";
    case FormatErrorKind::kTruncated:
      return "truncated";
    case FormatErrorKind::kChecksumMismatch:
      return "checksum mismatch";
    case FormatErrorKind::kShapeMismatch:
      return "shape mismatch";
    case FormatErrorKind::kMalformedHeader:
      return "malformed header";
  }
  return "unknown";
}

bool all_finite(const PointSet& pts) {
  for (const auto& p : pts) {
    if (!p.allFinite()) return false;
  }
  return true;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks so large streams are fine.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t component) {
  std::uint64_t z = run_seed + 0x9E3779B97F4A7C15ull * (component + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace cordvip
