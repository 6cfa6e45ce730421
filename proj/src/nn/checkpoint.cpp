#include "cordvip/nn/checkpoint.hpp"

#include <cstring>

#include "cordvip/episode.hpp"

namespace cordvip::nn {

namespace {
constexpr char kMagic[4] = {'C', 'V', 'C', 'K'};
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::put(std::string name, std::vector<std::size_t> shape, std::vector<float> data) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) throw ShapeError("checkpoint: tensor '" + name + "' size disagrees with shape");
  for (auto& t : tensors) {
    if (t.name == name) {
      t.shape = std::move(shape);
      t.data = std::move(data);
      return;
    }
  }
  tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  le::put_u16(out, kCheckpointVersion);
  le::put_u32(out, static_cast<std::uint32_t>(ckpt.manifest.size()));
  out.insert(out.end(), ckpt.manifest.begin(), ckpt.manifest.end());
  le::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    le::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    le::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) le::put_u64(out, d);
    const std::size_t begin = out.size();
    for (float v : t.data) le::put_f32(out, v);
    le::put_u32(out, crc32(std::span<const std::uint8_t>(out.data() + begin, t.data.size() * 4)));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using K = FormatErrorKind;
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - off < n) throw FormatError(K::kTruncated, std::string("checkpoint ") + what);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(K::kBadMagic, "not a checkpoint");
  off = 4;
  need(2, "version");
  const auto version = le::get_u16(bytes.data() + off);
  off += 2;
  if (version != kCheckpointVersion) {
    throw FormatError(K::kVersionMismatch, "checkpoint version " + std::to_string(version));
  }
  need(4, "manifest length");
  const std::size_t mlen = le::get_u32(bytes.data() + off);
  off += 4;
  need(mlen, "manifest");
  Checkpoint ckpt;
  ckpt.manifest.assign(reinterpret_cast<const char*>(bytes.data() + off), mlen);
  off += mlen;
  need(4, "tensor count");
  const std::size_t count = le::get_u32(bytes.data() + off);
  off += 4;
  for (std::size_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    need(4, "name length");
    const std::size_t nlen = le::get_u32(bytes.data() + off);
    off += 4;
    need(nlen, "name");
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + off), nlen);
    off += nlen;
    need(4, "ndim");
    const std::size_t ndim = le::get_u32(bytes.data() + off);
    off += 4;
    need(8 * ndim, "shape");
    std::size_t n = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
      t.shape.push_back(le::get_u64(bytes.data() + off));
      n *= t.shape.back();
      off += 8;
    }
    if (n > bytes.size()) throw FormatError(K::kTruncated, "checkpoint tensor '" + t.name + "'");
    need(4 * n + 4, "payload");
    const std::uint8_t* p = bytes.data() + off;
    if (crc32(std::span<const std::uint8_t>(p, 4 * n)) != le::get_u32(p + 4 * n)) {
      throw FormatError(K::kChecksumMismatch, "checkpoint tensor '" + t.name + "'");
    }
    t.data.resize(n);
    for (std::size_t j = 0; j < n; ++j) t.data[j] = le::get_f32(p + 4 * j);
    off += 4 * n + 4;
    ckpt.tensors.push_back(std::move(t));
  }
  if (off != bytes.size()) throw FormatError(K::kShapeMismatch, "trailing bytes after last tensor");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

template <typename T>
void store_parameters(Checkpoint& ckpt, const ParameterSet<T>& params, const std::string& prefix) {
  for (const auto& [name, t] : params.entries()) {
    std::vector<float> data(t.data().begin(), t.data().end());
    ckpt.put(prefix + name, {t.rows(), t.cols()}, std::move(data));
  }
}

template <typename T>
void load_parameters(const Checkpoint& ckpt, ParameterSet<T>& params, const std::string& prefix) {
  for (const auto& [name, t] : params.entries()) {
    const auto* src = ckpt.find(prefix + name);
    if (!src) throw FormatError(FormatErrorKind::kShapeMismatch, "checkpoint lacks '" + prefix + name + "'");
    if (src->shape != std::vector<std::size_t>{t.rows(), t.cols()}) {
      throw FormatError(FormatErrorKind::kShapeMismatch, "checkpoint shape differs for '" + prefix + name + "'");
    }
    auto dst = Tensor<T>(t).mutable_data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(src->data[j]);
  }
}

template void store_parameters<float>(Checkpoint&, const ParameterSet<float>&, const std::string&);
template void store_parameters<double>(Checkpoint&, const ParameterSet<double>&, const std::string&);
template void load_parameters<float>(const Checkpoint&, ParameterSet<float>&, const std::string&);
template void load_parameters<double>(const Checkpoint&, ParameterSet<double>&, const std::string&);

}  // namespace cordvip::nn
