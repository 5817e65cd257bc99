#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bsattn/mem.hpp"

namespace bsattn {

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Container-level defects: bad magic, version, shape or dtype declaration.
class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public ValidationError {
  using ValidationError::ValidationError;
};

// A sparse plan that lists an out-of-range key block.
class PlanError : public ValidationError {
  using ValidationError::ValidationError;
};

template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<float> {
  static constexpr std::uint32_t value = 0;
};
template <>
struct DtypeCode<std::int32_t> {
  static constexpr std::uint32_t value = 1;
};

// Dense row-major tensor. Storage reports to the active MemTracker so tests
// can account for working-set growth of a pipeline call.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::uint64_t> shape, T fill = T{}) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (auto d : shape_) n *= static_cast<std::size_t>(d);
    data_.assign(n, fill);
  }

  const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::uint64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  // Full-rank index; callers must pass exactly ndim() indices.
  template <typename... Ix>
  std::size_t offset(Ix... ix) const noexcept {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(Ix); ++a) off = off * shape_[a] + idx[a];
    return off;
  }
  template <typename... Ix>
  T& operator()(Ix... ix) noexcept {
    return data_[offset(ix...)];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const noexcept {
    return data_[offset(ix...)];
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

private:
  std::vector<std::uint64_t> shape_;
  TrackedVec<T> data_;
};

// ---------------------------------------------------------------------------
// Tensor container format (the interchange medium for all CLI subcommands).
// Little-endian throughout:
//   magic "FPT1" | u32 version=1 | u32 ndim | ndim x u64 dims | u32 dtype |
//   payload, row-major.  dtype 0 = f32, 1 = i32.
// ---------------------------------------------------------------------------

namespace io_detail {

inline constexpr char kMagic[4] = {'F', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kMaxNdim = 8;

inline void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw FormatError(std::string("truncated container while reading ") + what);
}

inline std::uint32_t read_u32_le(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, b, 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

template <typename T>
void read_payload(std::istream& in, T* dst, std::size_t count) {
  static_assert(sizeof(T) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    read_exact(in, dst, count * sizeof(T), "payload");
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t raw = read_u32_le(in, "payload");
      dst[i] = std::bit_cast<T>(raw);
    }
  }
}

template <typename T>
void write_payload(std::ostream& out, const T* src, std::size_t count) {
  static_assert(sizeof(T) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < count; ++i) write_u32_le(out, std::bit_cast<std::uint32_t>(src[i]));
  }
}

}  // namespace io_detail

template <typename T>
void save_tensor(const Tensor<T>& tensor, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(io_detail::kMagic, 4);
  io_detail::write_u32_le(out, io_detail::kVersion);
  io_detail::write_u32_le(out, static_cast<std::uint32_t>(tensor.ndim()));
  for (auto d : tensor.shape()) io_detail::write_u64_le(out, d);
  io_detail::write_u32_le(out, DtypeCode<T>::value);
  io_detail::write_payload(out, tensor.data(), tensor.numel());
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  char magic[4];
  io_detail::read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, io_detail::kMagic, 4) != 0) throw FormatError("bad magic: " + path);
  if (io_detail::read_u32_le(in, "version") != io_detail::kVersion)
    throw FormatError("unsupported container version: " + path);

  const std::uint32_t ndim = io_detail::read_u32_le(in, "ndim");
  if (ndim == 0 || ndim > io_detail::kMaxNdim) throw FormatError("malformed ndim: " + path);

  std::vector<std::uint64_t> shape(ndim);
  std::uint64_t numel = 1;
  for (std::uint32_t a = 0; a < ndim; ++a) {
    shape[a] = io_detail::read_u64_le(in, "dims");
    if (shape[a] == 0) throw FormatError("zero dimension: " + path);
    if (numel > std::numeric_limits<std::uint64_t>::max() / shape[a])
      throw FormatError("shape overflow: " + path);
    numel *= shape[a];
  }

  if (io_detail::read_u32_le(in, "dtype") != DtypeCode<T>::value)
    throw FormatError("dtype mismatch: " + path);

  Tensor<T> tensor(std::move(shape));
  io_detail::read_payload(in, tensor.data(), tensor.numel());
  if (in.peek() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes after payload: " + path);

  if constexpr (std::is_same_v<T, float>) {
    for (std::size_t i = 0; i < tensor.numel(); ++i)
      if (!std::isfinite(tensor.data()[i]))
        throw ValidationError("non-finite payload value: " + path);
  }
  return tensor;
}

}  // namespace bsattn
