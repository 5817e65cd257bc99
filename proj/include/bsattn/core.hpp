#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "bsattn/tensor.hpp"

namespace bsattn {

// log2(e); logits are scaled by tau * kLog2e so all exponentials run in
// base 2. Equal to base-e softmax semantics in exact arithmetic.
inline constexpr float kLog2e = 1.4426950408889634f;
inline constexpr float kDefaultEpsilon = 1e-10f;

// Token t belongs to block floor(t / B); the final block may be partial.
struct BlockGrid {
  std::uint32_t block_size = 0;        // B
  std::uint32_t num_query_blocks = 0;  // M
  std::uint32_t num_key_blocks = 0;    // N (== M)
  std::uint32_t last_block_len = 0;

  std::uint32_t block_len(std::uint32_t block) const noexcept {
    return block + 1 == num_key_blocks ? last_block_len : block_size;
  }
  std::uint32_t block_of(std::uint64_t token) const noexcept {
    return static_cast<std::uint32_t>(token / block_size);
  }
};

inline BlockGrid make_block_grid(std::uint64_t seq_len, std::uint32_t block_size) {
  if (seq_len < 1) throw ValidationError("sequence length must be >= 1");
  if (block_size < 1) throw ValidationError("block size must be >= 1");
  BlockGrid grid;
  grid.block_size = block_size;
  const std::uint64_t blocks = (seq_len + block_size - 1) / block_size;
  grid.num_query_blocks = static_cast<std::uint32_t>(blocks);
  grid.num_key_blocks = grid.num_query_blocks;
  grid.last_block_len = static_cast<std::uint32_t>(seq_len - (blocks - 1) * block_size);
  return grid;
}

enum class Role { kQuery, kKey, kValue };

inline const char* role_name(Role role) {
  switch (role) {
    case Role::kQuery: return "query";
    case Role::kKey: return "key";
    case Role::kValue: return "value";
  }
  return "?";
}

// Batched multi-head activations, shape Z x H x L x d. Immutable once built;
// construction rejects non-4D shapes and non-finite values.
struct SequenceBatch {
  Tensor<float> data;
  Role role = Role::kQuery;

  std::uint64_t batch() const { return data.dim(0); }
  std::uint64_t heads() const { return data.dim(1); }
  std::uint64_t seq_len() const { return data.dim(2); }
  std::uint64_t head_dim() const { return data.dim(3); }

  // Base of the (z, h) L x d slice.
  const float* slice(std::uint64_t z, std::uint64_t h) const {
    return data.data() + ((z * heads() + h) * seq_len()) * head_dim();
  }
};

inline SequenceBatch make_sequence_batch(Tensor<float> data, Role role) {
  if (data.ndim() != 4) throw ValidationError("sequence batch must be Z x H x L x d");
  for (std::size_t a = 0; a < 4; ++a)
    if (data.dim(a) < 1) throw ValidationError("sequence batch dims must be >= 1");
  for (std::size_t i = 0; i < data.numel(); ++i)
    if (!std::isfinite(data.data()[i]))
      throw ValidationError("non-finite value in sequence batch");
  return SequenceBatch{std::move(data), role};
}

inline void require_same_shape(const SequenceBatch& a, const SequenceBatch& b) {
  if (!a.data.same_shape(b.data))
    throw ValidationError(std::string(role_name(a.role)) + "/" + role_name(b.role) +
                          " shape mismatch");
}

struct PipelineConfig {
  std::uint32_t block_size = 128;
  float alpha = 0.12f;
  std::uint32_t sink_tokens = 256;
  std::uint32_t window_tokens = 512;
  float scale = 0.0f;  // <= 0 selects the default d^(-1/2)
  float epsilon = kDefaultEpsilon;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (block_size < 1) throw ConfigError("block_size must be >= 1");
    if (!(alpha >= 0.0f)) throw ConfigError("alpha must be >= 0");
    if (window_tokens < 1) throw ConfigError("window_tokens must be >= 1");
    if (!(epsilon > 0.0f)) throw ConfigError("epsilon must be > 0");
  }

  std::uint32_t sink_blocks() const noexcept {
    return (sink_tokens + block_size - 1) / block_size;
  }
  std::uint32_t window_blocks() const noexcept {
    return (window_tokens + block_size - 1) / block_size;
  }
  float resolved_scale(std::uint64_t head_dim) const noexcept {
    return scale > 0.0f ? scale : 1.0f / std::sqrt(static_cast<float>(head_dim));
  }
};

// Four-lane dot; breaks the accumulation dependency chain and fixes the
// summation order so results are reproducible.
inline float dot_f32(const float* a, const float* b, std::size_t n) noexcept {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace bsattn
