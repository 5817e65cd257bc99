#pragma once

#include <cmath>
#include <limits>

#include "bsattn/core.hpp"

namespace bsattn {

// Finite stand-in for -inf in serialized score maps; any real logit exceeds
// it and exp2f(kNegSentinel - x) underflows to +0.
inline constexpr float kNegSentinel = std::numeric_limits<float>::lowest();

// Mean key vector per block, shape Z x H x N x d. The partial last block
// averages over the tokens it actually holds.
struct PooledKeys {
  Tensor<float> data;
};

// Per block pair (I, J): raw approximated energy S and its local max m, in
// base-2 logit units. Non-causal entries (J > I) hold 0 / kNegSentinel.
struct BlockEnergies {
  Tensor<float> energy;     // Z x H x M x N
  Tensor<float> local_max;  // Z x H x M x N
};

// Block-level importance map. score rows are normalized against the row's
// total approximated energy plus epsilon, so each populated row sums to
// sum/(sum+eps) < 1 and non-causal entries are exactly 0.
struct BlockScoreMap {
  Tensor<float> energy;
  Tensor<float> local_max;
  Tensor<float> score;  // Z x H x M x N
};

namespace detail {

// Mean over each token block, for keys or queries alike.
inline Tensor<float> pool_blocks(const SequenceBatch& seq, const BlockGrid& grid) {
  const std::uint64_t Z = seq.batch(), H = seq.heads(), L = seq.seq_len(), d = seq.head_dim();
  const std::uint32_t N = grid.num_key_blocks, B = grid.block_size;
  Tensor<float> pooled({Z, H, N, d});
  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* src = seq.slice(z, h);
      float* dst = pooled.data() + ((z * H + h) * N) * d;
      for (std::uint32_t j = 0; j < N; ++j) {
        const std::uint32_t len = grid.block_len(j);
        float* out = dst + static_cast<std::size_t>(j) * d;
        for (std::uint64_t c = 0; c < d; ++c) out[c] = 0.0f;
        for (std::uint32_t r = 0; r < len; ++r) {
          const float* row = src + (static_cast<std::size_t>(j) * B + r) * d;
          for (std::uint64_t c = 0; c < d; ++c) out[c] += row[c];
        }
        const float inv = 1.0f / static_cast<float>(len);
        for (std::uint64_t c = 0; c < d; ++c) out[c] *= inv;
      }
    }
  }
  return pooled;
}

}  // namespace detail

inline PooledKeys pool_keys(const SequenceBatch& keys, const BlockGrid& grid) {
  if (keys.role != Role::kKey) throw ValidationError("pool_keys expects a key batch");
  if (grid.num_key_blocks * static_cast<std::uint64_t>(grid.block_size) < keys.seq_len())
    throw ValidationError("grid does not cover the key sequence");
  return PooledKeys{detail::pool_blocks(keys, grid)};
}

// Fused block approximation: for every causal pair (I, J <= I) reduce the
// B x 1 logit column q_i . kbar_J into (max, sum of 2^(logit - max)). The
// only scratch is one tile-length logit buffer, reused across pairs.
inline BlockEnergies approx_block_scores(const SequenceBatch& queries, const PooledKeys& pooled,
                                         const BlockGrid& grid, float tau) {
  const std::uint64_t Z = queries.batch(), H = queries.heads(), d = queries.head_dim();
  const std::uint32_t M = grid.num_query_blocks, N = grid.num_key_blocks, B = grid.block_size;
  if (pooled.data.ndim() != 4 || pooled.data.dim(2) != N || pooled.data.dim(3) != d ||
      pooled.data.dim(0) != Z || pooled.data.dim(1) != H)
    throw ValidationError("pooled keys shape mismatch");

  const float to_bits = tau * kLog2e;
  BlockEnergies out{Tensor<float>({Z, H, M, N}, 0.0f), Tensor<float>({Z, H, M, N}, kNegSentinel)};
  TrackedVec<float> logits(B);

  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* qbase = queries.slice(z, h);
      const float* kbase = pooled.data.data() + ((z * H + h) * N) * d;
      float* energy = out.energy.data() + ((z * H + h) * M) * N;
      float* local_max = out.local_max.data() + ((z * H + h) * M) * N;
      for (std::uint32_t qi = 0; qi < M; ++qi) {
        const std::uint32_t rows = grid.block_len(qi);
        const float* tile = qbase + static_cast<std::size_t>(qi) * B * d;
        for (std::uint32_t kj = 0; kj <= qi; ++kj) {
          // Every query token t in tile I satisfies t >= J*B for J <= I, so
          // the pooled block is visible to all of the tile's real rows.
          const float* kbar = kbase + static_cast<std::size_t>(kj) * d;
          float m = kNegSentinel;
          for (std::uint32_t r = 0; r < rows; ++r) {
            const float x = dot_f32(tile + static_cast<std::size_t>(r) * d, kbar, d) * to_bits;
            logits[r] = x;
            m = std::max(m, x);
          }
          float s = 0.0f;
          for (std::uint32_t r = 0; r < rows; ++r) s += std::exp2f(logits[r] - m);
          energy[static_cast<std::size_t>(qi) * N + kj] = s;
          local_max[static_cast<std::size_t>(qi) * N + kj] = m;
        }
      }
    }
  }
  return out;
}

// Consistency-preserved global normalization: rescale each row's energies to
// the row maximum, then map to a probability-like score.
inline BlockScoreMap normalize_block_scores(BlockEnergies energies, const BlockGrid& grid,
                                            float epsilon = kDefaultEpsilon) {
  const auto& shape = energies.energy.shape();
  const std::uint64_t Z = shape[0], H = shape[1];
  const std::uint32_t M = grid.num_query_blocks, N = grid.num_key_blocks;
  Tensor<float> score({Z, H, M, N}, 0.0f);

  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* energy = energies.energy.data() + ((z * H + h) * M) * N;
      const float* local_max = energies.local_max.data() + ((z * H + h) * M) * N;
      float* dst = score.data() + ((z * H + h) * M) * N;
      for (std::uint32_t qi = 0; qi < M; ++qi) {
        const std::size_t row = static_cast<std::size_t>(qi) * N;
        float row_max = kNegSentinel;
        for (std::uint32_t kj = 0; kj <= qi; ++kj) row_max = std::max(row_max, local_max[row + kj]);
        float total = 0.0f;
        for (std::uint32_t kj = 0; kj <= qi; ++kj) {
          const float rescaled = energy[row + kj] * std::exp2f(local_max[row + kj] - row_max);
          dst[row + kj] = rescaled;
          total += rescaled;
        }
        const float inv = 1.0f / (total + epsilon);
        for (std::uint32_t kj = 0; kj <= qi; ++kj) dst[row + kj] *= inv;
      }
    }
  }
  return BlockScoreMap{std::move(energies.energy), std::move(energies.local_max),
                       std::move(score)};
}

// Full pattern discovery: key pre-pooling, fused block approximation, global
// normalization. Auxiliary memory stays O((L/B)^2 * H * Z) plus one tile
// buffer; no L x (L/B) intermediate is ever materialized.
inline BlockScoreMap discover(const SequenceBatch& queries, const SequenceBatch& keys,
                              const BlockGrid& grid, float tau,
                              float epsilon = kDefaultEpsilon) {
  require_same_shape(queries, keys);
  const PooledKeys pooled = pool_keys(keys, grid);
  return normalize_block_scores(approx_block_scores(queries, pooled, grid, tau), grid, epsilon);
}

// Comparison method: mean-pool queries as well, one logit per block pair.
// With a single query proxy the tile energy degenerates to S = 1 and the
// normalization reduces to a plain row softmax (up to epsilon).
inline BlockScoreMap discover_pool_both(const SequenceBatch& queries, const SequenceBatch& keys,
                                        const BlockGrid& grid, float tau,
                                        float epsilon = kDefaultEpsilon) {
  require_same_shape(queries, keys);
  const std::uint64_t Z = queries.batch(), H = queries.heads(), d = queries.head_dim();
  const std::uint32_t M = grid.num_query_blocks, N = grid.num_key_blocks;
  const float to_bits = tau * kLog2e;

  const Tensor<float> pooled_q = detail::pool_blocks(queries, grid);
  const Tensor<float> pooled_k = detail::pool_blocks(keys, grid);

  BlockEnergies energies{Tensor<float>({Z, H, M, N}, 0.0f),
                         Tensor<float>({Z, H, M, N}, kNegSentinel)};
  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* qb = pooled_q.data() + ((z * H + h) * M) * d;
      const float* kb = pooled_k.data() + ((z * H + h) * N) * d;
      float* energy = energies.energy.data() + ((z * H + h) * M) * N;
      float* local_max = energies.local_max.data() + ((z * H + h) * M) * N;
      for (std::uint32_t qi = 0; qi < M; ++qi) {
        for (std::uint32_t kj = 0; kj <= qi; ++kj) {
          local_max[static_cast<std::size_t>(qi) * N + kj] =
              dot_f32(qb + static_cast<std::size_t>(qi) * d,
                      kb + static_cast<std::size_t>(kj) * d, d) *
              to_bits;
          energy[static_cast<std::size_t>(qi) * N + kj] = 1.0f;
        }
      }
    }
  }
  return normalize_block_scores(std::move(energies), grid, epsilon);
}

// Reference semantics that the fused approximation approximates: a softmax
// per query row over the pooled keys, averaged across each query block.
// Deliberately materializes the L x N score slice per (z, h) — this is the
// compute-then-pool route whose memory the fused kernel avoids.
inline BlockScoreMap discover_exact(const SequenceBatch& queries, const SequenceBatch& keys,
                                    const BlockGrid& grid, float tau,
                                    float epsilon = kDefaultEpsilon) {
  require_same_shape(queries, keys);
  const std::uint64_t Z = queries.batch(), H = queries.heads(), L = queries.seq_len(),
                      d = queries.head_dim();
  const std::uint32_t M = grid.num_query_blocks, N = grid.num_key_blocks, B = grid.block_size;
  const float to_bits = tau * kLog2e;

  const PooledKeys pooled = pool_keys(keys, grid);
  BlockEnergies energies{Tensor<float>({Z, H, M, N}, 0.0f),
                         Tensor<float>({Z, H, M, N}, kNegSentinel)};
  Tensor<float> score({Z, H, M, N}, 0.0f);
  TrackedVec<float> table(static_cast<std::size_t>(L) * N);

  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* qbase = queries.slice(z, h);
      const float* kbase = pooled.data.data() + ((z * H + h) * N) * d;

      // Pass 1: per-query logits against every causally visible pooled key.
      for (std::uint64_t t = 0; t < L; ++t) {
        const std::uint32_t visible = grid.block_of(t);
        float* row = table.data() + t * N;
        for (std::uint32_t kj = 0; kj < N; ++kj)
          row[kj] = kj <= visible
                        ? dot_f32(qbase + t * d, kbase + static_cast<std::size_t>(kj) * d, d) *
                              to_bits
                        : kNegSentinel;
      }

      // Block-pair reductions, same quantities the fused kernel produces.
      float* energy = energies.energy.data() + ((z * H + h) * M) * N;
      float* local_max = energies.local_max.data() + ((z * H + h) * M) * N;
      for (std::uint32_t qi = 0; qi < M; ++qi) {
        const std::uint32_t rows = grid.block_len(qi);
        for (std::uint32_t kj = 0; kj <= qi; ++kj) {
          float m = kNegSentinel;
          for (std::uint32_t r = 0; r < rows; ++r)
            m = std::max(m, table[(static_cast<std::size_t>(qi) * B + r) * N + kj]);
          float s = 0.0f;
          for (std::uint32_t r = 0; r < rows; ++r)
            s += std::exp2f(table[(static_cast<std::size_t>(qi) * B + r) * N + kj] - m);
          local_max[static_cast<std::size_t>(qi) * N + kj] = m;
          energy[static_cast<std::size_t>(qi) * N + kj] = s;
        }
      }

      // Pass 2: per-query softmax in place, then the secondary average over
      // each query block.
      for (std::uint64_t t = 0; t < L; ++t) {
        const std::uint32_t visible = grid.block_of(t);
        float* row = table.data() + t * N;
        float m = kNegSentinel;
        for (std::uint32_t kj = 0; kj <= visible; ++kj) m = std::max(m, row[kj]);
        float total = 0.0f;
        for (std::uint32_t kj = 0; kj <= visible; ++kj) {
          row[kj] = std::exp2f(row[kj] - m);
          total += row[kj];
        }
        const float inv = 1.0f / (total + epsilon);
        for (std::uint32_t kj = 0; kj <= visible; ++kj) row[kj] *= inv;
      }
      float* dst = score.data() + ((z * H + h) * M) * N;
      for (std::uint32_t qi = 0; qi < M; ++qi) {
        const std::uint32_t rows = grid.block_len(qi);
        const float inv_rows = 1.0f / static_cast<float>(rows);
        for (std::uint32_t kj = 0; kj <= qi; ++kj) {
          float acc = 0.0f;
          for (std::uint32_t r = 0; r < rows; ++r)
            acc += table[(static_cast<std::size_t>(qi) * B + r) * N + kj];
          dst[static_cast<std::size_t>(qi) * N + kj] = acc * inv_rows;
        }
      }
    }
  }
  return BlockScoreMap{std::move(energies.energy), std::move(energies.local_max),
                       std::move(score)};
}

}  // namespace bsattn
