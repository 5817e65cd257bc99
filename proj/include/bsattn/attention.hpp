#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "bsattn/core.hpp"
#include "bsattn/selection.hpp"

namespace bsattn {

// Attention result plus the per-row log-sum-exp of the scaled logits, in
// base-2 log units: 2^lse[t] = sum over attended keys of 2^(q.k * tau * log2e).
struct AttentionOutput {
  Tensor<float> out;  // Z x H x L x d
  Tensor<float> lse;  // Z x H x L
};

struct AttentionStats {
  std::uint64_t block_visits = 0;  // (query tile, key block) pairs touched
};

namespace detail {

inline void require_qkv(const SequenceBatch& q, const SequenceBatch& k, const SequenceBatch& v) {
  if (q.role != Role::kQuery || k.role != Role::kKey || v.role != Role::kValue)
    throw ValidationError("expected query/key/value roles");
  require_same_shape(q, k);
  require_same_shape(q, v);
}

}  // namespace detail

// Block-sparse causal attention over a compacted plan. Iterates exactly the
// C listed blocks per (z, i, h) row — an index-driven jump to each salient
// block, never a scan over all N. Per-token causal masking applies inside
// the diagonal block only; earlier blocks are entirely in the past.
inline AttentionOutput block_sparse_attention(const SequenceBatch& queries,
                                              const SequenceBatch& keys,
                                              const SequenceBatch& values,
                                              const SparseBlockPlan& plan, const BlockGrid& grid,
                                              float tau, AttentionStats* stats = nullptr) {
  detail::require_qkv(queries, keys, values);
  const std::uint64_t Z = queries.batch(), H = queries.heads(), L = queries.seq_len(),
                      d = queries.head_dim();
  const std::uint32_t M = grid.num_query_blocks, N = grid.num_key_blocks, B = grid.block_size;
  if (plan.batch() != Z || plan.heads() != H || plan.query_blocks() != M ||
      plan.key_blocks() != N)
    throw ValidationError("plan shape does not match grid/batch");

  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  const float to_bits = tau * kLog2e;
  AttentionOutput result{Tensor<float>({Z, H, L, d}, 0.0f), Tensor<float>({Z, H, L}, 0.0f)};

  // Running online-softmax state for one query tile.
  TrackedVec<float> run_max(B), run_sum(B), acc(static_cast<std::size_t>(B) * d), logits(B);
  std::uint64_t visits = 0;

  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* qbase = queries.slice(z, h);
      const float* kbase = keys.slice(z, h);
      const float* vbase = values.slice(z, h);
      float* obase = result.out.data() + ((z * H + h) * L) * d;
      float* lbase = result.lse.data() + (z * H + h) * L;

      for (std::uint32_t qi = 0; qi < M; ++qi) {
        const std::uint32_t rows = grid.block_len(qi);
        const float* tile = qbase + static_cast<std::size_t>(qi) * B * d;
        for (std::uint32_t r = 0; r < rows; ++r) {
          run_max[r] = kNegInf;
          run_sum[r] = 0.0f;
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(rows) * d; ++c) acc[c] = 0.0f;

        const std::int32_t active = plan.counts(z, qi, h);
        for (std::int32_t slot = 0; slot < active; ++slot) {
          const std::int32_t bid = plan.indices(z, qi, static_cast<std::uint64_t>(slot), h);
          if (bid < 0 || bid >= static_cast<std::int32_t>(N))
            throw PlanError("plan row lists block index " + std::to_string(bid) +
                            " outside [0, " + std::to_string(N) + ")");
          ++visits;
          const std::uint32_t kj = static_cast<std::uint32_t>(bid);
          const std::uint32_t cols = grid.block_len(kj);
          const bool is_diag = kj == qi;
          const float* kblk = kbase + static_cast<std::size_t>(kj) * B * d;
          const float* vblk = vbase + static_cast<std::size_t>(kj) * B * d;

          for (std::uint32_t r = 0; r < rows; ++r) {
            // Inside the diagonal block, query row r sees keys 0..r only.
            const std::uint32_t cols_r = is_diag ? std::min(cols, r + 1) : cols;
            const float* qrow = tile + static_cast<std::size_t>(r) * d;

            float m_new = run_max[r];
            float logits_max = kNegInf;
            float block_sum = 0.0f;
            float* acc_row = acc.data() + static_cast<std::size_t>(r) * d;

            // First reduce the max, then accumulate 2^(x - m_new) and P.V in
            // a second pass over the buffered logits.
            for (std::uint32_t c = 0; c < cols_r; ++c) {
              logits[c] = dot_f32(qrow, kblk + static_cast<std::size_t>(c) * d, d) * to_bits;
              logits_max = std::max(logits_max, logits[c]);
            }
            m_new = std::max(m_new, logits_max);
            const float rescale = run_max[r] == kNegInf ? 0.0f : std::exp2f(run_max[r] - m_new);
            for (std::uint64_t c = 0; c < d; ++c) acc_row[c] *= rescale;
            for (std::uint32_t c = 0; c < cols_r; ++c) {
              const float w = std::exp2f(logits[c] - m_new);
              block_sum += w;
              const float* vrow = vblk + static_cast<std::size_t>(c) * d;
              for (std::uint64_t cc = 0; cc < d; ++cc) acc_row[cc] += w * vrow[cc];
            }
            run_sum[r] = run_sum[r] * rescale + block_sum;
            run_max[r] = m_new;
          }
        }

        for (std::uint32_t r = 0; r < rows; ++r) {
          const std::uint64_t t = static_cast<std::uint64_t>(qi) * B + r;
          const float inv = 1.0f / run_sum[r];
          const float* acc_row = acc.data() + static_cast<std::size_t>(r) * d;
          float* orow = obase + t * d;
          for (std::uint64_t c = 0; c < d; ++c) orow[c] = acc_row[c] * inv;
          lbase[t] = run_max[r] + std::log2f(run_sum[r]);
        }
      }
    }
  }
  if (stats) stats->block_visits += visits;
  return result;
}

// Dense causal attention oracle; materializes one logit row at a time.
inline AttentionOutput dense_attention(const SequenceBatch& queries, const SequenceBatch& keys,
                                       const SequenceBatch& values, float tau) {
  detail::require_qkv(queries, keys, values);
  const std::uint64_t Z = queries.batch(), H = queries.heads(), L = queries.seq_len(),
                      d = queries.head_dim();
  const float to_bits = tau * kLog2e;
  AttentionOutput result{Tensor<float>({Z, H, L, d}, 0.0f), Tensor<float>({Z, H, L}, 0.0f)};
  TrackedVec<float> logits(L);

  for (std::uint64_t z = 0; z < Z; ++z) {
    for (std::uint64_t h = 0; h < H; ++h) {
      const float* qbase = queries.slice(z, h);
      const float* kbase = keys.slice(z, h);
      const float* vbase = values.slice(z, h);
      float* obase = result.out.data() + ((z * H + h) * L) * d;
      float* lbase = result.lse.data() + (z * H + h) * L;

      for (std::uint64_t t = 0; t < L; ++t) {
        const float* qrow = qbase + t * d;
        float m = -std::numeric_limits<float>::infinity();
        for (std::uint64_t s = 0; s <= t; ++s) {
          logits[s] = dot_f32(qrow, kbase + s * d, d) * to_bits;
          m = std::max(m, logits[s]);
        }
        float total = 0.0f;
        float* orow = obase + t * d;
        for (std::uint64_t s = 0; s <= t; ++s) {
          const float w = std::exp2f(logits[s] - m);
          total += w;
          const float* vrow = vbase + s * d;
          for (std::uint64_t c = 0; c < d; ++c) orow[c] += w * vrow[c];
        }
        const float inv = 1.0f / total;
        for (std::uint64_t c = 0; c < d; ++c) orow[c] *= inv;
        lbase[t] = m + std::log2f(total);
      }
    }
  }
  return result;
}

// The all-causal-active plan; with it the sparse evaluator must reproduce
// dense_attention.
inline SparseBlockPlan full_causal_plan(std::uint64_t batch, std::uint64_t heads,
                                        const BlockGrid& grid) {
  const std::uint64_t M = grid.num_query_blocks, N = grid.num_key_blocks;
  SparseBlockPlan plan{
      Tensor<std::int32_t>({batch, M, N, heads}, static_cast<std::int32_t>(N)),
      Tensor<std::int32_t>({batch, M, heads}, 0)};
  for (std::uint64_t z = 0; z < batch; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t h = 0; h < heads; ++h) {
        for (std::uint64_t j = 0; j <= i; ++j)
          plan.indices(z, i, j, h) = static_cast<std::int32_t>(j);
        plan.counts(z, i, h) = static_cast<std::int32_t>(i + 1);
      }
  return plan;
}

}  // namespace bsattn
