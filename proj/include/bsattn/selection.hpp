#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bsattn/core.hpp"
#include "bsattn/discovery.hpp"

namespace bsattn {

// Boolean activation map, shape Z x M x N x H (head axis last, matching the
// plan layout the sparse kernel consumes).
struct ActiveMask {
  Tensor<std::uint8_t> active;

  std::uint64_t batch() const { return active.dim(0); }
  std::uint64_t query_blocks() const { return active.dim(1); }
  std::uint64_t key_blocks() const { return active.dim(2); }
  std::uint64_t heads() const { return active.dim(3); }
};

// Compacted active key-block indices per (z, i, h) row. The first C entries
// of each Idx row are the active indices in strictly increasing order; the
// remainder holds the fill value N.
struct SparseBlockPlan {
  Tensor<std::int32_t> indices;  // Z x M x N x H
  Tensor<std::int32_t> counts;   // Z x M x H

  std::uint64_t batch() const { return indices.dim(0); }
  std::uint64_t query_blocks() const { return indices.dim(1); }
  std::uint64_t key_blocks() const { return indices.dim(2); }
  std::uint64_t heads() const { return indices.dim(3); }
};

struct SelectionStats {
  std::uint64_t score_comparisons = 0;  // comparisons against score values
};

namespace detail {

struct ScoreDims {
  std::uint64_t Z, H;
  std::uint32_t M, N;
};

inline ScoreDims score_dims(const Tensor<float>& score) {
  if (score.ndim() != 4) throw ValidationError("score map must be Z x H x M x N");
  return ScoreDims{score.dim(0), score.dim(1), static_cast<std::uint32_t>(score.dim(2)),
                   static_cast<std::uint32_t>(score.dim(3))};
}

inline bool structural(std::uint32_t i, std::uint32_t j, std::uint32_t sink_blocks,
                       std::uint32_t window_blocks) noexcept {
  return j < sink_blocks || (i - j) < window_blocks;  // callers guarantee j <= i
}

}  // namespace detail

// Max-based dynamic thresholding: one max pass and one compare pass per row,
// no sorting of score values anywhere. Blocks scoring at least alpha times
// the row maximum survive, as do sink/window/diagonal blocks.
inline ActiveMask max_threshold_mask(const Tensor<float>& score, const PipelineConfig& config,
                                     SelectionStats* stats = nullptr) {
  config.validate();
  const auto dims = detail::score_dims(score);
  const std::uint32_t sink = config.sink_blocks(), window = config.window_blocks();
  ActiveMask mask{Tensor<std::uint8_t>({dims.Z, dims.M, dims.N, dims.H}, 0)};
  std::uint64_t comparisons = 0;

  for (std::uint64_t z = 0; z < dims.Z; ++z) {
    for (std::uint64_t h = 0; h < dims.H; ++h) {
      const float* srow = score.data() + ((z * dims.H + h) * dims.M) * dims.N;
      for (std::uint32_t i = 0; i < dims.M; ++i) {
        float max_val = 0.0f;
        for (std::uint32_t j = 0; j <= i; ++j) {
          max_val = std::max(max_val, srow[static_cast<std::size_t>(i) * dims.N + j]);
          ++comparisons;
        }
        const float thresh = config.alpha * max_val;
        for (std::uint32_t j = 0; j <= i; ++j) {
          const bool by_score = srow[static_cast<std::size_t>(i) * dims.N + j] >= thresh;
          ++comparisons;
          if (by_score || detail::structural(i, j, sink, window))
            mask.active(z, i, j, h) = 1;
        }
      }
    }
  }
  if (stats) stats->score_comparisons += comparisons;
  return mask;
}

// Baseline: keep the min(k, i+1) highest-scoring causal blocks per row, ties
// toward the lower block index, plus the same structural retention.
inline ActiveMask topk_select(const Tensor<float>& score, std::uint32_t k,
                              const PipelineConfig& config) {
  if (k < 1) throw ConfigError("top-k requires k >= 1");
  config.validate();
  const auto dims = detail::score_dims(score);
  const std::uint32_t sink = config.sink_blocks(), window = config.window_blocks();
  ActiveMask mask{Tensor<std::uint8_t>({dims.Z, dims.M, dims.N, dims.H}, 0)};
  std::vector<std::uint32_t> order;

  for (std::uint64_t z = 0; z < dims.Z; ++z) {
    for (std::uint64_t h = 0; h < dims.H; ++h) {
      const float* srow = score.data() + ((z * dims.H + h) * dims.M) * dims.N;
      for (std::uint32_t i = 0; i < dims.M; ++i) {
        const float* row = srow + static_cast<std::size_t>(i) * dims.N;
        order.resize(i + 1);
        for (std::uint32_t j = 0; j <= i; ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b]; });
        const std::uint32_t take = std::min<std::uint32_t>(k, i + 1);
        for (std::uint32_t r = 0; r < take; ++r) mask.active(z, i, order[r], h) = 1;
        for (std::uint32_t j = 0; j <= i; ++j)
          if (detail::structural(i, j, sink, window)) mask.active(z, i, j, h) = 1;
      }
    }
  }
  return mask;
}

// Baseline: renormalize each causal row to unit mass, keep the shortest
// descending-score prefix reaching cumulative mass p. Zero-score blocks are
// never taken on score grounds.
inline ActiveMask topp_select(const Tensor<float>& score, float p, const PipelineConfig& config) {
  if (!(p > 0.0f) || p > 1.0f) throw ConfigError("top-p requires p in (0, 1]");
  config.validate();
  const auto dims = detail::score_dims(score);
  const std::uint32_t sink = config.sink_blocks(), window = config.window_blocks();
  ActiveMask mask{Tensor<std::uint8_t>({dims.Z, dims.M, dims.N, dims.H}, 0)};
  std::vector<std::uint32_t> order;

  for (std::uint64_t z = 0; z < dims.Z; ++z) {
    for (std::uint64_t h = 0; h < dims.H; ++h) {
      const float* srow = score.data() + ((z * dims.H + h) * dims.M) * dims.N;
      for (std::uint32_t i = 0; i < dims.M; ++i) {
        const float* row = srow + static_cast<std::size_t>(i) * dims.N;
        order.resize(i + 1);
        for (std::uint32_t j = 0; j <= i; ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b]; });
        double total = 0.0;
        for (std::uint32_t j = 0; j <= i; ++j) total += row[j];
        double cumulative = 0.0;
        for (std::uint32_t r = 0; r <= i; ++r) {
          if (total <= 0.0 || row[order[r]] <= 0.0f) break;
          mask.active(z, i, order[r], h) = 1;
          cumulative += row[order[r]] / total;
          if (cumulative >= static_cast<double>(p) - 1e-9) break;
        }
        for (std::uint32_t j = 0; j <= i; ++j)
          if (detail::structural(i, j, sink, window)) mask.active(z, i, j, h) = 1;
      }
    }
  }
  return mask;
}

inline ActiveMask max_threshold_mask(const BlockScoreMap& scores, const PipelineConfig& config,
                                     SelectionStats* stats = nullptr) {
  return max_threshold_mask(scores.score, config, stats);
}
inline ActiveMask topk_select(const BlockScoreMap& scores, std::uint32_t k,
                              const PipelineConfig& config) {
  return topk_select(scores.score, k, config);
}
inline ActiveMask topp_select(const BlockScoreMap& scores, float p,
                              const PipelineConfig& config) {
  return topp_select(scores.score, p, config);
}

// Fill-and-compact: active indices ascending, then the fill value N. The
// plan and the mask determine each other exactly.
inline SparseBlockPlan compress_indices(const ActiveMask& mask) {
  const std::uint64_t Z = mask.batch(), M = mask.query_blocks(), N = mask.key_blocks(),
                      H = mask.heads();
  SparseBlockPlan plan{Tensor<std::int32_t>({Z, M, N, H}, static_cast<std::int32_t>(N)),
                       Tensor<std::int32_t>({Z, M, H}, 0)};
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t h = 0; h < H; ++h) {
        std::int32_t count = 0;
        for (std::uint64_t j = 0; j < N; ++j)
          if (mask.active(z, i, j, h))
            plan.indices(z, i, static_cast<std::uint64_t>(count++), h) =
                static_cast<std::int32_t>(j);
        plan.counts(z, i, h) = count;
      }
  return plan;
}

// Total listed block visits, Sum of C.
inline std::uint64_t visit_count(const SparseBlockPlan& plan) {
  std::uint64_t total = 0;
  for (std::size_t idx = 0; idx < plan.counts.numel(); ++idx)
    total += static_cast<std::uint64_t>(plan.counts.data()[idx]);
  return total;
}

// Active causal block pairs over total causal block pairs.
inline double density(const SparseBlockPlan& plan, const BlockGrid& grid) {
  const std::uint64_t Z = plan.batch(), H = plan.heads();
  const std::uint64_t M = grid.num_query_blocks;
  const double causal_pairs =
      static_cast<double>(Z) * static_cast<double>(H) * (static_cast<double>(M) * (M + 1) / 2.0);
  return static_cast<double>(visit_count(plan)) / causal_pairs;
}

}  // namespace bsattn
