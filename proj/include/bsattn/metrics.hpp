#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "bsattn/discovery.hpp"
#include "bsattn/selection.hpp"

namespace bsattn {

// Spearman rank correlation with tie-averaged ranks. Returns NaN when either
// side has zero rank variance.
inline double spearman(const float* a, const float* b, std::size_t n) {
  auto ranks = [](const float* v, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };
  const std::vector<double> ra = ranks(a, n), rb = ranks(b, n);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(va * vb);
}

// Mean per-row Spearman between two score maps over rows with at least
// min_entries causal entries and nonzero rank variance.
inline double mean_row_spearman(const Tensor<float>& a, const Tensor<float>& b,
                                std::uint32_t min_entries = 5) {
  const std::uint64_t Z = a.dim(0), H = a.dim(1), M = a.dim(2), N = a.dim(3);
  double total = 0.0;
  std::size_t rows = 0;
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t h = 0; h < H; ++h)
      for (std::uint64_t i = 0; i < M; ++i) {
        const std::size_t entries = static_cast<std::size_t>(i) + 1;
        if (entries < min_entries) continue;
        const float* ra = a.data() + (((z * H + h) * M + i) * N);
        const float* rb = b.data() + (((z * H + h) * M + i) * N);
        const double rho = spearman(ra, rb, entries);
        if (std::isnan(rho)) continue;
        total += rho;
        ++rows;
      }
  return rows == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(rows);
}

// Fraction of planted (non-diagonal) ground-truth blocks whose score reaches
// alpha times the row maximum. Vacuously 1 when nothing is planted.
inline double planted_score_recall(const Tensor<float>& score, const ActiveMask& gt, float alpha) {
  const std::uint64_t Z = score.dim(0), H = score.dim(1), M = score.dim(2), N = score.dim(3);
  std::size_t hits = 0, total = 0;
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t h = 0; h < H; ++h)
      for (std::uint64_t i = 0; i < M; ++i) {
        const float* row = score.data() + (((z * H + h) * M + i) * N);
        float row_max = 0.0f;
        for (std::uint64_t j = 0; j <= i; ++j) row_max = std::max(row_max, row[j]);
        for (std::uint64_t j = 0; j <= i; ++j) {
          if (j == i || !gt.active(z, i, j, h)) continue;
          ++total;
          if (row[j] >= alpha * row_max) ++hits;
        }
      }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

// Fraction of rows holding planted (non-diagonal) ground-truth blocks whose
// causal argmax lands on one of them; ties resolve to the lower index.
inline double planted_top1_recall(const Tensor<float>& score, const ActiveMask& gt) {
  const std::uint64_t Z = score.dim(0), H = score.dim(1), M = score.dim(2), N = score.dim(3);
  std::size_t hits = 0, total = 0;
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t h = 0; h < H; ++h)
      for (std::uint64_t i = 0; i < M; ++i) {
        bool has_planted = false;
        for (std::uint64_t j = 0; j <= i && !has_planted; ++j)
          if (j != i && gt.active(z, i, j, h)) has_planted = true;
        if (!has_planted) continue;
        const float* row = score.data() + (((z * H + h) * M + i) * N);
        std::uint64_t arg = 0;
        for (std::uint64_t j = 1; j <= i; ++j)
          if (row[j] > row[arg]) arg = j;
        ++total;
        if (arg != i && gt.active(z, i, arg, h)) ++hits;
      }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

// Causal-cell overlap between a selection mask and ground truth.
inline double mask_recall(const ActiveMask& mask, const ActiveMask& gt) {
  std::size_t hits = 0, total = 0;
  const std::uint64_t Z = gt.batch(), M = gt.query_blocks(), H = gt.heads();
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t j = 0; j <= i; ++j)
        for (std::uint64_t h = 0; h < H; ++h) {
          if (!gt.active(z, i, j, h)) continue;
          ++total;
          if (mask.active(z, i, j, h)) ++hits;
        }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

inline double mask_precision(const ActiveMask& mask, const ActiveMask& gt) {
  std::size_t hits = 0, total = 0;
  const std::uint64_t Z = gt.batch(), M = gt.query_blocks(), H = gt.heads();
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t j = 0; j <= i; ++j)
        for (std::uint64_t h = 0; h < H; ++h) {
          if (!mask.active(z, i, j, h)) continue;
          ++total;
          if (gt.active(z, i, j, h)) ++hits;
        }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

struct ErrorStats {
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

inline ErrorStats tensor_error(const Tensor<float>& a, const Tensor<float>& b) {
  ErrorStats e;
  if (!a.same_shape(b)) throw ValidationError("error comparison requires equal shapes");
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double diff = std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
    e.max_abs = std::max(e.max_abs, diff);
    e.mean_abs += diff;
  }
  if (a.numel() > 0) e.mean_abs /= static_cast<double>(a.numel());
  return e;
}

}  // namespace bsattn
