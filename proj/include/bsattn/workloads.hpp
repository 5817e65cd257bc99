#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bsattn/core.hpp"
#include "bsattn/selection.hpp"

namespace bsattn {

// Deterministic Gaussian source: mt19937_64 plus hand-rolled Box-Muller, so
// generated tensors are bit-identical for a given seed on any toolchain.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  float gaussian_f(float stddev) { return static_cast<float>(gaussian()) * stddev; }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

enum class PatternKind { kVertical, kSlash, kBlock, kNeedle };

inline const char* pattern_name(PatternKind kind) {
  switch (kind) {
    case PatternKind::kVertical: return "vertical";
    case PatternKind::kSlash: return "slash";
    case PatternKind::kBlock: return "block";
    case PatternKind::kNeedle: return "needle";
  }
  return "?";
}

// target_a is the key-block index (vertical), the diagonal offset in tokens
// (slash), the row block (block, with target_b the column block), or the
// needle token index. strength is the block-level logit boost in scaled
// (post-tau) units; strength 0 plants nothing.
struct PlantedSpec {
  PatternKind pattern_kind = PatternKind::kVertical;
  float strength = 5.0f;
  std::int64_t target_a = 0;
  std::int64_t target_b = 0;
  float base_noise = 1.0f;
  std::uint64_t rng_seed = 0;
};

struct PlantedWorkload {
  SequenceBatch q;
  SequenceBatch k;
  SequenceBatch v;
  ActiveMask ground_truth;  // planted causal blocks plus the diagonal
};

namespace detail {

inline void unit_direction(Rng& rng, float* dst, std::uint64_t d) {
  double norm_sq = 0.0;
  for (std::uint64_t c = 0; c < d; ++c) {
    dst[c] = static_cast<float>(rng.gaussian());
    norm_sq += static_cast<double>(dst[c]) * dst[c];
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq > 0.0 ? norm_sq : 1.0));
  for (std::uint64_t c = 0; c < d; ++c) dst[c] *= inv;
}

inline Tensor<float> gaussian_tensor(Rng& rng, std::uint64_t Z, std::uint64_t H, std::uint64_t L,
                                     std::uint64_t d, float stddev) {
  Tensor<float> t({Z, H, L, d});
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.gaussian_f(stddev);
  return t;
}

inline void add_scaled(float* row, const float* dir, std::uint64_t d, float scale) {
  for (std::uint64_t c = 0; c < d; ++c) row[c] += scale * dir[c];
}

inline ActiveMask diagonal_only_mask(std::uint64_t Z, std::uint64_t H, std::uint32_t M) {
  ActiveMask gt{Tensor<std::uint8_t>({Z, M, M, H}, 0)};
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t h = 0; h < H; ++h) gt.active(z, i, i, h) = 1;
  return gt;
}

inline void mark_all_rows(ActiveMask& gt, std::uint32_t from_row, std::uint32_t col) {
  for (std::uint64_t z = 0; z < gt.batch(); ++z)
    for (std::uint64_t i = from_row; i < gt.query_blocks(); ++i)
      for (std::uint64_t h = 0; h < gt.heads(); ++h)
        if (col <= i) gt.active(z, i, col, h) = 1;
}

// Key blocks holding at least one slash-aligned key for query tile I.
inline void mark_slash_rows(ActiveMask& gt, const BlockGrid& grid, std::uint64_t L,
                            std::uint64_t offset) {
  const std::uint32_t M = grid.num_query_blocks, B = grid.block_size;
  for (std::uint32_t i = 0; i < M; ++i) {
    const std::uint64_t t_lo = static_cast<std::uint64_t>(i) * B;
    const std::uint64_t t_hi = std::min<std::uint64_t>(t_lo + B, L) - 1;
    if (t_hi < offset) continue;
    const std::uint32_t j_lo = grid.block_of(t_lo >= offset ? t_lo - offset : 0);
    const std::uint32_t j_hi = grid.block_of(t_hi - offset);
    for (std::uint32_t j = j_lo; j <= j_hi && j <= i; ++j)
      for (std::uint64_t z = 0; z < gt.batch(); ++z)
        for (std::uint64_t h = 0; h < gt.heads(); ++h) gt.active(z, i, j, h) = 1;
  }
}

struct PlantContext {
  std::uint64_t Z, H, L, d;
  BlockGrid grid;
  float boost;  // raw logit units, strength / tau
};

}  // namespace detail

// Q/K/V with a planted attention structure. Background entries are seeded
// Gaussian noise; the pattern is realized in logit geometry by aligning key
// directions with query directions so target blocks receive a pooled logit
// boost of about strength / tau. The boost amplitude rides on the query
// side (queries add (strength/tau) * u, keys add unit u): key vectors stay
// at the noise scale, so blocks carrying other rows' directions pick up
// only sigma-scale cross logits instead of strength-amplified ones.
inline PlantedWorkload generate_planted(const PlantedSpec& spec, std::uint64_t Z, std::uint64_t H,
                                        std::uint64_t L, std::uint64_t d, std::uint32_t B,
                                        float tau = 0.0f) {
  if (spec.strength < 0.0f) throw ConfigError("strength must be >= 0");
  if (spec.base_noise < 0.0f) throw ConfigError("base_noise must be >= 0");
  const BlockGrid grid = make_block_grid(L, B);
  const std::uint32_t M = grid.num_query_blocks;
  if (tau <= 0.0f) tau = 1.0f / std::sqrt(static_cast<float>(d));
  const float boost = spec.strength / tau;

  Rng rng(spec.rng_seed);
  Tensor<float> q = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  Tensor<float> k = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  Tensor<float> v = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  ActiveMask gt = detail::diagonal_only_mask(Z, H, M);
  std::vector<float> dir(d);

  if (spec.strength > 0.0f) {
    switch (spec.pattern_kind) {
      case PatternKind::kVertical: {
        const std::int64_t col = spec.target_a;
        if (col < 0 || col >= static_cast<std::int64_t>(M))
          throw ValidationError("vertical target block outside grid");
        for (std::uint64_t z = 0; z < Z; ++z)
          for (std::uint64_t h = 0; h < H; ++h) {
            detail::unit_direction(rng, dir.data(), d);
            float* qs = q.data() + ((z * H + h) * L) * d;
            float* ks = k.data() + ((z * H + h) * L) * d;
            for (std::uint64_t t = 0; t < L; ++t)
              detail::add_scaled(qs + t * d, dir.data(), d, boost);
            const std::uint64_t lo = static_cast<std::uint64_t>(col) * B;
            const std::uint64_t hi = std::min<std::uint64_t>(lo + B, L);
            for (std::uint64_t s = lo; s < hi; ++s)
              detail::add_scaled(ks + s * d, dir.data(), d, 1.0f);
          }
        detail::mark_all_rows(gt, static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(col));
        break;
      }
      case PatternKind::kSlash: {
        const std::int64_t offset = spec.target_a;
        if (offset < 1 || offset >= static_cast<std::int64_t>(L))
          throw ValidationError("slash offset outside sequence");
        // One direction per query block; key row t - offset mirrors the
        // direction of query row t, so pooled keys keep the alignment.
        std::vector<float> dirs(static_cast<std::size_t>(M) * d);
        for (std::uint64_t z = 0; z < Z; ++z)
          for (std::uint64_t h = 0; h < H; ++h) {
            for (std::uint32_t i = 0; i < M; ++i)
              detail::unit_direction(rng, dirs.data() + static_cast<std::size_t>(i) * d, d);
            float* qs = q.data() + ((z * H + h) * L) * d;
            float* ks = k.data() + ((z * H + h) * L) * d;
            for (std::uint64_t t = 0; t < L; ++t)
              detail::add_scaled(qs + t * d, dirs.data() + static_cast<std::size_t>(grid.block_of(t)) * d,
                                 d, boost);
            for (std::uint64_t t = static_cast<std::uint64_t>(offset); t < L; ++t)
              detail::add_scaled(ks + (t - offset) * d,
                                 dirs.data() + static_cast<std::size_t>(grid.block_of(t)) * d, d,
                                 1.0f);
          }
        detail::mark_slash_rows(gt, grid, L, static_cast<std::uint64_t>(offset));
        break;
      }
      case PatternKind::kBlock: {
        const std::int64_t row = spec.target_a, col = spec.target_b;
        if (row < 0 || row >= static_cast<std::int64_t>(M) || col < 0 ||
            col >= static_cast<std::int64_t>(M))
          throw ValidationError("block target outside grid");
        if (col > row) throw ValidationError("block target must be causal (col <= row)");
        for (std::uint64_t z = 0; z < Z; ++z)
          for (std::uint64_t h = 0; h < H; ++h) {
            detail::unit_direction(rng, dir.data(), d);
            float* qs = q.data() + ((z * H + h) * L) * d;
            float* ks = k.data() + ((z * H + h) * L) * d;
            const std::uint64_t q_lo = static_cast<std::uint64_t>(row) * B;
            const std::uint64_t q_hi = std::min<std::uint64_t>(q_lo + B, L);
            for (std::uint64_t t = q_lo; t < q_hi; ++t)
              detail::add_scaled(qs + t * d, dir.data(), d, boost);
            const std::uint64_t k_lo = static_cast<std::uint64_t>(col) * B;
            const std::uint64_t k_hi = std::min<std::uint64_t>(k_lo + B, L);
            for (std::uint64_t s = k_lo; s < k_hi; ++s)
              detail::add_scaled(ks + s * d, dir.data(), d, 1.0f);
          }
        for (std::uint64_t z = 0; z < Z; ++z)
          for (std::uint64_t h = 0; h < H; ++h)
            gt.active(z, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col), h) = 1;
        break;
      }
      case PatternKind::kNeedle: {
        const std::int64_t token = spec.target_a;
        if (token < 0 || token >= static_cast<std::int64_t>(L))
          throw ValidationError("needle token outside sequence");
        const std::uint32_t col = grid.block_of(static_cast<std::uint64_t>(token));
        // A single key row carries the whole block's direction mass, so the
        // pooled proxy still sees a boost of about strength / tau.
        const float row_weight = static_cast<float>(grid.block_len(col));
        for (std::uint64_t z = 0; z < Z; ++z)
          for (std::uint64_t h = 0; h < H; ++h) {
            detail::unit_direction(rng, dir.data(), d);
            float* qs = q.data() + ((z * H + h) * L) * d;
            float* ks = k.data() + ((z * H + h) * L) * d;
            for (std::uint64_t t = 0; t < L; ++t)
              detail::add_scaled(qs + t * d, dir.data(), d, boost);
            detail::add_scaled(ks + static_cast<std::uint64_t>(token) * d, dir.data(), d,
                               row_weight);
          }
        detail::mark_all_rows(gt, col, col);
        break;
      }
    }
  }

  return PlantedWorkload{make_sequence_batch(std::move(q), Role::kQuery),
                         make_sequence_batch(std::move(k), Role::kKey),
                         make_sequence_batch(std::move(v), Role::kValue), std::move(gt)};
}

// Slash workload whose query rows alternate sign within each block
// (q, -q, q, -q, ...) while the aligned keys keep the unsigned direction.
// Mean-pooled queries cancel, so methods that pool the query side lose the
// pattern; full-query discovery still resolves it.
inline PlantedWorkload generate_alternating_slash(const PlantedSpec& spec, std::uint64_t Z,
                                                  std::uint64_t H, std::uint64_t L,
                                                  std::uint64_t d, std::uint32_t B,
                                                  float tau = 0.0f) {
  if (spec.pattern_kind != PatternKind::kSlash)
    throw ConfigError("alternating workload requires the slash pattern");
  if (spec.strength <= 0.0f) throw ConfigError("alternating slash requires strength > 0");
  const std::int64_t offset = spec.target_a;
  if (offset < 1 || offset >= static_cast<std::int64_t>(L))
    throw ValidationError("slash offset outside sequence");
  const BlockGrid grid = make_block_grid(L, B);
  const std::uint32_t M = grid.num_query_blocks;
  if (tau <= 0.0f) tau = 1.0f / std::sqrt(static_cast<float>(d));
  const float boost = spec.strength / tau;

  Rng rng(spec.rng_seed);
  Tensor<float> q = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  Tensor<float> k = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  Tensor<float> v = detail::gaussian_tensor(rng, Z, H, L, d, spec.base_noise);
  ActiveMask gt = detail::diagonal_only_mask(Z, H, M);

  std::vector<float> dirs(static_cast<std::size_t>(M) * d);
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t h = 0; h < H; ++h) {
      for (std::uint32_t i = 0; i < M; ++i)
        detail::unit_direction(rng, dirs.data() + static_cast<std::size_t>(i) * d, d);
      float* qs = q.data() + ((z * H + h) * L) * d;
      float* ks = k.data() + ((z * H + h) * L) * d;
      for (std::uint64_t t = 0; t < L; ++t) {
        const float sign = (t % 2 == 0) ? 1.0f : -1.0f;
        detail::add_scaled(qs + t * d, dirs.data() + static_cast<std::size_t>(grid.block_of(t)) * d,
                           d, sign);
      }
      for (std::uint64_t t = static_cast<std::uint64_t>(offset); t < L; ++t)
        detail::add_scaled(ks + (t - offset) * d,
                           dirs.data() + static_cast<std::size_t>(grid.block_of(t)) * d, d, boost);
    }
  detail::mark_slash_rows(gt, grid, L, static_cast<std::uint64_t>(offset));

  return PlantedWorkload{make_sequence_batch(std::move(q), Role::kQuery),
                         make_sequence_batch(std::move(k), Role::kKey),
                         make_sequence_batch(std::move(v), Role::kValue), std::move(gt)};
}

// One normalized score row with a single heavy head and a near-uniform tail,
// every tail entry strictly below alpha * head. Tail entries are drawn in
// compensating pairs, so their sum is exact and max/min never exceeds 2.
struct HeavyTailRow {
  std::vector<float> scores;
  std::uint32_t head_index = 0;
};

inline HeavyTailRow generate_heavy_tail_row(std::uint32_t n_blocks, float head_mass, float alpha,
                                            std::uint64_t rng_seed) {
  if (n_blocks < 2) throw ConfigError("heavy-tail row needs at least 2 blocks");
  if (!(head_mass > 0.0f) || !(head_mass < 1.0f))
    throw ConfigError("head_mass must lie in (0, 1)");
  const double base = (1.0 - head_mass) / (n_blocks - 1);
  if (!(base * (4.0 / 3.0) < static_cast<double>(alpha) * head_mass))
    throw ConfigError("infeasible head_mass/alpha/n: tail entries cannot stay below alpha*head");

  Rng rng(rng_seed);
  HeavyTailRow row;
  row.scores.assign(n_blocks, 0.0f);
  row.head_index = static_cast<std::uint32_t>(rng.uniform() * n_blocks);
  if (row.head_index >= n_blocks) row.head_index = n_blocks - 1;
  row.scores[row.head_index] = head_mass;

  std::vector<std::uint32_t> tail;
  tail.reserve(n_blocks - 1);
  for (std::uint32_t j = 0; j < n_blocks; ++j)
    if (j != row.head_index) tail.push_back(j);
  std::size_t pos = 0;
  for (; pos + 2 <= tail.size(); pos += 2) {
    const double jitter = rng.uniform() / 3.0;  // in [0, 1/3)
    row.scores[tail[pos]] = static_cast<float>(base * (1.0 + jitter));
    row.scores[tail[pos + 1]] = static_cast<float>(base * (1.0 - jitter));
  }
  if (pos < tail.size()) row.scores[tail[pos]] = static_cast<float>(base);
  return row;
}

// Score map (1 x 1 x n x n) whose full causal row (the last one) is a
// generated heavy-tail row; shorter rows are uniform over their causal
// prefix. Field head_index refers to the last row.
struct HeavyTailMap {
  Tensor<float> score;
  std::uint32_t head_index = 0;
};

inline HeavyTailMap heavy_tail_score_map(std::uint32_t n_blocks, float head_mass, float alpha,
                                         std::uint64_t rng_seed) {
  HeavyTailRow row = generate_heavy_tail_row(n_blocks, head_mass, alpha, rng_seed);
  HeavyTailMap map{Tensor<float>({1, 1, n_blocks, n_blocks}, 0.0f), row.head_index};
  for (std::uint32_t i = 0; i + 1 < n_blocks; ++i)
    for (std::uint32_t j = 0; j <= i; ++j)
      map.score(0, 0, i, j) = 1.0f / static_cast<float>(i + 1);
  for (std::uint32_t j = 0; j < n_blocks; ++j) map.score(0, 0, n_blocks - 1, j) = row.scores[j];
  return map;
}

// Full score map (1 x 1 x n x n) where every causal row long enough to meet
// the feasibility bound is an independent heavy-tail row; shorter rows stay
// uniform. head_index holds the per-row head block, or -1 for uniform rows.
struct HeavyTailSweepMap {
  Tensor<float> score;
  std::vector<std::int32_t> head_index;
};

inline HeavyTailSweepMap heavy_tail_sweep_map(std::uint32_t n_blocks, float head_mass,
                                              float alpha, std::uint64_t rng_seed) {
  if (n_blocks < 1) throw ConfigError("heavy-tail map needs at least 1 block");
  HeavyTailSweepMap map{Tensor<float>({1, 1, n_blocks, n_blocks}, 0.0f),
                        std::vector<std::int32_t>(n_blocks, -1)};
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    const std::uint32_t row_len = i + 1;
    const bool feasible =
        row_len >= 2 && (1.0 - head_mass) / (row_len - 1) * (4.0 / 3.0) <
                            static_cast<double>(alpha) * head_mass;
    if (feasible) {
      const HeavyTailRow row = generate_heavy_tail_row(row_len, head_mass, alpha,
                                                       rng_seed * 0x9e3779b97f4a7c15ull + i);
      for (std::uint32_t j = 0; j < row_len; ++j) map.score(0, 0, i, j) = row.scores[j];
      map.head_index[i] = static_cast<std::int32_t>(row.head_index);
    } else {
      for (std::uint32_t j = 0; j < row_len; ++j)
        map.score(0, 0, i, j) = 1.0f / static_cast<float>(row_len);
    }
  }
  return map;
}

}  // namespace bsattn
