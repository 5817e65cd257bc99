#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "bsattn/selection.hpp"
#include "bsattn/workloads.hpp"

using namespace bsattn;

namespace {

// Minimal structural retention: no sinks, diagonal-only window.
PipelineConfig bare_config(float alpha) {
  PipelineConfig config;
  config.alpha = alpha;
  config.sink_tokens = 0;
  config.window_tokens = 1;
  config.block_size = 1;
  return config;
}

// Score map with a single populated row (the last one); other rows uniform.
Tensor<float> single_row_map(const std::vector<float>& row) {
  const std::uint32_t n = static_cast<std::uint32_t>(row.size());
  Tensor<float> score({1, 1, n, n}, 0.0f);
  for (std::uint32_t i = 0; i + 1 < n; ++i)
    for (std::uint32_t j = 0; j <= i; ++j) score(0, 0, i, j) = 1.0f / static_cast<float>(i + 1);
  for (std::uint32_t j = 0; j < n; ++j) score(0, 0, n - 1, j) = row[j];
  return score;
}

std::set<std::uint32_t> active_set(const ActiveMask& mask, std::uint64_t z, std::uint64_t i,
                                   std::uint64_t h) {
  std::set<std::uint32_t> s;
  for (std::uint64_t j = 0; j < mask.key_blocks(); ++j)
    if (mask.active(z, i, j, h)) s.insert(static_cast<std::uint32_t>(j));
  return s;
}

ActiveMask random_causal_mask(std::mt19937_64& eng, std::uint64_t Z, std::uint64_t M,
                              std::uint64_t H, double fill = 0.4) {
  ActiveMask mask{Tensor<std::uint8_t>({Z, M, M, H}, 0)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t z = 0; z < Z; ++z)
    for (std::uint64_t i = 0; i < M; ++i)
      for (std::uint64_t h = 0; h < H; ++h) {
        mask.active(z, i, i, h) = 1;  // diagonal always on
        for (std::uint64_t j = 0; j < i; ++j)
          if (u(eng) < fill) mask.active(z, i, j, h) = 1;
      }
  return mask;
}

}  // namespace

TEST_CASE("max_threshold_mask") {
  SECTION("hand enumeration of the three predicates") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    const auto mask = max_threshold_mask(score, bare_config(0.5f));
    // thresh = 0.25 -> score keeps {0,1}; window keeps {3}
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 1, 3});
  }
  SECTION("alpha = 0 keeps every causal block") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    const auto mask = max_threshold_mask(score, bare_config(0.0f));
    for (std::uint64_t i = 0; i < 4; ++i)
      CHECK(active_set(mask, 0, i, 0).size() == static_cast<std::size_t>(i + 1));
  }
  SECTION("alpha = 1 on a strict-maximum row keeps argmax plus diagonal") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    const auto mask = max_threshold_mask(score, bare_config(1.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 3});
  }
  SECTION("sink and window retention ignore scores") {
    Tensor<float> score({1, 1, 8, 8}, 0.0f);
    for (std::uint32_t i = 0; i < 8; ++i) score(0, 0, i, i) = 1.0f;
    PipelineConfig config = bare_config(1.0f);
    config.block_size = 128;
    config.sink_tokens = 256;   // 2 sink blocks
    config.window_tokens = 300; // 3 window blocks
    const auto mask = max_threshold_mask(score, config);
    for (std::uint64_t i = 0; i < 8; ++i) {
      const auto set = active_set(mask, 0, i, 0);
      for (std::uint32_t j = 0; j < std::min<std::uint32_t>(2, static_cast<std::uint32_t>(i) + 1);
           ++j)
        CHECK(set.count(j) == 1);
      for (std::uint32_t back = 0; back < 3 && back <= i; ++back)
        CHECK(set.count(static_cast<std::uint32_t>(i) - back) == 1);
    }
  }
  SECTION("monotonicity in alpha") {
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor<float> score({1, 2, 6, 6}, 0.0f);
    for (std::uint64_t h = 0; h < 2; ++h)
      for (std::uint32_t i = 0; i < 6; ++i)
        for (std::uint32_t j = 0; j <= i; ++j) score(0, h, i, j) = u(eng);
    const float alphas[] = {0.0f, 0.1f, 0.3f, 0.7f, 1.0f};
    BlockGrid grid = make_block_grid(6, 1);
    double prev_density = 2.0;
    for (const float alpha : alphas) {
      const auto mask = max_threshold_mask(score, bare_config(alpha));
      const auto plan = compress_indices(mask);
      const double dens = density(plan, grid);
      CHECK(dens <= prev_density + 1e-12);
      prev_density = dens;
    }
  }
  SECTION("single-pass contract: comparisons only, exactly two per causal cell") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    SelectionStats stats;
    max_threshold_mask(score, bare_config(0.5f), &stats);
    // one max-scan comparison and one threshold comparison per causal cell
    std::uint64_t causal_cells = 0;
    for (std::uint64_t i = 0; i < 4; ++i) causal_cells += i + 1;
    CHECK(stats.score_comparisons == 2 * causal_cells);
  }
}

TEST_CASE("compress_indices") {
  SECTION("fill-and-compact example") {
    ActiveMask mask{Tensor<std::uint8_t>({1, 1, 4, 1}, 0)};
    mask.active(0, 0, 0, 0) = 1;
    mask.active(0, 0, 2, 0) = 1;
    const auto plan = compress_indices(mask);
    CHECK(plan.counts(0, 0, 0) == 2);
    CHECK(plan.indices(0, 0, 0, 0) == 0);
    CHECK(plan.indices(0, 0, 1, 0) == 2);
    CHECK(plan.indices(0, 0, 2, 0) == 4);
    CHECK(plan.indices(0, 0, 3, 0) == 4);
  }
  SECTION("all-active row") {
    ActiveMask mask{Tensor<std::uint8_t>({1, 1, 3, 1}, 1)};
    const auto plan = compress_indices(mask);
    CHECK(plan.counts(0, 0, 0) == 3);
    for (std::uint32_t j = 0; j < 3; ++j)
      CHECK(plan.indices(0, 0, j, 0) == static_cast<std::int32_t>(j));
  }
  SECTION("plan and mask determine each other on random masks") {
    std::mt19937_64 eng(9);
    for (int trial = 0; trial < 200; ++trial) {
      const std::uint64_t Z = 1 + eng() % 2, M = 1 + eng() % 9, H = 1 + eng() % 3;
      const auto mask = random_causal_mask(eng, Z, M, H);
      const auto plan = compress_indices(mask);
      for (std::uint64_t z = 0; z < Z; ++z)
        for (std::uint64_t i = 0; i < M; ++i)
          for (std::uint64_t h = 0; h < H; ++h) {
            const std::int32_t count = plan.counts(z, i, h);
            std::set<std::uint32_t> from_plan;
            for (std::int32_t c = 0; c < count; ++c) {
              const std::int32_t idx = plan.indices(z, i, static_cast<std::uint64_t>(c), h);
              CHECK(idx < static_cast<std::int32_t>(M));  // fill value never inside the prefix
              if (c > 0)
                CHECK(plan.indices(z, i, static_cast<std::uint64_t>(c - 1), h) < idx);
              from_plan.insert(static_cast<std::uint32_t>(idx));
            }
            for (std::uint64_t c = count; c < M; ++c)
              CHECK(plan.indices(z, i, c, h) == static_cast<std::int32_t>(M));
            CHECK(from_plan == active_set(mask, z, i, h));
          }
    }
  }
}

TEST_CASE("topk_select") {
  SECTION("two largest") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    const auto mask = topk_select(score, 2, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 1, 3});  // window adds 3
  }
  SECTION("k >= i+1 saturates") {
    const auto score = single_row_map({0.50f, 0.30f, 0.05f, 0.15f});
    const auto mask = topk_select(score, 9, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 1, 2, 3});
  }
  SECTION("ties break toward the lower block index") {
    const auto score = single_row_map({0.25f, 0.25f, 0.25f, 0.25f});
    const auto mask = topk_select(score, 2, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 1, 3});
  }
  SECTION("selected set equals brute-force sort-and-take-k") {
    std::mt19937_64 eng(13);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
      const std::uint32_t n = 2 + static_cast<std::uint32_t>(eng() % 10);
      std::vector<float> row(n);
      for (auto& v : row) v = u(eng);
      const std::uint32_t k = 1 + static_cast<std::uint32_t>(eng() % n);
      const auto mask = topk_select(single_row_map(row), k, bare_config(0.0f));

      std::vector<std::uint32_t> idx(n);
      for (std::uint32_t j = 0; j < n; ++j) idx[j] = j;
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b]; });
      std::set<std::uint32_t> expect(idx.begin(), idx.begin() + k);
      expect.insert(n - 1);  // diagonal retention
      CHECK(active_set(mask, 0, n - 1, 0) == expect);
    }
  }
}

TEST_CASE("topp_select") {
  SECTION("hand cumulative sum") {
    const auto score = single_row_map({0.50f, 0.30f, 0.15f, 0.05f});
    const auto mask = topp_select(score, 0.9f, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 1, 2, 3});  // window adds 3
  }
  SECTION("p = 1 takes all nonzero-score causal blocks") {
    const auto score = single_row_map({0.5f, 0.0f, 0.3f, 0.2f});
    const auto mask = topp_select(score, 1.0f, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 2, 3});
  }
  SECTION("single-block row is active for any p") {
    const auto score = single_row_map({0.4f, 0.3f, 0.2f, 0.1f});
    for (const float p : {0.01f, 0.5f, 1.0f}) {
      const auto mask = topp_select(score, p, bare_config(0.0f));
      CHECK(active_set(mask, 0, 0, 0) == std::set<std::uint32_t>{0});
    }
  }
  SECTION("renormalization makes sub-unit rows behave conventionally") {
    // row sums to 0.5; after renormalization p=0.6 needs the top entry only
    const auto score = single_row_map({0.35f, 0.05f, 0.05f, 0.05f});
    const auto mask = topp_select(score, 0.6f, bare_config(0.0f));
    CHECK(active_set(mask, 0, 3, 0) == std::set<std::uint32_t>{0, 3});
  }
}

TEST_CASE("long-tail pruning: max-threshold under-selects top-p on heavy tails") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto map = heavy_tail_score_map(16, 0.7f, 0.2f, seed);
    const auto config = bare_config(0.2f);
    const auto max_mask = max_threshold_mask(map.score, config);
    const auto topp_mask = topp_select(map.score, 0.9f, config);
    const auto max_set = active_set(max_mask, 0, 15, 0);
    const auto topp_set = active_set(topp_mask, 0, 15, 0);
    // strict subset
    CHECK(max_set.size() < topp_set.size());
    for (const auto j : max_set) CHECK(topp_set.count(j) == 1);
    // the head always survives its own threshold
    CHECK(max_set.count(map.head_index) == 1);
  }
}

TEST_CASE("density") {
  const BlockGrid grid = make_block_grid(8, 1);
  SECTION("all-causal-active plan has density 1") {
    ActiveMask mask{Tensor<std::uint8_t>({2, 8, 8, 3}, 0)};
    for (std::uint64_t z = 0; z < 2; ++z)
      for (std::uint64_t i = 0; i < 8; ++i)
        for (std::uint64_t j = 0; j <= i; ++j)
          for (std::uint64_t h = 0; h < 3; ++h) mask.active(z, i, j, h) = 1;
    CHECK(density(compress_indices(mask), grid) == Catch::Approx(1.0));
  }
  SECTION("diagonal-only plan has density 2/(M+1)") {
    ActiveMask mask{Tensor<std::uint8_t>({1, 8, 8, 1}, 0)};
    for (std::uint64_t i = 0; i < 8; ++i) mask.active(0, i, i, 0) = 1;
    CHECK(density(compress_indices(mask), grid) == Catch::Approx(2.0 / 9.0));
  }
  SECTION("random plans match an independent mask popcount") {
    std::mt19937_64 eng(23);
    for (int trial = 0; trial < 30; ++trial) {
      const std::uint64_t Z = 1 + eng() % 2, H = 1 + eng() % 2;
      const auto mask = random_causal_mask(eng, Z, 8, H);
      std::uint64_t popcount = 0;
      for (std::uint64_t z = 0; z < Z; ++z)
        for (std::uint64_t i = 0; i < 8; ++i)
          for (std::uint64_t j = 0; j <= i; ++j)
            for (std::uint64_t h = 0; h < H; ++h) popcount += mask.active(z, i, j, h);
      const double expect =
          static_cast<double>(popcount) / (static_cast<double>(Z) * H * (8.0 * 9.0 / 2.0));
      CHECK(density(compress_indices(mask), grid) == Catch::Approx(expect));
    }
  }
}

TEST_CASE("selector parameter validation") {
  const auto score = single_row_map({0.5f, 0.5f});
  CHECK_THROWS_AS(topk_select(score, 0, bare_config(0.0f)), ConfigError);
  CHECK_THROWS_AS(topp_select(score, 0.0f, bare_config(0.0f)), ConfigError);
  CHECK_THROWS_AS(topp_select(score, 1.5f, bare_config(0.0f)), ConfigError);
}
