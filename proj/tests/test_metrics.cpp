#include <catch2/catch_amalgamated.hpp>

#include "bsattn/metrics.hpp"

using namespace bsattn;

TEST_CASE("spearman") {
  SECTION("perfect monotone agreement") {
    const float a[] = {0.1f, 0.4f, 0.2f, 0.9f};
    const float b[] = {1.0f, 3.0f, 2.0f, 8.0f};
    CHECK(spearman(a, b, 4) == Catch::Approx(1.0));
  }
  SECTION("perfect inversion") {
    const float a[] = {1.0f, 2.0f, 3.0f};
    const float b[] = {5.0f, 4.0f, 3.0f};
    CHECK(spearman(a, b, 3) == Catch::Approx(-1.0));
  }
  SECTION("hand-computed value with a swap") {
    // ranks a: 1 2 3 4 ; ranks b: 2 1 3 4 -> rho = 1 - 6*2/(4*15) = 0.8
    const float a[] = {1.0f, 2.0f, 3.0f, 4.0f};
    const float b[] = {2.0f, 1.0f, 3.0f, 4.0f};
    CHECK(spearman(a, b, 4) == Catch::Approx(0.8));
  }
  SECTION("ties receive averaged ranks") {
    const float a[] = {1.0f, 1.0f, 2.0f};
    const float b[] = {3.0f, 3.0f, 4.0f};
    CHECK(spearman(a, b, 3) == Catch::Approx(1.0));
  }
  SECTION("constant side yields NaN") {
    const float a[] = {1.0f, 1.0f, 1.0f};
    const float b[] = {1.0f, 2.0f, 3.0f};
    CHECK(std::isnan(spearman(a, b, 3)));
  }
}

TEST_CASE("planted recall metrics") {
  // 3-block map: plant (2, 0) in ground truth, plus the diagonal.
  ActiveMask gt{Tensor<std::uint8_t>({1, 3, 3, 1}, 0)};
  for (std::uint64_t i = 0; i < 3; ++i) gt.active(0, i, i, 0) = 1;
  gt.active(0, 2, 0, 0) = 1;

  Tensor<float> score({1, 1, 3, 3}, 0.0f);
  score(0, 0, 0, 0) = 1.0f;
  score(0, 0, 1, 0) = 0.5f;
  score(0, 0, 1, 1) = 0.5f;
  score(0, 0, 2, 0) = 0.6f;
  score(0, 0, 2, 1) = 0.3f;
  score(0, 0, 2, 2) = 0.1f;

  SECTION("threshold recall counts planted blocks reaching alpha * row max") {
    CHECK(planted_score_recall(score, gt, 0.5f) == Catch::Approx(1.0));
    score(0, 0, 2, 0) = 0.05f;  // drops below 0.5 * 0.3
    CHECK(planted_score_recall(score, gt, 0.5f) == Catch::Approx(0.0));
  }

  SECTION("top1 recall counts rows whose argmax is planted") {
    CHECK(planted_top1_recall(score, gt) == Catch::Approx(1.0));
    score(0, 0, 2, 1) = 0.9f;
    CHECK(planted_top1_recall(score, gt) == Catch::Approx(0.0));
  }

  SECTION("vacuous when nothing is planted") {
    ActiveMask diag{Tensor<std::uint8_t>({1, 3, 3, 1}, 0)};
    for (std::uint64_t i = 0; i < 3; ++i) diag.active(0, i, i, 0) = 1;
    CHECK(planted_score_recall(score, diag, 0.5f) == Catch::Approx(1.0));
    CHECK(planted_top1_recall(score, diag) == Catch::Approx(1.0));
  }
}

TEST_CASE("mask overlap metrics") {
  ActiveMask gt{Tensor<std::uint8_t>({1, 2, 2, 1}, 0)};
  gt.active(0, 0, 0, 0) = 1;
  gt.active(0, 1, 0, 0) = 1;
  gt.active(0, 1, 1, 0) = 1;

  ActiveMask mask{Tensor<std::uint8_t>({1, 2, 2, 1}, 0)};
  mask.active(0, 0, 0, 0) = 1;
  mask.active(0, 1, 1, 0) = 1;

  CHECK(mask_recall(mask, gt) == Catch::Approx(2.0 / 3.0));
  CHECK(mask_precision(mask, gt) == Catch::Approx(1.0));
}

TEST_CASE("tensor error stats") {
  Tensor<float> a({2, 2}, 1.0f);
  Tensor<float> b({2, 2}, 1.0f);
  b.data()[2] = 1.5f;
  const auto e = tensor_error(a, b);
  CHECK(e.max_abs == Catch::Approx(0.5));
  CHECK(e.mean_abs == Catch::Approx(0.125));
  CHECK_THROWS_AS(tensor_error(a, Tensor<float>({3})), ValidationError);
}
