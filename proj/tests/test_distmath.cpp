#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/rng.hpp"
#include "reference_impls.hpp"

using namespace ambidist;
using namespace ambidist::distmath;

namespace {

EmotionDistribution dist(std::vector<double> p) {
  return EmotionDistribution::unchecked(std::move(p));
}

AnnotationSet labels(std::vector<int> ids) {
  return AnnotationSet::human(std::move(ids));
}

}  // namespace

TEST_CASE("aggregate_annotations counts labels") {
  // Angry=0, Happy=1, Sad=2, Neutral=3
  const auto d = aggregate_annotations(labels({0, 0, 1}), 4);
  CHECK(d[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(d[2] == 0.0);
  CHECK(d[3] == 0.0);

  const auto point = aggregate_annotations(labels({2}), 4);
  CHECK(point[2] == 1.0);

  // fused multiset: 3 human {A,A,H} + 6 synthetic {A,A,A,N,N,N}
  const auto fused = aggregate_annotations(
      AnnotationSet::fused({0, 0, 1}, {0, 0, 0, 3, 3, 3}), 4);
  CHECK(fused[0] == doctest::Approx(5.0 / 9.0).epsilon(1e-12));
  CHECK(fused[1] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(fused[2] == 0.0);
  CHECK(fused[3] == doctest::Approx(3.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("aggregate_annotations rejects empty and out-of-range input") {
  CHECK_THROWS_AS(aggregate_annotations(labels({}), 4), EmptyAnnotationSet);
  CHECK_THROWS_AS(aggregate_annotations(labels({4}), 4), DimensionMismatch);
}

TEST_CASE("aggregate_annotations is permutation invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids;
    const auto n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back(static_cast<int>(rng.below(4)));
    }
    auto shuffled = ids;
    rng.shuffle(shuffled);
    CHECK(aggregate_annotations(labels(ids), 4).probs() ==
          aggregate_annotations(labels(shuffled), 4).probs());
  }
}

TEST_CASE("js_divergence fixtures") {
  const auto uniform = dist({0.25, 0.25, 0.25, 0.25});
  CHECK(js_divergence(uniform, uniform) == 0.0);

  const auto e0 = dist({1, 0, 0, 0});
  const auto e1 = dist({0, 1, 0, 0});
  CHECK(js_divergence(e0, e1) == doctest::Approx(1.0).epsilon(1e-12));

  const auto half = dist({0.5, 0.5, 0, 0});
  CHECK(js_divergence(half, e0) == doctest::Approx(0.311278).epsilon(1e-6));
}

TEST_CASE("js_divergence validates inputs") {
  CHECK_THROWS_AS(js_divergence(dist({0.5, 0.5}), dist({1, 0, 0})),
                  DimensionMismatch);
  CHECK_THROWS_AS(js_divergence(dist({0.6, 0.6, 0, 0}),
                                dist({1, 0, 0, 0})),
                  NotNormalized);
  // within the 1e-6 tolerance: fine
  CHECK_NOTHROW(js_divergence(dist({0.5 + 4e-7, 0.5, 0, 0}),
                              dist({1, 0, 0, 0})));
}

TEST_CASE("bhattacharyya fixtures") {
  const auto p = dist({0.3, 0.3, 0.2, 0.2});
  CHECK(bhattacharyya(p, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bhattacharyya(dist({1, 0, 0, 0}), dist({0, 1, 0, 0})) == 0.0);
  CHECK(bhattacharyya(dist({0.5, 0.5, 0, 0}), dist({1, 0, 0, 0})) ==
        doctest::Approx(0.707107).epsilon(1e-6));
}

TEST_CASE("shannon_entropy fixtures") {
  CHECK(shannon_entropy(dist({0, 0, 1, 0}), true) == 0.0);
  CHECK(shannon_entropy(dist({0.25, 0.25, 0.25, 0.25}), true) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shannon_entropy(dist({0.25, 0.25, 0.25, 0.25}), false) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(shannon_entropy(dist({0.5, 0.5, 0, 0}), true) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("entropy is uniquely maximized by the uniform distribution") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = refimpl::random_distribution(rng, 4);
    const double h = shannon_entropy(dist(p), true);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    const bool uniform = std::all_of(p.begin(), p.end(), [](double v) {
      return std::abs(v - 0.25) < 1e-9;
    });
    if (!uniform) CHECK(h < 1.0);
  }
}

TEST_CASE("metric properties on random distribution pairs") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pv = refimpl::random_distribution(rng, 4);
    const auto qv = refimpl::random_distribution(rng, 4);
    const auto p = dist(pv), q = dist(qv);
    const double ab = js_divergence(p, q);
    const double ba = js_divergence(q, p);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(js_divergence(p, p) == 0.0);

    const double bc = bhattacharyya(p, q);
    CHECK(bc >= 0.0);
    CHECK(bc <= 1.0);
    bool disjoint = true;
    for (std::size_t c = 0; c < pv.size(); ++c) {
      if (pv[c] > 0 && qv[c] > 0) disjoint = false;
    }
    if (disjoint) {
      CHECK(bc == 0.0);
    } else {
      CHECK(bc > 0.0);
    }
  }
}

TEST_CASE("metrics agree with independent implementations to 1e-9") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pv = refimpl::random_distribution(rng, 4);
    const auto qv = refimpl::random_distribution(rng, 4);
    CHECK(js_divergence(dist(pv), dist(qv)) ==
          doctest::Approx(refimpl::ref_jsd(pv, qv)).epsilon(1e-9));
    CHECK(bhattacharyya(dist(pv), dist(qv)) ==
          doctest::Approx(refimpl::ref_bc(pv, qv)).epsilon(1e-9));
    CHECK(shannon_entropy(dist(pv), false) ==
          doctest::Approx(refimpl::ref_entropy_bits(pv)).epsilon(1e-9));
  }
}

TEST_CASE("fleiss_kappa: perfect agreement over varying categories") {
  // unanimity on different categories keeps chance agreement < 1
  const std::vector<std::vector<int>> sets = {
      {0, 0, 0}, {1, 1, 1}, {0, 0, 0}, {2, 2, 2}};
  CHECK(fleiss_kappa(sets, 4) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fleiss_kappa: hand-evaluated 3x3 fixture is exactly 0.55") {
  const std::vector<std::vector<int>> sets = {
      {0, 0, 0}, {0, 0, 1}, {1, 1, 1}};
  CHECK(fleiss_kappa(sets, 2) == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("fleiss_kappa: ragged rater counts match the direct formula") {
  const std::vector<std::vector<int>> sets = {{0, 0, 0}, {0, 0, 0, 1, 1}};
  const double kappa = fleiss_kappa(sets, 2);
  CHECK(kappa == doctest::Approx(refimpl::ref_fleiss_ragged(sets, 2))
                     .epsilon(1e-12));
  // P_1 = 1, P_2 = 8/20, Pbar = 0.7, p = (0.75, 0.25), Pe = 0.625
  CHECK(kappa == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("fleiss_kappa: equal rater counts equal the textbook formula") {
  Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    const int raters = 3 + static_cast<int>(rng.below(4));
    const std::size_t items = 4 + rng.below(10);
    std::vector<std::vector<int>> sets(items);
    std::vector<std::vector<int>> counts(items, std::vector<int>(4, 0));
    for (std::size_t i = 0; i < items; ++i) {
      for (int r = 0; r < raters; ++r) {
        const auto c = static_cast<int>(rng.below(4));
        sets[i].push_back(c);
        counts[i][static_cast<std::size_t>(c)]++;
      }
    }
    const double expected = refimpl::ref_fleiss_equal(counts, raters);
    if (!std::isfinite(expected)) continue;  // degenerate random draw
    CHECK(fleiss_kappa(sets, 4) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("fleiss_kappa error and degenerate paths") {
  CHECK_THROWS_AS(fleiss_kappa({{0, 1, 1}, {0}}, 4), InsufficientRaters);
  CHECK_THROWS_AS(fleiss_kappa({{0, 1}}, 4), InsufficientRaters);

  std::vector<std::string> warnings;
  const double kappa =
      fleiss_kappa({{1, 1, 1}, {1, 1, 1}}, 4, &warnings);
  CHECK(kappa == 1.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("P_e = 1") != std::string::npos);
}

TEST_CASE("dominant_emotion argmax with index tie-break") {
  CHECK(dominant_emotion(dist({0.6, 0.2, 0.1, 0.1})) == 0);
  CHECK(dominant_emotion(dist({0.5, 0.5, 0, 0})) == 0);
  CHECK(dominant_emotion(dist({0.1, 0.2, 0.2, 0.5})) == 3);
  CHECK(dominant_emotion(aggregate_annotations(labels({1, 1, 2}), 4)) == 1);
}
