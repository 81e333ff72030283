#include <doctest.h>

#include <algorithm>
#include <random>

#include "../support/test_support.hpp"
#include "capreward/embedding.hpp"
#include "capreward/errors.hpp"

using namespace capreward;
using testsupport::naive_diversity;
using testsupport::to_embeddings;

TEST_CASE("cosine_similarity worked values") {
    CHECK(cosine_similarity(EmbeddingVector({1, 0}), EmbeddingVector({0, 1})) == 0.0);
    CHECK(cosine_similarity(EmbeddingVector({1, 0}), EmbeddingVector({1, 0})) == 1.0);
    CHECK(cosine_similarity(EmbeddingVector({1, 1}), EmbeddingVector({1, 0})) ==
          doctest::Approx(0.70710678).epsilon(1e-9));
}

TEST_CASE("cosine_similarity errors") {
    CHECK_THROWS_AS(cosine_similarity(EmbeddingVector({1, 0}), EmbeddingVector({1, 0, 0})),
                    DimensionMismatch);
    CHECK_THROWS_AS(cosine_similarity(EmbeddingVector({0, 0}), EmbeddingVector({1, 0})),
                    ZeroVector);
    CHECK_THROWS_AS(EmbeddingVector({1.0, std::nan("")}), NonFiniteValue);
    CHECK_THROWS_AS(EmbeddingVector(std::vector<double>{}), PreconditionError);
}

TEST_CASE("cosine_similarity is symmetric") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        auto s = to_embeddings(testsupport::random_set(rng, 2, 7));
        CHECK(cosine_similarity(s[0], s[1]) == cosine_similarity(s[1], s[0]));
    }
}

TEST_CASE("diversity worked values") {
    SUBCASE("identical vectors") {
        auto r = diversity(to_embeddings({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}}));
        CHECK(r.v == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(r.pair_count == 3);
    }
    SUBCASE("two vectors always zero") {
        auto r = diversity(to_embeddings({{1, 2, 3}, {-4, 0.5, 9}}));
        CHECK(r.v == 0.0);
        CHECK(r.pair_count == 1);
    }
    SUBCASE("two parallel plus one orthogonal") {
        auto r = diversity(to_embeddings({{1, 0}, {1, 0}, {0, 1}}));
        CHECK(std::abs(r.v - 2.0 / 9.0) < 1e-9);
        CHECK(std::abs(r.mean_similarity - 1.0 / 3.0) < 1e-9);
    }
}

TEST_CASE("diversity errors") {
    CHECK_THROWS_AS(diversity(to_embeddings({{1, 0}})), TooFewQueries);
    CHECK_THROWS_AS(diversity(to_embeddings({{1, 0}, {0, 0}})), ZeroVector);
    CHECK_THROWS_AS(diversity(to_embeddings({{1, 0}, {1, 0, 0}})), DimensionMismatch);
}

TEST_CASE("diversity matches pair enumeration") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = 2 + rng() % 49;
        const std::size_t d = 1 + rng() % 64;
        auto raw = testsupport::random_set(rng, m, d);
        CHECK(std::abs(diversity(to_embeddings(raw)).v - naive_diversity(raw)) < 1e-9);
    }
}

TEST_CASE("diversity is permutation invariant") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 100; ++t) {
        auto raw = testsupport::random_set(rng, 3 + rng() % 20, 8);
        const double v = diversity(to_embeddings(raw)).v;
        std::shuffle(raw.begin(), raw.end(), rng);
        CHECK(std::abs(diversity(to_embeddings(raw)).v - v) < 1e-12);
    }
}

TEST_CASE("diversity ignores positive rescaling") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int t = 0; t < 100; ++t) {
        auto raw = testsupport::random_set(rng, 3 + rng() % 20, 8);
        const double v = diversity(to_embeddings(raw)).v;
        const double s = scale(rng);
        for (auto& x : raw[rng() % raw.size()]) x *= s;
        CHECK(std::abs(diversity(to_embeddings(raw)).v - v) < 1e-12);
    }
}

TEST_CASE("diversity is zero when all pairwise cosines agree") {
    CHECK(diversity(to_embeddings({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})).v == 0.0);
    // Regular simplex in the plane: every pair at cosine -1/2.
    const double s = std::sqrt(3.0) / 2.0;
    CHECK(diversity(to_embeddings({{1, 0}, {-0.5, s}, {-0.5, -s}})).v < 1e-15);
    // Unequal cosines give a strictly positive score.
    CHECK(diversity(to_embeddings({{1, 0}, {1, 0.1}, {0, 1}})).v > 0.0);
}

TEST_CASE("least_contributing_index worked values") {
    SUBCASE("four vectors") {
        auto e = to_embeddings({{1, 0}, {1, 0}, {0, 1}, {0.7071, 0.7071}});
        CHECK(least_contributing_index(e) == 3);
        auto c = diversity_contributions(e);
        CHECK(std::abs(c[3] - (-0.0761844635)) < 1e-6);
        e.erase(e.begin() + 3);
        CHECK(std::abs(diversity(e).v - 2.0 / 9.0) < 1e-9);
    }
    SUBCASE("symmetric three: ties go to the lowest index") {
        auto e = to_embeddings({{1, 0}, {1, 0}, {0, 1}});
        CHECK(least_contributing_index(e) == 0);
        for (double c : diversity_contributions(e)) CHECK(std::abs(c - 2.0 / 9.0) < 1e-12);
    }
    SUBCASE("orthogonal three") {
        CHECK(least_contributing_index(to_embeddings({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})) == 0);
    }
    CHECK_THROWS_AS(least_contributing_index(to_embeddings({{1, 0}, {0, 1}})), TooFewQueries);
}

TEST_CASE("least_contributing_index matches exhaustive leave-one-out") {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = 3 + rng() % 18;
        auto raw = testsupport::random_set(rng, m, 1 + rng() % 16);
        const auto [want, want_delta] = testsupport::naive_least_contributing(raw);
        const auto e = to_embeddings(raw);
        const auto got = least_contributing_index(e);
        if (got != want) {
            // Only acceptable on a numerical tie.
            CHECK(std::abs(diversity_contributions(e)[got] - want_delta) < 1e-12);
        }
    }
}
