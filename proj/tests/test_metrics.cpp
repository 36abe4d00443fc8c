#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "llmcer/error.hpp"
#include "llmcer/metrics.hpp"
#include "metric_oracles.hpp"

using namespace llmcer;
using namespace llmcer::testing;

namespace {

// A,B,C,D = 0,1,2,3
Partition P(std::vector<std::vector<RecordIndex>> c) { return Partition{std::move(c)}; }

}  // namespace

TEST_CASE("acc examples") {
    CHECK(acc(P({{0, 1}, {2}}), P({{0, 1}, {2}})) == 1.0);
    CHECK(acc(P({{0}, {1}, {2}, {3}}), P({{0, 1, 2, 3}})) == doctest::Approx(0.25));
    CHECK(acc(P({{0, 1}, {2}}), P({{0}, {1, 2}})) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("fp examples") {
    CHECK(fp_measure(P({{0, 1}, {2, 3}}), P({{0, 1}, {2, 3}})) == 1.0);
    CHECK(purity(P({{0}, {1}, {2}, {3}}), P({{0, 1, 2, 3}})) == doctest::Approx(1.0));
    CHECK(inverse_purity(P({{0}, {1}, {2}, {3}}), P({{0, 1, 2, 3}})) == doctest::Approx(0.25));
    CHECK(fp_measure(P({{0}, {1}, {2}, {3}}), P({{0, 1, 2, 3}})) == doctest::Approx(0.4));
    CHECK(fp_measure(P({{0, 1}, {2, 3}}), P({{0, 1, 2, 3}})) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("nmi examples") {
    CHECK(nmi(P({{0, 1}, {2, 3}}), P({{0, 1}, {2, 3}})) == doctest::Approx(1.0));
    CHECK(nmi(P({{0, 1}, {2, 3}}), P({{0, 2}, {1, 3}})) == doctest::Approx(0.0));
    CHECK(std::abs(nmi(P({{0, 1, 2}, {3}}), P({{0, 1}, {2, 3}})) - 0.3437) <= 1e-4);
    CHECK(nmi(P({{0, 1, 2, 3}}), P({{0, 1, 2, 3}})) == 1.0);
    CHECK(nmi(P({{0, 1, 2, 3}}), P({{0, 1}, {2, 3}})) == 0.0);
}

TEST_CASE("ari examples") {
    CHECK(ari(P({{0, 1}, {2, 3}}), P({{0, 1}, {2, 3}})) == doctest::Approx(1.0));
    CHECK(ari(P({{0, 1}, {2, 3}}), P({{0, 2}, {1, 3}})) == doctest::Approx(-0.5));
    CHECK(ari(P({{0, 1, 2}, {3}}), P({{0, 1}, {2, 3}})) == doctest::Approx(0.0));
    CHECK(ari(P({{0}, {1}, {2}}), P({{0}, {1}, {2}})) == 1.0);
    CHECK_THROWS_AS(ari(P({{0}}), P({{0}})), Error);
}

TEST_CASE("pairwise f1 examples") {
    const auto s = pairwise_f1(P({{0, 1}, {2, 3}}), P({{0, 1, 2, 3}}));
    CHECK(s.precision == doctest::Approx(1.0));
    CHECK(s.recall == doctest::Approx(1.0 / 3.0));
    CHECK(s.f1 == doctest::Approx(0.5));
    const auto z = pairwise_f1(P({{0}, {1}, {2}}), P({{0, 1}, {2}}));
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
}

TEST_CASE("mismatched universes are rejected") {
    CHECK_THROWS_AS(acc(P({{0, 1}}), P({{0}, {2}})), Error);
    CHECK_THROWS_AS(evaluate(P({{0, 1}}), P({{0}})), Error);
}

TEST_CASE("metrics agree with brute-force oracles on random partitions") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 9;
        const auto pred = random_partition(rng, n, 6);
        const auto truth = random_partition(rng, n, 6);
        CHECK(std::abs(acc(pred, truth) - brute_acc(pred, truth)) <= 1e-9);
        CHECK(std::abs(fp_measure(pred, truth) - naive_fp(pred, truth)) <= 1e-9);
        CHECK(std::abs(nmi(pred, truth) - naive_nmi(pred, truth)) <= 1e-9);
        CHECK(std::abs(ari(pred, truth) - naive_ari(pred, truth)) <= 1e-9);
    }
}

TEST_CASE("metrics are invariant to relabeling and equal 1 on identity") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 9;
        const auto a = random_partition(rng, n, 6);
        auto b = random_partition(rng, n, 6);
        auto shuffled = b;
        std::shuffle(shuffled.clusters.begin(), shuffled.clusters.end(), rng);
        const auto m1 = evaluate(a, b);
        const auto m2 = evaluate(a, shuffled);
        CHECK(m1.acc == doctest::Approx(m2.acc));
        CHECK(m1.nmi == doctest::Approx(m2.nmi));
        CHECK(m1.ari == doctest::Approx(m2.ari));
        const auto id = evaluate(b, b);
        CHECK(id.acc == doctest::Approx(1.0));
        CHECK(id.fp == doctest::Approx(1.0));
        CHECK(id.nmi == doctest::Approx(1.0));
        CHECK(id.ari == doctest::Approx(1.0));

        // acc is at least the largest single overlap.
        const auto t = ContingencyTable::build(a, b);
        std::size_t best = 0;
        for (const auto& row : t.t) best = std::max(best, *std::max_element(row.begin(), row.end()));
        CHECK(acc(a, b) >= static_cast<double>(best) / static_cast<double>(n) - 1e-12);
    }
}
