#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "llmcer/error.hpp"
#include "llmcer/set_builder.hpp"
#include "planted.hpp"

using namespace llmcer;
using namespace llmcer::testing;

namespace {

std::vector<Point> blobs(std::size_t count, std::size_t per_blob, std::uint64_t seed, double spread = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, spread);
    std::vector<Point> points;
    for (std::size_t b = 0; b < count; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            Point p(std::max<std::size_t>(count, 3), 0.0);
            p[b] = 10.0;
            for (double& x : p) x += normal(rng);
            points.push_back(p);
        }
    }
    return points;
}

std::vector<Record> dummy_records(std::size_t n) {
    std::vector<Record> r;
    for (std::size_t i = 0; i < n; ++i) {
        r.push_back(Record{std::to_string(i), {Attribute{"v", "x" + std::to_string(i), AttributeKind::textual}},
                           std::nullopt});
    }
    return r;
}

}  // namespace

TEST_CASE("variation examples") {
    const std::vector<std::size_t> even{3, 3, 3}, one{5}, two{2, 4};
    CHECK(variation(even) == 0.0);
    CHECK(variation(one) == 0.0);
    CHECK(std::abs(variation(two) - 1.0 / 3.0) <= 1e-9);
    CHECK_THROWS_AS(variation(std::vector<std::size_t>{}), Error);
    CHECK_THROWS_AS(variation(std::vector<std::size_t>{2, 0}), Error);
}

TEST_CASE("variation is scale invariant and zero only for equal sizes") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> sizes(1 + rng() % 6);
        for (auto& s : sizes) s = 1 + rng() % 9;
        auto scaled = sizes;
        for (auto& s : scaled) s *= 3;
        const double v = variation(sizes);
        CHECK(v >= 0.0);
        CHECK(v == doctest::Approx(variation(scaled)));
        const bool equal = std::adjacent_find(sizes.begin(), sizes.end(), std::not_equal_to<>()) == sizes.end();
        CHECK((v == 0.0) == equal);
    }
}

TEST_CASE("kmeans examples") {
    const auto points = blobs(2, 10, 3);
    SUBCASE("k = n puts every point alone") {
        const auto r = kmeans(points, points.size(), 1);
        CHECK(r.sse == doctest::Approx(0.0));
        auto a = r.assignment;
        std::sort(a.begin(), a.end());
        CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    }
    SUBCASE("k = 1 centroid is the mean") {
        const auto r = kmeans(points, 1, 1);
        for (std::size_t d = 0; d < 3; ++d) {
            double mean = 0.0;
            for (const auto& p : points) mean += p[d];
            CHECK(r.centroids[0][d] == doctest::Approx(mean / points.size()));
        }
    }
    SUBCASE("separated blobs are recovered") {
        const auto r = kmeans(points, 2, 7);
        for (std::size_t i = 0; i < points.size(); ++i) CHECK(r.assignment[i] == i / 10);
    }
    CHECK_THROWS_WITH_AS(kmeans(points, 0, 1), doctest::Contains("BadK"), Error);
    CHECK_THROWS_WITH_AS(kmeans(points, 21, 1), doctest::Contains("BadK"), Error);
}

TEST_CASE("kmeans is deterministic and sse never increases with k") {
    const auto points = blobs(5, 6, 4, 1.0);
    CHECK(kmeans(points, 3, 9).assignment == kmeans(points, 3, 9).assignment);
    const auto curve = sse_curve(points, 6, 9);
    REQUIRE(curve.size() == 6);
    CHECK(curve.back() <= curve.front());
}

TEST_CASE("elbow examples") {
    CHECK(elbow_k(std::vector<Point>(5, Point{1.0, 2.0}), 6, 1) == 1);
    CHECK(elbow_k(blobs(2, 10, 3), 6, 1) == 2);
    CHECK(elbow_k(std::vector<Point>{{0.0, 0.0}, {1.0, 1.0}}, 6, 1) == 2);
    CHECK(elbow_k(blobs(4, 10, 5), 6, 1) == 4);
    CHECK_THROWS_WITH_AS(elbow_k(std::vector<Point>{{0.0}}, 6, 1), doctest::Contains("TooFewPoints"), Error);
}

TEST_CASE("sequential order examples") {
    CHECK(sequential_order(1, [](std::size_t, std::size_t) { return 0.0; }) == std::vector<std::size_t>{0});
    const double sim[3][3] = {{1.0, 0.9, 0.1}, {0.9, 1.0, 0.8}, {0.1, 0.8, 1.0}};
    CHECK(sequential_order(3, [&](std::size_t a, std::size_t b) { return sim[a][b]; }) ==
          std::vector<std::size_t>{0, 1, 2});
    const double rev[3][3] = {{1.0, 0.1, 0.9}, {0.1, 1.0, 0.8}, {0.9, 0.8, 1.0}};
    CHECK(sequential_order(3, [&](std::size_t a, std::size_t b) { return rev[a][b]; }) ==
          std::vector<std::size_t>{0, 2, 1});
    CHECK(sequential_order(4, [](std::size_t, std::size_t) { return 0.5; }) ==
          std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("sequential order is a permutation starting at the lowest id") {
    const auto planted = planted_embeddings(3, 4, 12, 16, 0.5);
    const auto records = dummy_records(12);
    const SimilarityModel model(records, planted.embeddings);
    const std::vector<RecordIndex> members{11, 3, 7, 5, 0, 9};
    auto order = sequential_order(members, model);
    CHECK(order.front() == 0);
    std::sort(order.begin(), order.end());
    auto sorted = members;
    std::sort(sorted.begin(), sorted.end());
    CHECK(order == sorted);
}

TEST_CASE("next record set") {
    SetConfig config;

    SUBCASE("small remainder is returned whole") {
        const auto planted = planted_embeddings(3, 1, 2, 16);
        const auto records = dummy_records(3);
        const SimilarityModel model(records, planted.embeddings);
        NextSetTrace trace;
        const auto set = next_record_set(std::vector<RecordIndex>{2, 0, 1}, config, model, &trace);
        CHECK(set.size() == 3);
        CHECK(set.front() == 0);
        CHECK(trace.k == 0);
    }
    SUBCASE("four planted pre-clusters take two each plus a filler") {
        const auto planted = planted_embeddings(4, 10, 21, 32, 0.2);
        const auto records = dummy_records(40);
        const SimilarityModel model(records, planted.embeddings);
        std::vector<RecordIndex> block(40);
        std::iota(block.begin(), block.end(), RecordIndex{0});
        NextSetTrace trace;
        const auto set = next_record_set(block, config, model, &trace);
        CHECK(set.size() == 9);
        CHECK(trace.k == 4);
        CHECK(trace.target_size == 2);
        CHECK(trace.taken_per_cluster == std::vector<std::size_t>{2, 2, 2, 2});
        CHECK(trace.fillers == 1);
        std::vector<std::size_t> profile = trace.profile;
        std::sort(profile.begin(), profile.end());
        CHECK(profile == std::vector<std::size_t>{2, 2, 2, 3});
        // Mates form contiguous runs in the emitted order.
        std::size_t runs = 1;
        for (std::size_t i = 1; i < set.size(); ++i) runs += planted.entity[set[i]] != planted.entity[set[i - 1]];
        CHECK(runs == 4);
    }
    SUBCASE("a homogeneous remainder fills from one pre-cluster") {
        const auto records = dummy_records(12);
        const SimilarityModel model(records, std::vector<Embedding>(12, Embedding{{0.5, 0.5}}));
        std::vector<RecordIndex> block(12);
        std::iota(block.begin(), block.end(), RecordIndex{0});
        NextSetTrace trace;
        const auto set = next_record_set(block, config, model, &trace);
        CHECK(set.size() == 9);
        CHECK(trace.k == 1);
        CHECK(trace.taken_per_cluster == std::vector<std::size_t>{2});
        CHECK(trace.fillers == 7);
        CHECK(variation(trace.profile) == 0.0);
    }
    SUBCASE("empty remainder is rejected") {
        const auto records = dummy_records(1);
        const SimilarityModel model(records, std::vector<Embedding>(1, Embedding{{1.0}}));
        CHECK_THROWS_WITH_AS(next_record_set(std::vector<RecordIndex>{}, config, model),
                             doctest::Contains("EmptyBlock"), Error);
    }
}

TEST_CASE("carving covers the block with sets of at most S_s") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto planted = planted_embeddings(7, 5, seed, 32, 0.4);
        const auto records = dummy_records(35);
        const SimilarityModel model(records, planted.embeddings);
        std::vector<RecordIndex> block;
        for (RecordIndex r = 0; r < 35; r += 1 + (seed % 2)) block.push_back(r);
        SetConfig config;
        config.seed = seed;
        const auto sets = carve_block(block, config, model);
        std::vector<RecordIndex> all;
        for (const auto& s : sets) {
            CHECK(s.size() <= config.set_size);
            CHECK_FALSE(s.empty());
            all.insert(all.end(), s.begin(), s.end());
        }
        std::sort(all.begin(), all.end());
        CHECK(all == block);
        CHECK(carve_block(block, config, model) == sets);
    }
}
