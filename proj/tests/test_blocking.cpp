#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "llmcer/blocking.hpp"
#include "llmcer/error.hpp"
#include "planted.hpp"

using namespace llmcer;
using namespace llmcer::testing;

namespace {

Record rec(std::string id, std::string text) {
    return Record{std::move(id), {Attribute{"title", std::move(text), AttributeKind::textual}}, std::nullopt};
}

void check_partition(const std::vector<Block>& blocks, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        CHECK(blocks[i].block_id == i);
        CHECK_FALSE(blocks[i].members.empty());
        for (auto r : blocks[i].members) ++seen[r];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

std::set<std::pair<RecordIndex, RecordIndex>> pair_set(const std::vector<ScoredPair>& pairs) {
    std::set<std::pair<RecordIndex, RecordIndex>> out;
    for (const auto& p : pairs) out.insert({p.a, p.b});
    return out;
}

}  // namespace

TEST_CASE("connected components") {
    const std::vector<ScoredPair> pairs{{0, 2, 0.7}, {2, 4, 0.6}};
    const auto blocks = connected_blocks(5, pairs);
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[0].members == std::vector<RecordIndex>{0, 2, 4});
    CHECK(blocks[1].members == std::vector<RecordIndex>{1});
    CHECK(blocks[2].members == std::vector<RecordIndex>{3});
}

TEST_CASE("filter block examples") {
    BlockingParams params;
    params.method = BlockingMethod::filter;
    params.threshold = 0.5;

    SUBCASE("identical records form one block") {
        const std::vector<Record> records(6, rec("x", "same words here"));
        std::vector<Record> r = records;
        for (std::size_t i = 0; i < r.size(); ++i) r[i].id = std::to_string(i);
        const SimilarityModel model(r, std::vector<Embedding>(r.size(), Embedding{{1.0}}), Measure::jaccard);
        const auto blocks = filter_block(model, params);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].members.size() == 6);
    }
    SUBCASE("token-disjoint records stay apart") {
        std::vector<Record> r;
        for (int i = 0; i < 5; ++i) r.push_back(Record{std::to_string(i),
                                                       {Attribute{"f" + std::to_string(i), "v" + std::to_string(i),
                                                                  AttributeKind::textual}},
                                                       std::nullopt});
        const SimilarityModel model(r, std::vector<Embedding>(r.size(), Embedding{{1.0}}), Measure::jaccard);
        const auto blocks = filter_block(model, params);
        CHECK(blocks.size() == 5);
        check_partition(blocks, 5);
    }
    SUBCASE("chain joins through components") {
        // jaccard(0,1) = jaccard(1,2) = 0.6, jaccard(0,2) = 0.2
        const std::vector<std::vector<std::uint32_t>> sets{{1, 2, 5}, {1, 2, 3, 4, 5}, {3, 4, 5}};
        const auto pairs = filter_candidate_pairs(sets, 0.5, 50);
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[0].similarity == doctest::Approx(0.6));
        const auto blocks = connected_blocks(3, pairs);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].members == std::vector<RecordIndex>{0, 1, 2});
    }
}

TEST_CASE("filter join equals brute force and prunes monotonically") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 30;
        std::vector<std::vector<std::uint32_t>> sets(n);
        for (auto& s : sets) {
            std::set<std::uint32_t> tokens;
            const std::size_t len = 1 + rng() % 10;
            while (tokens.size() < len) tokens.insert(static_cast<std::uint32_t>(rng() % 15));
            s.assign(tokens.begin(), tokens.end());
        }
        std::size_t previous = n * n;
        for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            std::set<std::pair<RecordIndex, RecordIndex>> expected;
            for (RecordIndex a = 0; a < n; ++a) {
                for (RecordIndex b = a + 1; b < n; ++b) {
                    if (jaccard_sorted(sets[a], sets[b]) >= t - 1e-12) expected.insert({a, b});
                }
            }
            const auto got = filter_candidate_pairs(sets, t, n);
            CHECK(pair_set(got) == expected);
            CHECK(got.size() <= previous);
            previous = got.size();
        }
    }
}

TEST_CASE("filter keeps top-k partners per record") {
    const std::vector<std::vector<std::uint32_t>> sets(5, {1, 2, 3});
    const auto pairs = filter_candidate_pairs(sets, 0.5, 1);
    // Every record keeps one partner (ties to the lowest index).
    CHECK(pairs.size() == 4);
    CHECK(pairs.front() == ScoredPair{0, 1, 1.0});
}

TEST_CASE("lsh examples") {
    BlockingParams params;
    params.threshold = 0.8;
    SUBCASE("identical embeddings share a block") {
        const std::vector<Embedding> e(4, Embedding{{0.3, -0.2, 0.9}});
        const auto blocks = lsh_block(e, params);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].members.size() == 4);
    }
    SUBCASE("antipodal embeddings never pair") {
        const std::vector<Embedding> e{Embedding{{1.0, 2.0}}, Embedding{{-1.0, -2.0}}};
        CHECK(lsh_candidate_pairs(e, params).empty());
        CHECK(lsh_block(e, params).size() == 2);
    }
    SUBCASE("zero threshold with zero-width bands is one block") {
        params.threshold = 0.0;
        params.lsh_planes = 0;
        params.lsh_bands = 1;
        const auto planted = planted_embeddings(5, 3, 2, 16);
        CHECK(lsh_block(planted.embeddings, params).size() == 1);
    }
}

TEST_CASE("lsh recovers planted clusters") {
    const auto planted = planted_embeddings(40, 5, 99);
    const std::size_t n = planted.embeddings.size();
    double min_intra = 1.0, max_inter = -1.0;
    std::set<std::pair<RecordIndex, RecordIndex>> oracle;
    BlockingParams params;
    params.threshold = 0.6;
    for (RecordIndex a = 0; a < n; ++a) {
        for (RecordIndex b = a + 1; b < n; ++b) {
            const double c = cosine(planted.embeddings[a], planted.embeddings[b]);
            if (planted.entity[a] == planted.entity[b]) {
                min_intra = std::min(min_intra, c);
            } else {
                max_inter = std::max(max_inter, c);
            }
            if (c >= params.threshold) oracle.insert({a, b});
        }
    }
    REQUIRE(min_intra >= 0.9);
    REQUIRE(max_inter <= 0.3);

    // Pair completeness and quality of the emitted blocks against the brute-force pairs.
    const auto blocks = lsh_block(planted.embeddings, params);
    std::size_t co_blocked = 0, hits = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.members.size(); ++i) {
            for (std::size_t j = i + 1; j < b.members.size(); ++j) {
                ++co_blocked;
                hits += oracle.count({b.members[i], b.members[j]});
            }
        }
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(oracle.size()) >= 0.95);
    CHECK(static_cast<double>(hits) / static_cast<double>(co_blocked) >= 0.95);
    for (const auto& p : lsh_candidate_pairs(planted.embeddings, params)) CHECK(p.similarity >= params.threshold);
    CHECK(lsh_candidate_pairs(planted.embeddings, params) == lsh_candidate_pairs(planted.embeddings, params));
    check_partition(blocks, n);
}

TEST_CASE("lsh pruning is monotone in the threshold") {
    const auto planted = planted_embeddings(10, 4, 5, 32, 0.8);
    BlockingParams params;
    std::size_t previous = SIZE_MAX;
    for (double t : {0.0, 0.2, 0.4, 0.6, 0.8}) {
        params.threshold = t;
        const auto pairs = lsh_candidate_pairs(planted.embeddings, params);
        CHECK(pairs.size() <= previous);
        previous = pairs.size();
    }
}

TEST_CASE("canopy examples") {
    BlockingParams params;
    params.method = BlockingMethod::canopy;

    SUBCASE("tight thresholds on dissimilar data give singletons") {
        params.canopy_tight = params.canopy_loose = 0.99;
        const std::vector<Record> r{rec("a", "alpha beta"), rec("b", "gamma delta"), rec("c", "epsilon zeta")};
        const SimilarityModel model(r, std::vector<Embedding>(3, Embedding{{1.0}}), Measure::jaccard);
        CHECK(canopy_block(3, params, default_canopy_metrics(r, model)).size() == 3);
    }
    SUBCASE("cheap duplicate joins regardless of loose threshold") {
        params.canopy_tight = 0.9;
        params.canopy_loose = 0.9;
        const std::vector<Record> r{rec("a", "acme widget"), rec("b", "acme widget"), rec("c", "other thing")};
        const SimilarityModel model(r, std::vector<Embedding>(3, Embedding{{1.0}}), Measure::jaccard);
        const auto blocks = canopy_block(3, params, default_canopy_metrics(r, model));
        REQUIRE(blocks.size() == 2);
        CHECK(blocks[0].members == std::vector<RecordIndex>{0, 1});
    }
    SUBCASE("refined chain merges transitively") {
        params.canopy_tight = 0.8;
        params.canopy_loose = 0.5;
        const double refined[3][3] = {{1.0, 0.9, 0.2}, {0.9, 1.0, 0.9}, {0.2, 0.9, 1.0}};
        CanopyMetrics metrics;
        metrics.cheap = [](RecordIndex, RecordIndex) { return 0.6; };
        metrics.refined = [&](RecordIndex a, RecordIndex b) { return refined[a][b]; };
        const auto blocks = canopy_block(3, params, metrics);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].members.size() == 3);
    }
    SUBCASE("inverted thresholds are rejected") {
        params.canopy_tight = 0.3;
        params.canopy_loose = 0.6;
        CHECK_THROWS_WITH_AS(params.validate(), doctest::Contains("BadThresholds"), Error);
    }
}

TEST_CASE("edit similarity") {
    CHECK(edit_similarity("kitten", "sitting") == doctest::Approx(1.0 - 3.0 / 7.0));
    CHECK(edit_similarity("abc", "abc") == 1.0);
    CHECK(edit_similarity("", "abc") == 0.0);
}

TEST_CASE("every method emits a partition") {
    std::vector<Record> r;
    const auto planted = planted_embeddings(6, 3, 8, 32);
    for (std::size_t i = 0; i < planted.embeddings.size(); ++i) {
        r.push_back(rec(std::to_string(i), "entity" + std::to_string(planted.entity[i]) + " item"));
    }
    const SimilarityModel model(r, planted.embeddings, Measure::cosine);
    for (auto method : {BlockingMethod::none, BlockingMethod::filter, BlockingMethod::lsh, BlockingMethod::canopy}) {
        BlockingParams params;
        params.method = method;
        check_partition(make_blocks(r, model, params), r.size());
    }
    CHECK(parse_blocking_method("canopy") == BlockingMethod::canopy);
    CHECK_THROWS_AS(parse_blocking_method("sorted"), Error);
}

TEST_CASE("threshold tuning") {
    std::vector<RecordIndex> sample{0, 1, 2, 3};
    SUBCASE("separable similarities pick the smallest perfect threshold") {
        const std::vector<std::size_t> labels{0, 0, 1, 1};
        const PairMetric sim = [&](RecordIndex a, RecordIndex b) { return labels[a] == labels[b] ? 0.9 : 0.1; };
        CHECK(tune_threshold(sample, sim, labels) == doctest::Approx(0.15));
        const auto curve = threshold_sweep(sample, sim, labels);
        REQUIRE(curve.size() == 19);
        CHECK(curve.front().threshold == doctest::Approx(0.05));
        CHECK(curve.back().threshold == doctest::Approx(0.95));
    }
    SUBCASE("all matches pick the most permissive threshold") {
        const std::vector<std::size_t> labels{0, 0, 0, 0};
        const PairMetric sim = [](RecordIndex, RecordIndex) { return 0.5; };
        CHECK(tune_threshold(sample, sim, labels) == doctest::Approx(0.05));
    }
    SUBCASE("all non-matches pick the most conservative threshold") {
        const std::vector<std::size_t> labels{0, 1, 2, 3};
        const PairMetric sim = [](RecordIndex, RecordIndex) { return 0.5; };
        CHECK(tune_threshold(sample, sim, labels) == doctest::Approx(0.95));
    }
    SUBCASE("needs labels") {
        const std::vector<std::size_t> labels{0};
        const PairMetric sim = [](RecordIndex, RecordIndex) { return 0.5; };
        CHECK_THROWS_WITH_AS(tune_threshold(std::vector<RecordIndex>{0}, sim, labels),
                             doctest::Contains("NoValidationData"), Error);
    }
}
