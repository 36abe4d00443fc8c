#include "llmcer/set_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>
#include <random>

#include "llmcer/error.hpp"

namespace llmcer {

double variation(std::span<const std::size_t> cluster_sizes) {
    if (cluster_sizes.empty()) throw Error(ErrorCode::EmptyInput, "variation of an empty size list");
    double sum = 0.0;
    for (std::size_t s : cluster_sizes) {
        if (s == 0) throw Error(ErrorCode::EmptyInput, "cluster sizes must be >= 1");
        sum += static_cast<double>(s);
    }
    const double n = static_cast<double>(cluster_sizes.size());
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t s : cluster_sizes) ss += (static_cast<double>(s) - mu) * (static_cast<double>(s) - mu);
    return std::sqrt(ss / n) / mu;
}

namespace {

double sq_dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

KMeansResult kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
    const std::size_t n = points.size();
    if (k == 0 || k > n) throw Error(ErrorCode::BadK, fmt::format("k = {} with {} points", k, n));

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen{static_cast<std::size_t>(rng() % n)};
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], points[chosen[0]]);
    while (chosen.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = n;
        if (total > 0.0) {
            double u = unit(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                u -= d2[i];
                if (u < 0.0) break;
            }
        } else {
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) pick = i;
            }
        }
        chosen.push_back(pick);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], points[pick]));
    }

    KMeansResult res;
    for (std::size_t c : chosen) res.centroids.push_back(points[c]);
    res.assignment.assign(n, SIZE_MAX);

    for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_dist(points[i], res.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<Point> sums(k, Point(points.front().size(), 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[res.assignment[i]];
            for (std::size_t d = 0; d < points[i].size(); ++d) sums[res.assignment[i]][d] += points[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // keep the old centroid
            for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
            res.centroids[c] = std::move(sums[c]);
        }
    }

    // Relabel by first appearance so labels do not depend on the random start.
    std::vector<std::size_t> relabel(k, SIZE_MAX);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (relabel[res.assignment[i]] == SIZE_MAX) relabel[res.assignment[i]] = next++;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (relabel[c] == SIZE_MAX) relabel[c] = next++;
    }
    std::vector<Point> centroids(k);
    for (std::size_t c = 0; c < k; ++c) centroids[relabel[c]] = std::move(res.centroids[c]);
    res.centroids = std::move(centroids);
    for (auto& a : res.assignment) a = relabel[a];

    res.sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) res.sse += sq_dist(points[i], res.centroids[res.assignment[i]]);
    return res;
}

std::vector<double> sse_curve(std::span<const Point> points, std::size_t k_max, std::uint64_t seed) {
    std::vector<double> out;
    for (std::size_t k = 1; k <= std::min(k_max, points.size()); ++k) out.push_back(kmeans(points, k, seed).sse);
    return out;
}

std::size_t elbow_k(std::span<const Point> points, std::size_t k_max, std::uint64_t seed) {
    if (points.size() < 2) throw Error(ErrorCode::TooFewPoints, fmt::format("{} points", points.size()));
    const auto sse = sse_curve(points, std::max<std::size_t>(k_max, 1), seed);
    const std::size_t kmax = sse.size();
    if (kmax < 2 || sse[0] <= 1e-12) return 1;

    auto gain = [&](std::size_t k) {  // SSE(k-1) - SSE(k); 0 past the curve
        return k > kmax ? 0.0 : sse[k - 2] - sse[k - 1];
    };
    std::size_t best = 2;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 2; k <= kmax; ++k) {
        const double score = gain(k) - gain(k + 1);
        if (score > best_score + 1e-12) {
            best_score = score;
            best = k;
        }
    }
    return best;
}

std::vector<std::size_t> sequential_order(std::size_t n, const IndexSimilarity& similarity) {
    std::vector<std::size_t> order;
    if (n == 0) return order;
    std::vector<bool> used(n, false);
    order.push_back(0);
    used[0] = true;
    while (order.size() < n) {
        const std::size_t last = order.back();
        std::size_t best = n;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double s = similarity(last, i);
            if (s > best_sim) {
                best_sim = s;
                best = i;
            }
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

std::vector<RecordIndex> sequential_order(std::span<const RecordIndex> members, const SimilarityModel& model) {
    std::vector<RecordIndex> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end());
    const auto order =
        sequential_order(sorted.size(), [&](std::size_t a, std::size_t b) { return model(sorted[a], sorted[b]); });
    std::vector<RecordIndex> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.push_back(sorted[i]);
    return out;
}

std::vector<RecordIndex> next_record_set(std::span<const RecordIndex> remaining, const SetConfig& config,
                                         const SimilarityModel& model, NextSetTrace* trace) {
    if (remaining.empty()) throw Error(ErrorCode::EmptyBlock, "no records left in block");
    std::vector<RecordIndex> pool(remaining.begin(), remaining.end());
    std::sort(pool.begin(), pool.end());

    if (pool.size() <= config.set_size) {
        if (trace) *trace = NextSetTrace{};
        return sequential_order(pool, model);
    }

    std::vector<Point> points;
    points.reserve(pool.size());
    for (RecordIndex r : pool) points.push_back(model.embedding(r).values);

    const std::size_t k = elbow_k(points, config.diversity + 2, config.seed);
    const KMeansResult pre = kmeans(points, k, config.seed);
    const std::size_t target = config.set_size / config.diversity;

    std::vector<std::vector<std::size_t>> by_cluster(k);
    for (std::size_t i = 0; i < pool.size(); ++i) by_cluster[pre.assignment[i]].push_back(i);

    std::vector<bool> taken(pool.size(), false);
    std::vector<std::size_t> chosen;
    std::vector<std::size_t> profile(k, 0);
    NextSetTrace local;
    local.k = k;
    local.target_size = target;
    local.taken_per_cluster.assign(k, 0);

    for (std::size_t c = 0; c < k; ++c) {
        if (chosen.size() >= config.set_size || by_cluster[c].size() < target) continue;
        auto members = by_cluster[c];
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return sq_dist(points[a], pre.centroids[c]) < sq_dist(points[b], pre.centroids[c]);
        });
        const std::size_t quota = std::min(target, config.set_size - chosen.size());
        for (std::size_t i = 0; i < quota; ++i) {
            chosen.push_back(members[i]);
            taken[members[i]] = true;
        }
        profile[c] += quota;
        local.taken_per_cluster[c] = quota;
    }

    auto profile_variation = [](const std::vector<std::size_t>& counts) {
        std::vector<std::size_t> nonzero;
        for (std::size_t c : counts) if (c > 0) nonzero.push_back(c);
        return nonzero.empty() ? 0.0 : variation(nonzero);
    };

    while (chosen.size() < config.set_size) {
        std::size_t best = pool.size();
        double best_var = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (taken[i]) continue;
            auto trial = profile;
            ++trial[pre.assignment[i]];
            const double v = profile_variation(trial);
            if (v < best_var - 1e-12) {
                best_var = v;
                best = i;
            }
        }
        taken[best] = true;
        chosen.push_back(best);
        ++profile[pre.assignment[best]];
        ++local.fillers;
    }

    for (std::size_t c : profile) if (c > 0) local.profile.push_back(c);
    if (trace) *trace = std::move(local);

    std::vector<RecordIndex> picked;
    picked.reserve(chosen.size());
    for (std::size_t i : chosen) picked.push_back(pool[i]);
    return sequential_order(picked, model);
}

std::vector<std::vector<RecordIndex>> carve_block(std::span<const RecordIndex> block, const SetConfig& config,
                                                  const SimilarityModel& model) {
    std::vector<RecordIndex> remaining(block.begin(), block.end());
    std::sort(remaining.begin(), remaining.end());
    std::vector<std::vector<RecordIndex>> sets;
    while (!remaining.empty()) {
        auto set = next_record_set(remaining, config, model);
        std::vector<RecordIndex> picked = set;
        std::sort(picked.begin(), picked.end());
        std::vector<RecordIndex> rest;
        rest.reserve(remaining.size() - picked.size());
        std::set_difference(remaining.begin(), remaining.end(), picked.begin(), picked.end(),
                            std::back_inserter(rest));
        remaining = std::move(rest);
        sets.push_back(std::move(set));
    }
    return sets;
}

}  // namespace llmcer
