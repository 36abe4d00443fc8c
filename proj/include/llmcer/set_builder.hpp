#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "llmcer/record.hpp"
#include "llmcer/similarity.hpp"

namespace llmcer {

/// Coefficient of variation σ/μ of cluster sizes (population σ).
/// Throws EmptyInput on an empty list or a zero size.
double variation(std::span<const std::size_t> cluster_sizes);

using Point = std::vector<double>;

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<Point> centroids;
    double sse = 0.0;
    std::size_t iterations = 0;
};

/// Lloyd's algorithm from a seeded k-means++ start; stops at an assignment
/// fixpoint or after `max_iterations`. Cluster indices are relabelled so that
/// cluster 0 holds the lowest point index, cluster 1 the next, and so on.
/// Throws BadK unless 1 <= k <= points.size().
KMeansResult kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 100);

/// SSE(k) for k = 1..k_max (index 0 holds k = 1).
std::vector<double> sse_curve(std::span<const Point> points, std::size_t k_max, std::uint64_t seed);

/// Discrete knee of the SSE curve: argmax over k >= 2 of the second difference,
/// with the gain beyond the last k taken as 0. Returns 1 when SSE(1) is ~0.
/// Throws TooFewPoints for fewer than 2 points.
std::size_t elbow_k(std::span<const Point> points, std::size_t k_max, std::uint64_t seed);

using IndexSimilarity = std::function<double(std::size_t, std::size_t)>;

/// Greedy chain over item positions [0, n): start at position 0, then repeatedly
/// append the remaining item most similar to the last one (ties: lower position).
std::vector<std::size_t> sequential_order(std::size_t n, const IndexSimilarity& similarity);

/// Record-level convenience: orders `members` (any order) starting from the lowest id.
std::vector<RecordIndex> sequential_order(std::span<const RecordIndex> members, const SimilarityModel& model);

struct NextSetTrace {
    std::size_t k = 0;                    ///< pre-cluster count (0 on the small-remainder branch)
    std::size_t target_size = 0;
    std::vector<std::size_t> taken_per_cluster;  ///< quota picks per pre-cluster
    std::size_t fillers = 0;
    std::vector<std::size_t> profile;     ///< pre-cluster sizes inside the chosen set
};

/// Picks the next record set out of `remaining` (the caller removes the picks).
/// Small remainders (<= set_size) are returned whole; otherwise elbow + k-means
/// pre-cluster the remainder, floor(set_size/diversity) records are taken from
/// every large-enough pre-cluster, the rest is filled one record at a time with
/// the least variation increase, and the result is sequentially ordered.
/// Throws EmptyBlock when `remaining` is empty.
std::vector<RecordIndex> next_record_set(std::span<const RecordIndex> remaining, const SetConfig& config,
                                         const SimilarityModel& model, NextSetTrace* trace = nullptr);

/// Repeatedly applies next_record_set until the block is exhausted.
std::vector<std::vector<RecordIndex>> carve_block(std::span<const RecordIndex> block, const SetConfig& config,
                                                  const SimilarityModel& model);

}  // namespace llmcer
