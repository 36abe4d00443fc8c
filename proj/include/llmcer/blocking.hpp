#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "llmcer/record.hpp"
#include "llmcer/similarity.hpp"

namespace llmcer {

struct Block {
    std::size_t block_id = 0;
    std::vector<RecordIndex> members;
};

enum class BlockingMethod { none, filter, lsh, canopy };

std::string_view to_string(BlockingMethod m);
BlockingMethod parse_blocking_method(std::string_view name);

struct BlockingParams {
    BlockingMethod method = BlockingMethod::lsh;
    /// b_t: kept candidate pairs must reach this similarity (inclusive).
    double threshold = 0.5;
    std::size_t lsh_planes = 64;
    std::size_t lsh_bands = 8;
    /// b_s (tight) and m_s (loose) canopy thresholds, b_s >= m_s.
    double canopy_tight = 0.8;
    double canopy_loose = 0.5;
    /// Filter join keeps at most this many best partners per record.
    std::size_t k_candidates = 50;
    std::uint64_t seed = 42;

    /// Throws BadThresholds / ConfigError.
    void validate() const;
};

struct ScoredPair {
    RecordIndex a = 0;
    RecordIndex b = 0;
    double similarity = 0.0;

    friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

/// Connected components over `pairs`; every index in [0, n) lands in exactly one block.
/// Blocks are ordered by smallest member and numbered in that order.
std::vector<Block> connected_blocks(std::size_t n, std::span<const ScoredPair> pairs);

/// Prefix + positional filtered Jaccard self-join. `token_sets` hold sorted distinct ids.
/// Returns pairs with jaccard >= threshold, keeping per record only its best `k` partners
/// (a pair survives if either endpoint keeps it). Sorted by (a, b).
std::vector<ScoredPair> filter_candidate_pairs(std::span<const std::vector<std::uint32_t>> token_sets,
                                               double threshold, std::size_t k);

std::vector<Block> filter_block(const SimilarityModel& model, const BlockingParams& params);

/// Random-hyperplane signatures split into bands; pairs sharing a band bucket and
/// reaching `params.threshold` cosine are kept. Deterministic for a given seed.
std::vector<ScoredPair> lsh_candidate_pairs(std::span<const Embedding> embeddings, const BlockingParams& params);
std::vector<Block> lsh_block(std::span<const Embedding> embeddings, const BlockingParams& params);

using PairMetric = std::function<double(RecordIndex, RecordIndex)>;

struct CanopyMetrics {
    /// Cheap metric and the pairs worth evaluating with it (all pairs when empty).
    PairMetric cheap;
    std::function<std::vector<std::pair<RecordIndex, RecordIndex>>()> cheap_candidates;
    /// Refined metric evaluated inside canopies.
    PairMetric refined;
};

/// Edit similarity on the first textual attribute (bigram inverted index for
/// candidates) and Jaccard over all attributes.
CanopyMetrics default_canopy_metrics(std::span<const Record> records, const SimilarityModel& model);

/// Throws BadThresholds if canopy_tight < canopy_loose.
std::vector<Block> canopy_block(std::size_t n, const BlockingParams& params, const CanopyMetrics& metrics);

/// 1 - levenshtein(a, b) / max(|a|, |b|); 0 when either is empty.
double edit_similarity(std::string_view a, std::string_view b);

/// Dispatches on params.method. `none` yields one block of every record.
std::vector<Block> make_blocks(std::span<const Record> records, const SimilarityModel& model,
                               const BlockingParams& params);

/// Score of an induced partition against truth; pairwise F1 unless overridden.
using PartitionMetric = std::function<double(const Partition& pred, const Partition& truth)>;

/// Sweeps b_t over {0.05, 0.10, ..., 0.95}. The sample's induced blocking at each
/// threshold is the connected components of pairs with sim >= b_t; returns the
/// threshold maximizing `metric`, ties to the smaller one, 0.95 if every score is 0.
/// `labels[i]` is the entity label of `sample[i]`. Throws NoValidationData.
double tune_threshold(std::span<const RecordIndex> sample, const PairMetric& similarity,
                      std::span<const std::size_t> labels, const PartitionMetric& metric = {});

struct TuneCurvePoint {
    double threshold = 0.0;
    double score = 0.0;
};

/// The full sweep behind tune_threshold.
std::vector<TuneCurvePoint> threshold_sweep(std::span<const RecordIndex> sample, const PairMetric& similarity,
                                            std::span<const std::size_t> labels,
                                            const PartitionMetric& metric = {});

/// Blocks as a partition of record indices.
Partition blocks_as_partition(std::span<const Block> blocks);

}  // namespace llmcer
