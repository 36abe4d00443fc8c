#pragma once

#include <cstddef>
#include <vector>

#include "llmcer/record.hpp"

namespace llmcer {

/// t[i][j] = |pred_i ∩ truth_j|, with row sums a_i and column sums b_j.
struct ContingencyTable {
    std::vector<std::vector<std::size_t>> t;
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
    std::size_t n = 0;

    /// Throws UniverseMismatch unless both partitions cover the same record set.
    static ContingencyTable build(const Partition& pred, const Partition& truth);
};

/// Maximum total weight of a one-to-one row/column assignment (rows or columns
/// may stay unmatched). Hungarian method on the padded square matrix.
std::size_t max_assignment(const std::vector<std::vector<std::size_t>>& weights);

/// Fraction of records in the optimally matched predicted/true cluster pairs.
double acc(const Partition& pred, const Partition& truth);

double purity(const Partition& pred, const Partition& truth);
double inverse_purity(const Partition& pred, const Partition& truth);
/// Harmonic mean of purity and inverse purity.
double fp_measure(const Partition& pred, const Partition& truth);

/// 2 I(X,Y) / (H(X) + H(Y)), natural log. 1 when both entropies are 0, 0 when exactly one is.
double nmi(const Partition& pred, const Partition& truth);

/// Adjusted Rand index; 1 when the denominator vanishes. Throws TooFewRecords for n < 2.
double ari(const Partition& pred, const Partition& truth);

struct PairwiseScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Over unordered record pairs; zero-denominator ratios are 0.
PairwiseScores pairwise_f1(const Partition& pred, const Partition& truth);

struct MetricReport {
    double acc = 0.0;
    double fp = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    PairwiseScores pairwise;
};

MetricReport evaluate(const Partition& pred, const Partition& truth);

}  // namespace llmcer
