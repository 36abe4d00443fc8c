#include "llmcer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <unordered_map>

#include "llmcer/error.hpp"

namespace llmcer {

namespace {

std::unordered_map<RecordIndex, std::size_t> label_map(const Partition& p) {
    std::unordered_map<RecordIndex, std::size_t> out;
    for (std::size_t k = 0; k < p.clusters.size(); ++k) {
        for (RecordIndex r : p.clusters[k]) {
            if (!out.emplace(r, k).second) {
                throw Error(ErrorCode::UniverseMismatch, fmt::format("record {} appears twice", r));
            }
        }
    }
    return out;
}

double choose2(std::size_t x) { return static_cast<double>(x) * (static_cast<double>(x) - 1.0) / 2.0; }

}  // namespace

ContingencyTable ContingencyTable::build(const Partition& pred, const Partition& truth) {
    const auto pl = label_map(pred);
    const auto tl = label_map(truth);
    if (pl.size() != tl.size()) {
        throw Error(ErrorCode::UniverseMismatch,
                    fmt::format("prediction covers {} records, truth covers {}", pl.size(), tl.size()));
    }
    ContingencyTable ct;
    ct.n = pl.size();
    ct.t.assign(pred.clusters.size(), std::vector<std::size_t>(truth.clusters.size(), 0));
    ct.a.assign(pred.clusters.size(), 0);
    ct.b.assign(truth.clusters.size(), 0);
    for (const auto& [r, i] : pl) {
        auto it = tl.find(r);
        if (it == tl.end()) {
            throw Error(ErrorCode::UniverseMismatch, fmt::format("record {} missing from truth", r));
        }
        ++ct.t[i][it->second];
        ++ct.a[i];
        ++ct.b[it->second];
    }
    // Drop empty clusters so they do not pollute entropies.
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < ct.a.size(); ++i) if (ct.a[i] > 0) rows.push_back(i);
    for (std::size_t j = 0; j < ct.b.size(); ++j) if (ct.b[j] > 0) cols.push_back(j);
    if (rows.size() != ct.a.size() || cols.size() != ct.b.size()) {
        ContingencyTable packed;
        packed.n = ct.n;
        for (std::size_t i : rows) {
            packed.a.push_back(ct.a[i]);
            auto& row = packed.t.emplace_back();
            for (std::size_t j : cols) row.push_back(ct.t[i][j]);
        }
        for (std::size_t j : cols) packed.b.push_back(ct.b[j]);
        return packed;
    }
    return ct;
}

std::size_t max_assignment(const std::vector<std::vector<std::size_t>>& weights) {
    const std::size_t rows = weights.size();
    const std::size_t cols = rows == 0 ? 0 : weights.front().size();
    const std::size_t n = std::max(rows, cols);
    if (n == 0) return 0;

    std::size_t wmax = 0;
    for (const auto& row : weights) for (std::size_t w : row) wmax = std::max(wmax, w);
    auto cost = [&](std::size_t i, std::size_t j) -> long long {
        const std::size_t w = (i < rows && j < cols) ? weights[i][j] : 0;
        return static_cast<long long>(wmax) - static_cast<long long>(w);
    };

    // Classic O(n^3) Hungarian with potentials, 1-based internally.
    constexpr long long kInf = std::numeric_limits<long long>::max() / 4;
    std::vector<long long> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<long long> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            long long delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::size_t total = 0;
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = p[j] - 1;
        if (i < rows && j - 1 < cols) total += weights[i][j - 1];
    }
    return total;
}

double acc(const Partition& pred, const Partition& truth) {
    const auto ct = ContingencyTable::build(pred, truth);
    if (ct.n == 0) return 1.0;
    return static_cast<double>(max_assignment(ct.t)) / static_cast<double>(ct.n);
}

double purity(const Partition& pred, const Partition& truth) {
    const auto ct = ContingencyTable::build(pred, truth);
    if (ct.n == 0) return 1.0;
    // Σ_i |X_i|/n · max_j |X_i ∩ Y_j|/|X_i| = Σ_i max_j t_ij / n
    double total = 0.0;
    for (const auto& row : ct.t) total += static_cast<double>(*std::max_element(row.begin(), row.end()));
    return total / static_cast<double>(ct.n);
}

double inverse_purity(const Partition& pred, const Partition& truth) { return purity(truth, pred); }

double fp_measure(const Partition& pred, const Partition& truth) {
    const double p = purity(pred, truth);
    const double ip = inverse_purity(pred, truth);
    if (p == 0.0 || ip == 0.0) return 0.0;
    return 2.0 / (1.0 / p + 1.0 / ip);
}

double nmi(const Partition& pred, const Partition& truth) {
    const auto ct = ContingencyTable::build(pred, truth);
    const double n = static_cast<double>(ct.n);
    if (ct.n == 0) return 1.0;
    auto entropy = [n](const std::vector<std::size_t>& sizes) {
        double h = 0.0;
        for (std::size_t s : sizes) {
            if (s == 0) continue;
            const double p = static_cast<double>(s) / n;
            h -= p * std::log(p);
        }
        return h;
    };
    const double hx = entropy(ct.a);
    const double hy = entropy(ct.b);
    if (hx + hy == 0.0) return 1.0;
    if (hx == 0.0 || hy == 0.0) return 0.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < ct.t.size(); ++i) {
        for (std::size_t j = 0; j < ct.t[i].size(); ++j) {
            if (ct.t[i][j] == 0) continue;
            const double pij = static_cast<double>(ct.t[i][j]) / n;
            const double pi = static_cast<double>(ct.a[i]) / n;
            const double pj = static_cast<double>(ct.b[j]) / n;
            mi += pij * std::log(pij / (pi * pj));
        }
    }
    return std::clamp(2.0 * mi / (hx + hy), 0.0, 1.0);
}

double ari(const Partition& pred, const Partition& truth) {
    const auto ct = ContingencyTable::build(pred, truth);
    if (ct.n < 2) throw Error(ErrorCode::TooFewRecords, "ARI needs at least 2 records");
    double index = 0.0;
    for (const auto& row : ct.t) for (std::size_t x : row) index += choose2(x);
    double sum_a = 0.0, sum_b = 0.0;
    for (std::size_t x : ct.a) sum_a += choose2(x);
    for (std::size_t x : ct.b) sum_b += choose2(x);
    const double expected = sum_a * sum_b / choose2(ct.n);
    const double max_index = 0.5 * (sum_a + sum_b);
    const double denom = max_index - expected;
    if (denom == 0.0) return 1.0;
    return (index - expected) / denom;
}

PairwiseScores pairwise_f1(const Partition& pred, const Partition& truth) {
    const auto ct = ContingencyTable::build(pred, truth);
    double tp = 0.0, pred_pairs = 0.0, true_pairs = 0.0;
    for (const auto& row : ct.t) for (std::size_t x : row) tp += choose2(x);
    for (std::size_t x : ct.a) pred_pairs += choose2(x);
    for (std::size_t x : ct.b) true_pairs += choose2(x);
    PairwiseScores s;
    s.precision = pred_pairs > 0 ? tp / pred_pairs : 0.0;
    s.recall = true_pairs > 0 ? tp / true_pairs : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

MetricReport evaluate(const Partition& pred, const Partition& truth) {
    MetricReport r;
    r.acc = acc(pred, truth);
    r.fp = fp_measure(pred, truth);
    r.nmi = nmi(pred, truth);
    r.ari = ContingencyTable::build(pred, truth).n >= 2 ? ari(pred, truth) : 1.0;
    r.pairwise = pairwise_f1(pred, truth);
    return r;
}

}  // namespace llmcer
