#include "llmcer/blocking.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include "llmcer/error.hpp"
#include "llmcer/metrics.hpp"

namespace llmcer {

namespace {

constexpr double kEps = 1e-9;

class DisjointSets {
  public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b);
        parent_[b] = a;
    }

  private:
    std::vector<std::size_t> parent_;
};

std::size_t ceil_eps(double x) { return static_cast<std::size_t>(std::ceil(x - kEps)); }

std::vector<Block> components(DisjointSets& ds, std::size_t n) {
    std::vector<Block> blocks;
    std::vector<std::size_t> slot(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = ds.find(i);
        if (slot[r] == SIZE_MAX) {
            slot[r] = blocks.size();
            blocks.push_back(Block{blocks.size(), {}});
        }
        blocks[slot[r]].members.push_back(static_cast<RecordIndex>(i));
    }
    return blocks;
}

}  // namespace

std::string_view to_string(BlockingMethod m) {
    switch (m) {
        case BlockingMethod::none: return "none";
        case BlockingMethod::filter: return "filter";
        case BlockingMethod::lsh: return "lsh";
        case BlockingMethod::canopy: return "canopy";
    }
    return "lsh";
}

BlockingMethod parse_blocking_method(std::string_view name) {
    if (name == "none") return BlockingMethod::none;
    if (name == "filter") return BlockingMethod::filter;
    if (name == "lsh") return BlockingMethod::lsh;
    if (name == "canopy") return BlockingMethod::canopy;
    throw Error(ErrorCode::ConfigError, fmt::format("unknown blocking method '{}'", name));
}

void BlockingParams::validate() const {
    if (canopy_tight < canopy_loose) {
        throw Error(ErrorCode::BadThresholds,
                    fmt::format("canopy b_s ({}) must be >= m_s ({})", canopy_tight, canopy_loose));
    }
    if (method == BlockingMethod::filter || method == BlockingMethod::lsh) {
        if (!(threshold >= 0.0 && threshold < 1.0)) {
            throw Error(ErrorCode::BadThresholds, fmt::format("b_t must lie in [0, 1), got {}", threshold));
        }
    }
    if (lsh_bands == 0) throw Error(ErrorCode::ConfigError, "lsh_bands must be positive");
    if (lsh_planes % lsh_bands != 0) {
        throw Error(ErrorCode::ConfigError,
                    fmt::format("lsh_planes ({}) must be a multiple of lsh_bands ({})", lsh_planes, lsh_bands));
    }
    if (lsh_planes / lsh_bands > 64) throw Error(ErrorCode::ConfigError, "at most 64 planes per band");
    if (k_candidates == 0) throw Error(ErrorCode::ConfigError, "k_candidates must be positive");
}

std::vector<Block> connected_blocks(std::size_t n, std::span<const ScoredPair> pairs) {
    DisjointSets ds(n);
    for (const auto& p : pairs) ds.unite(p.a, p.b);
    return components(ds, n);
}

std::vector<ScoredPair> filter_candidate_pairs(std::span<const std::vector<std::uint32_t>> token_sets,
                                               double threshold, std::size_t k) {
    const std::size_t n = token_sets.size();
    std::vector<ScoredPair> found;

    if (threshold <= 0.0) {
        for (std::size_t x = 0; x < n; ++x) {
            for (std::size_t y = x + 1; y < n; ++y) {
                found.push_back({static_cast<RecordIndex>(x), static_cast<RecordIndex>(y),
                                 jaccard_sorted(token_sets[x], token_sets[y])});
            }
        }
    } else {
        // Global token order: rare tokens first, so prefixes are selective.
        std::unordered_map<std::uint32_t, std::uint32_t> df;
        for (const auto& s : token_sets) for (std::uint32_t t : s) ++df[t];
        std::vector<std::uint32_t> vocab;
        vocab.reserve(df.size());
        for (const auto& [t, c] : df) vocab.push_back(t);
        std::sort(vocab.begin(), vocab.end(), [&](std::uint32_t a, std::uint32_t b) {
            return df[a] != df[b] ? df[a] < df[b] : a < b;
        });
        std::unordered_map<std::uint32_t, std::uint32_t> rank;
        for (std::uint32_t i = 0; i < vocab.size(); ++i) rank[vocab[i]] = i;

        std::vector<std::vector<std::uint32_t>> sets(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::uint32_t t : token_sets[i]) sets[i].push_back(rank[t]);
            std::sort(sets[i].begin(), sets[i].end());
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sets[a].size() < sets[b].size(); });

        struct Posting {
            std::size_t record;
            std::size_t pos;
        };
        std::unordered_map<std::uint32_t, std::vector<Posting>> index;
        std::vector<long long> overlap(n, 0);
        constexpr long long kPruned = -1'000'000'000LL;
        std::vector<std::size_t> touched;

        for (std::size_t x : order) {
            const auto& sx = sets[x];
            if (sx.empty()) continue;
            const std::size_t lx = sx.size();
            const std::size_t prefix = std::min(lx, lx - ceil_eps(threshold * static_cast<double>(lx)) + 1);
            touched.clear();
            for (std::size_t i = 0; i < prefix; ++i) {
                auto it = index.find(sx[i]);
                if (it == index.end()) continue;
                for (const auto& [y, j] : it->second) {
                    const std::size_t ly = sets[y].size();
                    if (static_cast<double>(ly) + kEps < threshold * static_cast<double>(lx)) continue;
                    if (overlap[y] == 0) touched.push_back(y);
                    if (overlap[y] < 0) continue;
                    const auto alpha = static_cast<long long>(
                        ceil_eps(threshold / (1.0 + threshold) * static_cast<double>(lx + ly)));
                    const auto ubound = static_cast<long long>(1 + std::min(lx - i - 1, ly - j - 1));
                    if (overlap[y] + ubound >= alpha) {
                        ++overlap[y];
                    } else {
                        overlap[y] = kPruned;
                    }
                }
            }
            for (std::size_t y : touched) {
                if (overlap[y] > 0) {
                    const double sim = jaccard_sorted(sx, sets[y]);
                    if (sim + kEps >= threshold) {
                        found.push_back({static_cast<RecordIndex>(std::min(x, y)),
                                         static_cast<RecordIndex>(std::max(x, y)), sim});
                    }
                }
                overlap[y] = 0;
            }
            for (std::size_t i = 0; i < prefix; ++i) index[sx[i]].push_back({x, i});
        }
    }

    // Per-record top-k; a pair survives if either endpoint keeps it.
    std::vector<std::vector<std::pair<double, RecordIndex>>> partners(n);
    for (const auto& p : found) {
        partners[p.a].push_back({p.similarity, p.b});
        partners[p.b].push_back({p.similarity, p.a});
    }
    std::map<std::pair<RecordIndex, RecordIndex>, double> kept;
    for (std::size_t x = 0; x < n; ++x) {
        auto& list = partners[x];
        std::sort(list.begin(), list.end(), [](const auto& l, const auto& r) {
            return l.first != r.first ? l.first > r.first : l.second < r.second;
        });
        for (std::size_t i = 0; i < std::min(k, list.size()); ++i) {
            const auto y = list[i].second;
            kept[{std::min<RecordIndex>(x, y), std::max<RecordIndex>(x, y)}] = list[i].first;
        }
    }
    std::vector<ScoredPair> out;
    out.reserve(kept.size());
    for (const auto& [key, sim] : kept) out.push_back({key.first, key.second, sim});
    return out;
}

std::vector<Block> filter_block(const SimilarityModel& model, const BlockingParams& params) {
    std::vector<std::vector<std::uint32_t>> sets;
    sets.reserve(model.size());
    for (RecordIndex r = 0; r < model.size(); ++r) {
        auto ids = model.token_ids(r);
        sets.emplace_back(ids.begin(), ids.end());
    }
    const auto pairs = filter_candidate_pairs(sets, params.threshold, params.k_candidates);
    return connected_blocks(model.size(), pairs);
}

std::vector<ScoredPair> lsh_candidate_pairs(std::span<const Embedding> embeddings, const BlockingParams& params) {
    params.validate();
    const std::size_t n = embeddings.size();
    if (n == 0) return {};
    const std::size_t dim = embeddings.front().dim();
    const std::size_t rows = params.lsh_planes / params.lsh_bands;

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> planes(params.lsh_planes, std::vector<double>(dim));
    for (auto& plane : planes) for (double& v : plane) v = gauss(rng);

    std::vector<std::vector<bool>> signature(n, std::vector<bool>(params.lsh_planes));
    for (std::size_t i = 0; i < n; ++i) {
        if (embeddings[i].dim() != dim) throw Error(ErrorCode::DimMismatch, "embeddings differ in dimension");
        for (std::size_t p = 0; p < params.lsh_planes; ++p) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += planes[p][d] * embeddings[i].values[d];
            signature[i][p] = dot >= 0.0;
        }
    }

    std::vector<std::pair<RecordIndex, RecordIndex>> candidates;
    for (std::size_t band = 0; band < params.lsh_bands; ++band) {
        std::map<std::uint64_t, std::vector<RecordIndex>> buckets;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t key = 0;
            for (std::size_t r = 0; r < rows; ++r) {
                if (signature[i][band * rows + r]) key |= (std::uint64_t{1} << r);
            }
            buckets[key].push_back(static_cast<RecordIndex>(i));
        }
        for (const auto& [key, members] : buckets) {
            for (std::size_t x = 0; x < members.size(); ++x) {
                for (std::size_t y = x + 1; y < members.size(); ++y) candidates.emplace_back(members[x], members[y]);
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<ScoredPair> out;
    for (const auto& [a, b] : candidates) {
        const double sim = cosine(embeddings[a], embeddings[b]);
        if (sim + kEps >= params.threshold) out.push_back({a, b, sim});
    }
    return out;
}

std::vector<Block> lsh_block(std::span<const Embedding> embeddings, const BlockingParams& params) {
    const auto pairs = lsh_candidate_pairs(embeddings, params);
    return connected_blocks(embeddings.size(), pairs);
}

double edit_similarity(std::string_view a, std::string_view b) {
    if (a.empty() || b.empty()) return 0.0;
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(std::max(a.size(), b.size()));
}

CanopyMetrics default_canopy_metrics(std::span<const Record> records, const SimilarityModel& model) {
    std::vector<std::string> keys;
    keys.reserve(records.size());
    for (const auto& r : records) {
        const Attribute* chosen = nullptr;
        for (const auto& a : r.attributes) {
            if (a.kind == AttributeKind::textual) {
                chosen = &a;
                break;
            }
        }
        if (chosen == nullptr && !r.attributes.empty()) chosen = &r.attributes.front();
        std::string key = chosen ? chosen->value : std::string{};
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        keys.push_back(std::move(key));
    }

    CanopyMetrics m;
    m.cheap = [keys](RecordIndex a, RecordIndex b) { return edit_similarity(keys[a], keys[b]); };
    m.cheap_candidates = [keys]() {
        std::map<std::string, std::vector<RecordIndex>> index;
        for (RecordIndex r = 0; r < keys.size(); ++r) {
            const auto& k = keys[r];
            std::vector<std::string> grams;
            for (std::size_t i = 0; i + 2 <= k.size(); ++i) grams.push_back(k.substr(i, 2));
            if (k.size() == 1) grams.push_back(k);
            std::sort(grams.begin(), grams.end());
            grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
            for (auto& g : grams) index[g].push_back(r);
        }
        std::vector<std::pair<RecordIndex, RecordIndex>> pairs;
        for (const auto& [g, posting] : index) {
            for (std::size_t x = 0; x < posting.size(); ++x) {
                for (std::size_t y = x + 1; y < posting.size(); ++y) pairs.emplace_back(posting[x], posting[y]);
            }
        }
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
        return pairs;
    };
    m.refined = [&model](RecordIndex a, RecordIndex b) { return model.jaccard(a, b); };
    return m;
}

std::vector<Block> canopy_block(std::size_t n, const BlockingParams& params, const CanopyMetrics& metrics) {
    if (params.canopy_tight < params.canopy_loose) params.validate();
    const double tight = params.canopy_tight;
    const double loose = params.canopy_loose;

    std::vector<std::pair<RecordIndex, RecordIndex>> candidates;
    if (metrics.cheap_candidates) {
        candidates = metrics.cheap_candidates();
    } else {
        for (RecordIndex a = 0; a < n; ++a) {
            for (RecordIndex b = a + 1; b < n; ++b) candidates.emplace_back(a, b);
        }
    }

    DisjointSets ds(n);
    std::vector<std::vector<std::pair<RecordIndex, double>>> neighbours(n);
    for (const auto& [a, b] : candidates) {
        const double s = metrics.cheap(a, b);
        if (s > tight) ds.unite(a, b);
        if (s > loose) {
            neighbours[a].push_back({b, s});
            neighbours[b].push_back({a, s});
        }
    }

    // Canopies: each still-available record seeds one; members within the tight
    // threshold of the seed stop seeding canopies of their own.
    std::vector<bool> available(n, true);
    for (RecordIndex c = 0; c < n; ++c) {
        if (!available[c]) continue;
        available[c] = false;
        std::vector<RecordIndex> canopy{c};
        for (const auto& [r, s] : neighbours[c]) {
            canopy.push_back(r);
            if (s > tight) available[r] = false;
        }
        std::sort(canopy.begin(), canopy.end());
        for (std::size_t x = 0; x < canopy.size(); ++x) {
            for (std::size_t y = x + 1; y < canopy.size(); ++y) {
                if (ds.find(canopy[x]) == ds.find(canopy[y])) continue;
                if (metrics.refined(canopy[x], canopy[y]) > tight) ds.unite(canopy[x], canopy[y]);
            }
        }
    }
    return components(ds, n);
}

std::vector<Block> make_blocks(std::span<const Record> records, const SimilarityModel& model,
                               const BlockingParams& params) {
    params.validate();
    switch (params.method) {
        case BlockingMethod::none: {
            Block all{0, {}};
            all.members.resize(records.size());
            std::iota(all.members.begin(), all.members.end(), RecordIndex{0});
            if (all.members.empty()) return {};
            return {all};
        }
        case BlockingMethod::filter: return filter_block(model, params);
        case BlockingMethod::lsh: {
            std::vector<Embedding> embeddings;
            embeddings.reserve(model.size());
            for (RecordIndex r = 0; r < model.size(); ++r) embeddings.push_back(model.embedding(r));
            return lsh_block(embeddings, params);
        }
        case BlockingMethod::canopy:
            return canopy_block(records.size(), params, default_canopy_metrics(records, model));
    }
    return {};
}

std::vector<TuneCurvePoint> threshold_sweep(std::span<const RecordIndex> sample, const PairMetric& similarity,
                                            std::span<const std::size_t> labels, const PartitionMetric& metric) {
    if (sample.size() < 2 || labels.size() != sample.size()) {
        throw Error(ErrorCode::NoValidationData,
                    fmt::format("need >= 2 labelled records, got {} records / {} labels", sample.size(),
                                labels.size()));
    }
    const PartitionMetric score = metric ? metric : [](const Partition& p, const Partition& t) {
        return pairwise_f1(p, t).f1;
    };
    const Partition truth = Partition::from_labels(labels);

    std::vector<ScoredPair> pairs;
    for (std::size_t x = 0; x < sample.size(); ++x) {
        for (std::size_t y = x + 1; y < sample.size(); ++y) {
            pairs.push_back({static_cast<RecordIndex>(x), static_cast<RecordIndex>(y),
                             similarity(sample[x], sample[y])});
        }
    }

    std::vector<TuneCurvePoint> curve;
    for (int step = 1; step <= 19; ++step) {
        const double t = step / 20.0;
        std::vector<ScoredPair> kept;
        for (const auto& p : pairs) if (p.similarity + kEps >= t) kept.push_back(p);
        const Partition induced = blocks_as_partition(connected_blocks(sample.size(), kept));
        curve.push_back({t, score(induced, truth)});
    }
    return curve;
}

double tune_threshold(std::span<const RecordIndex> sample, const PairMetric& similarity,
                      std::span<const std::size_t> labels, const PartitionMetric& metric) {
    const auto curve = threshold_sweep(sample, similarity, labels, metric);
    TuneCurvePoint best = curve.front();
    for (const auto& p : curve) {
        if (p.score > best.score + kEps) best = p;
    }
    if (best.score <= 0.0) return 0.95;
    return best.threshold;
}

Partition blocks_as_partition(std::span<const Block> blocks) {
    Partition p;
    for (const auto& b : blocks) p.clusters.push_back(b.members);
    return p;
}

}  // namespace llmcer
