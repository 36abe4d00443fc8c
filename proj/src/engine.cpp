#include "llmcer/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <mutex>
#include <thread>

#include "llmcer/error.hpp"

namespace llmcer {

namespace {

/// Runs fn(0..n-1) on up to `threads` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= n) return;
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mu);
                        if (!error) error = std::current_exception();
                        next.store(n);
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> group_index(const SetClustering& clustering, std::size_t n) {
    std::vector<std::size_t> group(n, 0);
    for (std::size_t g = 0; g < clustering.groups.size(); ++g) {
        for (std::size_t pos : clustering.groups[g]) group[pos] = g;
    }
    return group;
}

std::size_t member_count(const SetClustering& clustering) {
    std::size_t n = 0;
    for (const auto& g : clustering.groups) n += g.size();
    return n;
}

}  // namespace

std::vector<std::size_t> misclustered(const SetClustering& clustering, const IndexSimilarity& similarity) {
    const std::size_t n = member_count(clustering);
    const auto group = group_index(clustering, n);
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < n; ++r) {
        double intra = 1.0;
        bool has_mate = false;
        double inter = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            if (s == r) continue;
            const double sim = similarity(r, s);
            if (group[s] == group[r]) {
                intra = has_mate ? std::min(intra, sim) : sim;
                has_mate = true;
            } else {
                inter = std::max(inter, sim);
            }
        }
        if (intra < inter) out.push_back(r);
    }
    return out;
}

bool passes_guardrail(const SetClustering& clustering, const IndexSimilarity& similarity) {
    return misclustered(clustering, similarity).empty();
}

RecordSet regenerate_set(const RecordSet& set, const SetClustering& clustering, const IndexSimilarity& similarity) {
    const std::size_t n = set.size();
    const auto group = group_index(clustering, n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t r : misclustered(clustering, similarity)) {
        std::size_t target = group[r];
        double best = -1.0;
        for (std::size_t g = 0; g < clustering.groups.size(); ++g) {
            if (g == group[r]) continue;
            double sim = -1.0;
            for (std::size_t s : clustering.groups[g]) sim = std::max(sim, similarity(r, s));
            if (sim > best) {
                best = sim;
                target = g;
            }
        }
        if (target == group[r]) continue;
        std::erase(order, r);
        std::size_t last = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (group[order[i]] == target) last = i;
        }
        order.insert(order.begin() + static_cast<std::ptrdiff_t>(last + 1), r);
    }

    RecordSet out{set.set_id, {}, set.level};
    for (std::size_t pos : order) out.members.push_back(set.members[pos]);
    return out;
}

IndexSimilarity set_similarity(const RecordSet& set, const SimilarityModel& model) {
    return [&set, &model](std::size_t a, std::size_t b) {
        return model(set.members[a].representative, set.members[b].representative);
    };
}

GuardedOutcome guarded_cluster(Gateway& gateway, const RecordSet& set, const SimilarityModel& model,
                               std::size_t max_regen, bool guardrail, std::optional<ClusterOutcome> first) {
    GuardedOutcome out;
    out.set = set;
    ClusterOutcome answer = first ? std::move(*first) : gateway.cluster_records(set);
    for (;;) {
        out.calls += answer.attempts;
        out.clustering = std::move(answer.clustering);
        out.fallback = answer.fallback;
        if (!guardrail) break;
        const auto sim = set_similarity(out.set, model);
        if (passes_guardrail(out.clustering, sim)) break;
        ++out.guardrail_failures;
        if (out.regenerations == max_regen) {
            out.exhausted = true;
            break;
        }
        out.set = regenerate_set(out.set, out.clustering, sim);
        ++out.regenerations;
        answer = gateway.cluster_records(out.set);
    }
    return out;
}

RecordIndex choose_representative(std::span<const RecordIndex> members, const SimilarityModel& model) {
    if (members.empty()) throw Error(ErrorCode::EmptyInput, "cluster without members");
    if (members.size() == 1) return members.front();
    const std::size_t dim = model.embedding(members.front()).dim();
    std::vector<double> mean(dim, 0.0);
    for (RecordIndex r : members) {
        const auto& v = model.embedding(r).values;
        for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
    }
    double mean_norm = 0.0;
    for (double x : mean) mean_norm += x * x;
    if (mean_norm == 0.0) return *std::min_element(members.begin(), members.end());

    RecordIndex best = members.front();
    double best_sim = -2.0;
    for (RecordIndex r : members) {
        const auto& v = model.embedding(r).values;
        double dot = 0.0;
        double norm = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += v[d] * mean[d];
            norm += v[d] * v[d];
        }
        const double sim = norm == 0.0 ? -1.0 : dot / std::sqrt(norm * mean_norm);
        if (sim > best_sim || (sim == best_sim && r < best)) {
            best_sim = sim;
            best = r;
        }
    }
    return best;
}

LevelState::LevelState(std::span<const RecordIndex> universe) : store(universe) {
    for (RecordIndex r : universe) active.emplace(r, ClusterNode::singleton(r));
}

std::vector<ClusterNode> LevelState::nodes() const {
    std::vector<ClusterNode> out;
    out.reserve(active.size());
    for (const auto& [root, node] : active) out.push_back(node);
    std::sort(out.begin(), out.end(),
              [](const ClusterNode& a, const ClusterNode& b) { return a.members.front() < b.members.front(); });
    return out;
}

bool LevelState::cannot_link(const ClusterNode& a, const ClusterNode& b) {
    return store.cannot_link(a.members.front(), b.members.front());
}

std::vector<ClusterNode> apply_clustering(LevelState& state, const RecordSet& set, const SetClustering& clustering,
                                          const SimilarityModel& model) {
    clustering.validate(set.size());
    const auto& nodes = set.members;

    // Split groups that contradict known cannot-links (first fit, in group order).
    std::vector<std::vector<std::size_t>> parts;
    std::vector<std::size_t> part_group;
    for (std::size_t g = 0; g < clustering.groups.size(); ++g) {
        const std::size_t first_part = parts.size();
        for (std::size_t pos : clustering.groups[g]) {
            bool placed = false;
            for (std::size_t p = first_part; p < parts.size() && !placed; ++p) {
                const bool compatible = std::none_of(parts[p].begin(), parts[p].end(), [&](std::size_t q) {
                    return state.cannot_link(nodes[pos], nodes[q]);
                });
                if (compatible) {
                    parts[p].push_back(pos);
                    placed = true;
                }
            }
            if (!placed) {
                parts.push_back({pos});
                part_group.push_back(g);
            }
        }
        if (parts.size() - first_part > 1) ++state.conflict_warnings;
    }

    for (const auto& node : nodes) state.active.erase(state.store.root(node.members.front()));
    for (const auto& part : parts) {
        for (std::size_t k = 1; k < part.size(); ++k) {
            state.store.merge(nodes[part.front()].members.front(), nodes[part[k]].members.front());
        }
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::size_t j = i + 1; j < parts.size(); ++j) {
            if (part_group[i] == part_group[j]) continue;
            const RecordIndex a = nodes[parts[i].front()].members.front();
            const RecordIndex b = nodes[parts[j].front()].members.front();
            if (state.store.same_entity(a, b)) {
                ++state.conflict_warnings;
            } else if (!state.store.cannot_link(a, b)) {
                state.store.add_cannot_link(a, b);
            }
        }
    }

    std::vector<ClusterNode> out;
    for (const auto& part : parts) {
        ClusterNode node;
        if (part.size() == 1) {
            node = nodes[part.front()];
        } else {
            for (std::size_t pos : part) {
                node.members.insert(node.members.end(), nodes[pos].members.begin(), nodes[pos].members.end());
            }
            std::sort(node.members.begin(), node.members.end());
            node.representative = choose_representative(node.members, model);
        }
        node.origin_set = set.set_id;
        state.active[state.store.root(node.members.front())] = node;
        out.push_back(std::move(node));
    }
    return out;
}

MergePlan merge_round(LevelState& state, std::span<const OriginSet> origins, const SetConfig& config,
                      const SimilarityModel& model, std::string_view id_prefix) {
    MergePlan plan;
    for (std::size_t start = 0; start < origins.size();) {
        const std::size_t k = std::min(config.set_size, origins.size() - start);
        const std::size_t segment = (k + config.diversity - 1) / config.diversity;
        std::vector<std::vector<bool>> selected;
        for (std::size_t i = start; i < start + k; ++i) selected.emplace_back(origins[i].clusters.size(), false);

        for (;;) {
            std::vector<ClusterNode> next;
            for (std::size_t first = start; first < start + k; first += segment) {
                const ClusterNode* prev = nullptr;
                for (std::size_t i = first; i < std::min(first + segment, start + k); ++i) {
                    const auto& clusters = origins[i].clusters;
                    auto& used = selected[i - start];
                    std::optional<std::size_t> pick;
                    double best = 0.0;
                    for (std::size_t c = 0; c < clusters.size(); ++c) {
                        if (used[c]) continue;
                        const bool blocked = std::any_of(next.begin(), next.end(), [&](const ClusterNode& m) {
                            return state.cannot_link(m, clusters[c]);
                        });
                        if (blocked) continue;
                        if (prev == nullptr) {
                            pick = c;
                            break;
                        }
                        const double sim = model.cosine(prev->representative, clusters[c].representative);
                        if (!pick || sim > best) {
                            pick = c;
                            best = sim;
                        }
                    }
                    if (!pick) continue;
                    used[*pick] = true;
                    next.push_back(clusters[*pick]);
                    prev = &clusters[*pick];
                }
            }
            if (next.empty()) break;
            if (next.size() == 1) {
                plan.unpacked.push_back(std::move(next.front()));
            } else {
                plan.sets.push_back(RecordSet{fmt::format("{}/s{}", id_prefix, plan.sets.size()), std::move(next),
                                              state.level});
            }
        }
        start += k;
    }
    return plan;
}

std::vector<std::pair<std::size_t, std::size_t>> unresolved_pairs(LevelState& state,
                                                                  std::span<const ClusterNode> nodes) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = i + 1; j < nodes.size(); ++j) {
            const RecordIndex a = nodes[i].members.front();
            const RecordIndex b = nodes[j].members.front();
            if (!state.store.same_entity(a, b) && !state.store.cannot_link(a, b)) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<RecordSet> final_check(LevelState& state, const SetConfig& config, const SimilarityModel& model,
                                   std::string_view id_prefix) {
    const auto nodes = state.nodes();
    const std::size_t n = nodes.size();
    std::vector<std::vector<char>> open(n, std::vector<char>(n, 0));
    std::vector<std::size_t> degree(n, 0);
    std::size_t remaining = 0;
    for (auto [i, j] : unresolved_pairs(state, nodes)) {
        open[i][j] = open[j][i] = 1;
        ++degree[i];
        ++degree[j];
        ++remaining;
    }

    std::vector<RecordSet> out;
    std::vector<char> in_set(n, 0);
    while (remaining > 0) {
        std::size_t seed = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (degree[i] > degree[seed]) seed = i;
        }
        std::vector<std::size_t> members{seed};
        in_set[seed] = 1;
        while (members.size() < config.set_size) {
            std::size_t best = n;
            std::size_t best_gain = 0;
            for (std::size_t c = 0; c < n; ++c) {
                if (in_set[c] || degree[c] == 0) continue;
                std::size_t gain = 0;
                for (std::size_t m : members) gain += open[c][m];
                if (gain > best_gain) {
                    best_gain = gain;
                    best = c;
                }
            }
            if (best == n) break;
            members.push_back(best);
            in_set[best] = 1;
        }
        for (std::size_t x = 0; x < members.size(); ++x) {
            for (std::size_t y = x + 1; y < members.size(); ++y) {
                const std::size_t a = members[x];
                const std::size_t b = members[y];
                if (!open[a][b]) continue;
                open[a][b] = open[b][a] = 0;
                --degree[a];
                --degree[b];
                --remaining;
            }
        }
        for (std::size_t m : members) in_set[m] = 0;

        std::sort(members.begin(), members.end());
        const auto order = sequential_order(members.size(), [&](std::size_t a, std::size_t b) {
            return model(nodes[members[a]].representative, nodes[members[b]].representative);
        });
        RecordSet set{fmt::format("{}/s{}", id_prefix, out.size()), {}, state.level};
        for (std::size_t pos : order) set.members.push_back(nodes[members[pos]]);
        out.push_back(std::move(set));
    }
    return out;
}

void EngineConfig::validate() const {
    sets.validate();
    if (parallelism == 0) throw Error(ErrorCode::ConfigError, "parallelism must be at least 1");
    if (max_levels == 0) throw Error(ErrorCode::ConfigError, "max_levels must be at least 1");
}

namespace {

struct BlockRun {
    std::vector<std::vector<RecordIndex>> groups;
    RunReport report;
};

class BlockResolver {
  public:
    BlockResolver(const Block& block, const SimilarityModel& model, Gateway& gateway, const EngineConfig& config,
                  std::size_t threads)
        : block_(block), model_(model), gateway_(gateway), config_(config), threads_(threads),
          state_(block.members) {}

    BlockRun run() {
        const auto carved = carve_block(block_.members, config_.sets, model_);
        std::vector<RecordSet> sets;
        for (const auto& records : carved) {
            RecordSet set{fmt::format("b{}/l0/s{}", block_.block_id, sets.size()), {}, 0};
            for (RecordIndex r : records) set.members.push_back(ClusterNode::singleton(r));
            sets.push_back(std::move(set));
        }

        std::vector<OriginSet> origins;
        bool exit = round(sets, origins);
        for (std::size_t level = 1; !exit && level < config_.max_levels; ++level) {
            state_.level = level;
            MergePlan plan =
                merge_round(state_, origins, config_.sets, model_, fmt::format("b{}/l{}", block_.block_id, level));
            if (plan.sets.empty()) break;
            exit = round(plan.sets, origins);
            for (auto& node : plan.unpacked) {
                origins.push_back(OriginSet{node.origin_set.value_or(""), {std::move(node)}});
            }
        }

        for (std::size_t r = 0; r < config_.max_final_rounds; ++r) {
            const auto before = unresolved_pairs(state_, state_.nodes()).size();
            auto check = final_check(state_, config_.sets, model_, fmt::format("b{}/f{}", block_.block_id, r));
            if (check.empty()) break;
            run_.report.final_check_sets += check.size();
            ++run_.report.final_check_rounds;
            std::vector<OriginSet> ignored;
            cluster_and_apply(check, ignored);
            if (unresolved_pairs(state_, state_.nodes()).size() >= before) break;
        }

        run_.report.conflict_warnings = state_.conflict_warnings;
        run_.groups = state_.store.groups();
        return std::move(run_);
    }

  private:
    /// One hierarchy level; returns true when every answer was all singletons.
    bool round(const std::vector<RecordSet>& sets, std::vector<OriginSet>& origins) {
        run_.report.sets_per_level.push_back(sets.size());
        origins.clear();
        return cluster_and_apply(sets, origins);
    }

    bool cluster_and_apply(const std::vector<RecordSet>& sets, std::vector<OriginSet>& origins) {
        const std::size_t batch = std::max<std::size_t>(1, gateway_.config().batch_size);
        const std::size_t chunks = (sets.size() + batch - 1) / batch;
        std::vector<GuardedOutcome> outcomes(sets.size());
        parallel_for(chunks, threads_, [&](std::size_t c) {
            const std::size_t lo = c * batch;
            const std::size_t hi = std::min(sets.size(), lo + batch);
            if (hi - lo == 1) {
                outcomes[lo] = guarded_cluster(gateway_, sets[lo], model_, config_.sets.max_regen, config_.guardrail);
                return;
            }
            auto answers = gateway_.cluster_batch(std::span<const RecordSet>(sets).subspan(lo, hi - lo));
            for (std::size_t i = lo; i < hi; ++i) {
                outcomes[i] = guarded_cluster(gateway_, sets[i], model_, config_.sets.max_regen, config_.guardrail,
                                              std::move(answers[i - lo]));
            }
        });

        bool all_singletons = true;
        auto& stats = run_.report.guardrail;
        for (const auto& o : outcomes) {
            if (config_.guardrail) stats.checks += o.guardrail_failures + (o.exhausted ? 0 : 1);
            stats.failures += o.guardrail_failures;
            stats.regenerations += o.regenerations;
            stats.exhaustions += o.exhausted ? 1 : 0;
            run_.report.fallbacks += o.fallback ? 1 : 0;
            all_singletons = all_singletons && o.clustering.all_singletons();
            origins.push_back(OriginSet{o.set.set_id, apply_clustering(state_, o.set, o.clustering, model_)});
        }
        return all_singletons;
    }

    const Block& block_;
    const SimilarityModel& model_;
    Gateway& gateway_;
    const EngineConfig& config_;
    std::size_t threads_;
    LevelState state_;
    BlockRun run_;
};

}  // namespace

Resolver::Resolver(std::span<const Record> records, const SimilarityModel& model, Gateway& gateway,
                   EngineConfig config)
    : records_(records), model_(model), gateway_(gateway), config_(config) {
    config_.validate();
    if (model_.size() != records_.size()) {
        throw Error(ErrorCode::DimMismatch,
                    fmt::format("{} records but {} embeddings", records_.size(), model_.size()));
    }
}

Resolution Resolver::resolve(std::span<const Block> blocks) {
    blocks_as_partition(blocks).validate(records_.size());

    std::vector<BlockRun> runs(blocks.size());
    const std::size_t inner = blocks.size() == 1 ? config_.parallelism : 1;
    parallel_for(blocks.size(), config_.parallelism, [&](std::size_t b) {
        runs[b] = BlockResolver(blocks[b], model_, gateway_, config_, inner).run();
    });

    Resolution out;
    out.report.blocks = blocks.size();
    for (auto& run : runs) {
        auto& levels = out.report.sets_per_level;
        const auto& mine = run.report.sets_per_level;
        if (levels.size() < mine.size()) levels.resize(mine.size(), 0);
        for (std::size_t l = 0; l < mine.size(); ++l) levels[l] += mine[l];
        out.report.final_check_sets += run.report.final_check_sets;
        out.report.final_check_rounds = std::max(out.report.final_check_rounds, run.report.final_check_rounds);
        out.report.guardrail.checks += run.report.guardrail.checks;
        out.report.guardrail.failures += run.report.guardrail.failures;
        out.report.guardrail.regenerations += run.report.guardrail.regenerations;
        out.report.guardrail.exhaustions += run.report.guardrail.exhaustions;
        out.report.conflict_warnings += run.report.conflict_warnings;
        out.report.fallbacks += run.report.fallbacks;
        for (auto& g : run.groups) out.partition.clusters.push_back(std::move(g));
    }
    out.partition.canonicalize();
    out.report.ledger = gateway_.ledger().totals();
    return out;
}

std::vector<std::size_t> Resolver::pseudo_labels(std::span<const RecordIndex> sample) {
    if (sample.empty()) throw Error(ErrorCode::NoValidationData, "empty validation sample");
    Block block{0, std::vector<RecordIndex>(sample.begin(), sample.end())};
    std::sort(block.members.begin(), block.members.end());
    const auto run = BlockResolver(block, model_, gateway_, config_, config_.parallelism).run();

    std::vector<std::size_t> labels(sample.size(), 0);
    for (std::size_t g = 0; g < run.groups.size(); ++g) {
        for (RecordIndex r : run.groups[g]) {
            const auto it = std::find(sample.begin(), sample.end(), r);
            labels[static_cast<std::size_t>(it - sample.begin())] = g;
        }
    }
    return labels;
}

}  // namespace llmcer
