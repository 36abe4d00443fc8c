#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llmcer/blocking.hpp"
#include "llmcer/constraint_store.hpp"
#include "llmcer/cost_ledger.hpp"
#include "llmcer/llm_gateway.hpp"
#include "llmcer/record.hpp"
#include "llmcer/set_builder.hpp"
#include "llmcer/similarity.hpp"

namespace llmcer {

/// Positions of members whose minimum similarity inside their own group is below
/// their maximum similarity to any other group. Singleton groups count as intra 1.0;
/// a clustering with one group has inter 0.0.
std::vector<std::size_t> misclustered(const SetClustering& clustering, const IndexSimilarity& similarity);

/// True when no member is misclustered.
bool passes_guardrail(const SetClustering& clustering, const IndexSimilarity& similarity);

/// Moves every misclustered member, in original order, to just after the last member
/// of the group it is most similar to. `similarity` is indexed by original position.
RecordSet regenerate_set(const RecordSet& set, const SetClustering& clustering, const IndexSimilarity& similarity);

/// Similarity between two positions of `set`, through the members' representatives.
IndexSimilarity set_similarity(const RecordSet& set, const SimilarityModel& model);

struct GuardedOutcome {
    RecordSet set;             ///< the order actually used for `clustering`
    SetClustering clustering;
    std::size_t calls = 0;     ///< backend attempts, parse retries included
    std::size_t guardrail_failures = 0;
    std::size_t regenerations = 0;
    bool exhausted = false;    ///< still failing after max_regen regenerations
    bool fallback = false;     ///< last answer was the all-singleton fallback
};

/// Clusters `set`, regenerating and re-asking while the guardrail rejects the answer
/// (at most max_regen times). `first` reuses an answer obtained elsewhere, e.g. from
/// a batched prompt. With `guardrail` off the first answer is always accepted.
GuardedOutcome guarded_cluster(Gateway& gateway, const RecordSet& set, const SimilarityModel& model,
                               std::size_t max_regen, bool guardrail = true,
                               std::optional<ClusterOutcome> first = std::nullopt);

/// Member closest (cosine) to the mean embedding of `members`; ties to the lowest id.
RecordIndex choose_representative(std::span<const RecordIndex> members, const SimilarityModel& model);

/// Constraint store plus the active cluster nodes of one block.
struct LevelState {
    explicit LevelState(std::span<const RecordIndex> universe);

    ConstraintStore store;
    std::map<RecordIndex, ClusterNode> active;  ///< keyed by union-find root
    std::size_t level = 0;
    std::size_t conflict_warnings = 0;

    /// Active nodes ordered by smallest member.
    std::vector<ClusterNode> nodes() const;
    bool cannot_link(const ClusterNode& a, const ClusterNode& b);
};

/// Merges every group of `clustering` and cannot-links every pair of groups. A group
/// that would merge cannot-linked nodes is split along the existing cannot-links and
/// counted as a conflict warning. Returns the resulting nodes, one per (sub)group,
/// in group order.
std::vector<ClusterNode> apply_clustering(LevelState& state, const RecordSet& set, const SetClustering& clustering,
                                          const SimilarityModel& model);

/// Clusters produced by one record set.
struct OriginSet {
    std::string set_id;
    std::vector<ClusterNode> clusters;
};

struct MergePlan {
    std::vector<RecordSet> sets;
    /// Nodes that found no compatible partner; they carry over to the next level.
    std::vector<ClusterNode> unpacked;
};

/// Packs the clusters of consecutive batches of K = min(S_s, remaining) origin sets
/// into next-level sets. Each set takes at most one cluster per origin set, chained
/// by representative cosine within each of the S_d segments of ceil(K/S_d) sets.
/// Cannot-linked nodes are never packed together.
MergePlan merge_round(LevelState& state, std::span<const OriginSet> origins, const SetConfig& config,
                      const SimilarityModel& model, std::string_view id_prefix);

/// Node pairs of the level with distinct roots and no cannot-link.
std::vector<std::pair<std::size_t, std::size_t>> unresolved_pairs(LevelState& state,
                                                                  std::span<const ClusterNode> nodes);

/// Greedy cover of the unresolved pairs by sets of at most S_s nodes, each set
/// maximizing newly covered pairs. Sets are sequentially ordered.
std::vector<RecordSet> final_check(LevelState& state, const SetConfig& config, const SimilarityModel& model,
                                   std::string_view id_prefix);

struct GuardrailStats {
    std::size_t checks = 0;
    std::size_t failures = 0;
    std::size_t regenerations = 0;
    std::size_t exhaustions = 0;
};

struct RunReport {
    std::size_t blocks = 0;
    std::vector<std::size_t> sets_per_level;  ///< summed over blocks
    std::size_t final_check_sets = 0;
    std::size_t final_check_rounds = 0;
    GuardrailStats guardrail;
    std::size_t conflict_warnings = 0;
    std::size_t fallbacks = 0;
    LedgerTotals ledger;
};

struct EngineConfig {
    SetConfig sets;
    bool guardrail = true;
    std::size_t parallelism = 1;
    std::size_t max_levels = 32;
    std::size_t max_final_rounds = 50;

    void validate() const;
};

struct Resolution {
    Partition partition;
    RunReport report;
};

/// Hierarchical in-context clustering over blocks.
class Resolver {
  public:
    Resolver(std::span<const Record> records, const SimilarityModel& model, Gateway& gateway, EngineConfig config);

    /// Every record must sit in exactly one block. Records in different blocks are
    /// never compared. The ledger keeps whatever was spent even when this throws.
    Resolution resolve(std::span<const Block> blocks);

    /// Labels for `sample` obtained by resolving it as a single block; used as
    /// validation data when no ground truth is available.
    std::vector<std::size_t> pseudo_labels(std::span<const RecordIndex> sample);

  private:
    std::span<const Record> records_;
    const SimilarityModel& model_;
    Gateway& gateway_;
    EngineConfig config_;
};

}  // namespace llmcer
