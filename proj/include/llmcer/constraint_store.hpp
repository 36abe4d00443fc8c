#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "llmcer/record.hpp"

namespace llmcer {

/// Must-link / cannot-link knowledge over a fixed universe of records.
///
/// Must-links live in a union-find (path compression, union by size).
/// Cannot-links are stored between union-find roots and rewritten onto the
/// surviving root whenever two roots merge, so a cannot-link between a and b
/// holds for everything must-linked to either side.
///
/// Single writer. Queries compress paths, so they count as writes too.
class ConstraintStore {
  public:
    ConstraintStore() = default;
    explicit ConstraintStore(std::span<const RecordIndex> universe);

    bool contains(RecordIndex r) const { return dense_.contains(r); }
    std::size_t size() const { return ids_.size(); }

    /// Unifies a and b. Throws ConstraintConflict if their roots are cannot-linked.
    void merge(RecordIndex a, RecordIndex b);
    /// Throws ConstraintConflict if a and b already share a root.
    void add_cannot_link(RecordIndex a, RecordIndex b);

    RecordIndex root(RecordIndex r);
    bool same_entity(RecordIndex a, RecordIndex b);
    bool cannot_link(RecordIndex a, RecordIndex b);
    /// Number of cannot-link pairs between distinct roots.
    std::size_t cannot_link_count() const;

    /// Groups of the universe by root; each group sorted, groups ordered by smallest member.
    std::vector<std::vector<RecordIndex>> groups();

  private:
    std::uint32_t dense(RecordIndex r) const;
    std::uint32_t find(std::uint32_t x);

    std::vector<RecordIndex> ids_;
    std::unordered_map<RecordIndex, std::uint32_t> dense_;
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> size_;
    std::vector<std::unordered_set<std::uint32_t>> cannot_;
};

}  // namespace llmcer
