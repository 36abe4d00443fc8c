#include "llmcer/constraint_store.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

#include "llmcer/error.hpp"

namespace llmcer {

ConstraintStore::ConstraintStore(std::span<const RecordIndex> universe)
    : ids_(universe.begin(), universe.end()) {
    dense_.reserve(ids_.size());
    for (std::uint32_t i = 0; i < ids_.size(); ++i) {
        if (!dense_.emplace(ids_[i], i).second) {
            throw Error(ErrorCode::DuplicateId, fmt::format("record index {} repeated", ids_[i]));
        }
    }
    parent_.resize(ids_.size());
    std::iota(parent_.begin(), parent_.end(), 0u);
    size_.assign(ids_.size(), 1);
    cannot_.resize(ids_.size());
}

std::uint32_t ConstraintStore::dense(RecordIndex r) const {
    auto it = dense_.find(r);
    if (it == dense_.end()) {
        throw Error(ErrorCode::MissingRecord, fmt::format("record index {} not in store", r));
    }
    return it->second;
}

std::uint32_t ConstraintStore::find(std::uint32_t x) {
    std::uint32_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
        const std::uint32_t next = parent_[x];
        parent_[x] = root;
        x = next;
    }
    return root;
}

void ConstraintStore::merge(RecordIndex a, RecordIndex b) {
    std::uint32_t ra = find(dense(a));
    std::uint32_t rb = find(dense(b));
    if (ra == rb) return;
    if (cannot_[ra].contains(rb)) {
        throw Error(ErrorCode::ConstraintConflict,
                    fmt::format("records {} and {} are cannot-linked", a, b));
    }
    if (size_[ra] < size_[rb]) std::swap(ra, rb);
    // rb is absorbed into ra; relabel every cannot-link that pointed at rb.
    parent_[rb] = ra;
    size_[ra] += size_[rb];
    for (std::uint32_t other : cannot_[rb]) {
        cannot_[other].erase(rb);
        cannot_[other].insert(ra);
        cannot_[ra].insert(other);
    }
    cannot_[rb].clear();
}

void ConstraintStore::add_cannot_link(RecordIndex a, RecordIndex b) {
    const std::uint32_t ra = find(dense(a));
    const std::uint32_t rb = find(dense(b));
    if (ra == rb) {
        throw Error(ErrorCode::ConstraintConflict,
                    fmt::format("records {} and {} are already the same entity", a, b));
    }
    cannot_[ra].insert(rb);
    cannot_[rb].insert(ra);
}

RecordIndex ConstraintStore::root(RecordIndex r) { return ids_[find(dense(r))]; }

bool ConstraintStore::same_entity(RecordIndex a, RecordIndex b) {
    return find(dense(a)) == find(dense(b));
}

bool ConstraintStore::cannot_link(RecordIndex a, RecordIndex b) {
    const std::uint32_t ra = find(dense(a));
    const std::uint32_t rb = find(dense(b));
    return ra != rb && cannot_[ra].contains(rb);
}

std::size_t ConstraintStore::cannot_link_count() const {
    std::size_t total = 0;
    for (const auto& s : cannot_) total += s.size();
    return total / 2;
}

std::vector<std::vector<RecordIndex>> ConstraintStore::groups() {
    std::unordered_map<std::uint32_t, std::size_t> slot;
    std::vector<std::vector<RecordIndex>> out;
    for (std::uint32_t i = 0; i < ids_.size(); ++i) {
        const std::uint32_t r = find(i);
        auto [it, inserted] = slot.emplace(r, out.size());
        if (inserted) out.emplace_back();
        out[it->second].push_back(ids_[i]);
    }
    for (auto& g : out) std::sort(g.begin(), g.end());
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
    return out;
}

}  // namespace llmcer
