#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace llmcer {

/// Dense index of a record inside its Dataset. External ids stay text.
using RecordIndex = std::uint32_t;

enum class AttributeKind { textual, numeric, categorical };

std::string_view to_string(AttributeKind kind);

struct Attribute {
    std::string name;
    std::string value;
    AttributeKind kind = AttributeKind::textual;
};

struct Record {
    std::string id;
    std::vector<Attribute> attributes;
    std::optional<std::string> source;
};

/// A cluster of records standing in for one entity at some hierarchy level.
/// `members` is kept sorted; the representative is what gets shown to the model.
struct ClusterNode {
    std::vector<RecordIndex> members;
    RecordIndex representative = 0;
    std::optional<std::string> origin_set;

    static ClusterNode singleton(RecordIndex r) { return ClusterNode{{r}, r, std::nullopt}; }
    bool contains(RecordIndex r) const;
};

/// Ordered members submitted to one clustering call.
struct RecordSet {
    std::string set_id;
    std::vector<ClusterNode> members;
    std::size_t level = 0;

    std::size_t size() const { return members.size(); }
};

/// Partition of a record set's members, expressed as positions into RecordSet::members.
struct SetClustering {
    std::string source;
    std::vector<std::vector<std::size_t>> groups;

    /// Throws MalformedResponse-free invariant errors (DuplicateMember/MissingMember/UnknownLabel)
    /// when groups are not an exact cover of [0, member_count).
    void validate(std::size_t member_count) const;
    bool all_singletons() const;

    static SetClustering singletons(std::string source, std::size_t member_count);
};

/// Global ER result: disjoint clusters covering every record index exactly once.
struct Partition {
    std::vector<std::vector<RecordIndex>> clusters;

    /// Throws UniverseMismatch unless the clusters exactly cover [0, record_count).
    void validate(std::size_t record_count) const;
    std::size_t record_count() const;
    /// Cluster label per record index; clusters numbered in stored order.
    std::vector<std::size_t> labels() const;

    static Partition from_labels(std::span<const std::size_t> labels);
    /// Sorts members and orders clusters by their smallest member.
    void canonicalize();
};

/// Record-set construction knobs. Defaults follow the best operating point
/// found for in-context clustering (9 records, 4 entities, balanced sizes).
struct SetConfig {
    std::size_t set_size = 9;
    std::size_t diversity = 4;
    double temperature = 0.0;
    std::size_t batch_size = 1;
    std::size_t max_regen = 2;
    std::uint64_t seed = 42;

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

}  // namespace llmcer
