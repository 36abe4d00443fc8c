#include "llmcer/record.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "llmcer/error.hpp"

namespace llmcer {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConstraintConflict: return "ConstraintConflict";
        case ErrorCode::EmptyRecord: return "EmptyRecord";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::MissingRecord: return "MissingRecord";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::BadThresholds: return "BadThresholds";
        case ErrorCode::NoValidationData: return "NoValidationData";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::BadK: return "BadK";
        case ErrorCode::EmptyBlock: return "EmptyBlock";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::MissingMember: return "MissingMember";
        case ErrorCode::DuplicateMember: return "DuplicateMember";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::UncoveredRecord: return "UncoveredRecord";
        case ErrorCode::UniverseMismatch: return "UniverseMismatch";
        case ErrorCode::TooFewRecords: return "TooFewRecords";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::MissingHeader: return "MissingHeader";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Error";
}

std::string_view to_string(AttributeKind kind) {
    switch (kind) {
        case AttributeKind::textual: return "textual";
        case AttributeKind::numeric: return "numeric";
        case AttributeKind::categorical: return "categorical";
    }
    return "textual";
}

bool ClusterNode::contains(RecordIndex r) const {
    return std::binary_search(members.begin(), members.end(), r);
}

void SetClustering::validate(std::size_t member_count) const {
    std::vector<bool> seen(member_count, false);
    for (const auto& group : groups) {
        for (std::size_t pos : group) {
            if (pos >= member_count) {
                throw Error(ErrorCode::UnknownLabel, fmt::format("R{}", pos + 1));
            }
            if (seen[pos]) {
                throw Error(ErrorCode::DuplicateMember, fmt::format("R{}", pos + 1));
            }
            seen[pos] = true;
        }
    }
    for (std::size_t pos = 0; pos < member_count; ++pos) {
        if (!seen[pos]) throw Error(ErrorCode::MissingMember, fmt::format("R{}", pos + 1));
    }
}

bool SetClustering::all_singletons() const {
    return std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() <= 1; });
}

SetClustering SetClustering::singletons(std::string source, std::size_t member_count) {
    SetClustering c{std::move(source), {}};
    c.groups.reserve(member_count);
    for (std::size_t i = 0; i < member_count; ++i) c.groups.push_back({i});
    return c;
}

void Partition::validate(std::size_t record_count) const {
    std::vector<bool> seen(record_count, false);
    std::size_t total = 0;
    for (const auto& cluster : clusters) {
        if (cluster.empty()) throw Error(ErrorCode::UniverseMismatch, "empty cluster");
        for (RecordIndex r : cluster) {
            if (r >= record_count || seen[r]) {
                throw Error(ErrorCode::UniverseMismatch,
                            fmt::format("record index {} out of universe or repeated", r));
            }
            seen[r] = true;
            ++total;
        }
    }
    if (total != record_count) {
        throw Error(ErrorCode::UniverseMismatch,
                    fmt::format("partition covers {} of {} records", total, record_count));
    }
}

std::size_t Partition::record_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size();
    return n;
}

std::vector<std::size_t> Partition::labels() const {
    std::size_t n = 0;
    for (const auto& c : clusters) {
        for (RecordIndex r : c) n = std::max<std::size_t>(n, r + 1);
    }
    std::vector<std::size_t> out(n, 0);
    for (std::size_t k = 0; k < clusters.size(); ++k) {
        for (RecordIndex r : clusters[k]) out[r] = k;
    }
    return out;
}

Partition Partition::from_labels(std::span<const std::size_t> labels) {
    Partition p;
    std::vector<std::size_t> slot;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const std::size_t label = labels[r];
        if (label >= slot.size()) slot.resize(label + 1, SIZE_MAX);
        if (slot[label] == SIZE_MAX) {
            slot[label] = p.clusters.size();
            p.clusters.emplace_back();
        }
        p.clusters[slot[label]].push_back(static_cast<RecordIndex>(r));
    }
    return p;
}

void Partition::canonicalize() {
    for (auto& c : clusters) std::sort(c.begin(), c.end());
    std::erase_if(clusters, [](const auto& c) { return c.empty(); });
    std::sort(clusters.begin(), clusters.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

void SetConfig::validate() const {
    if (set_size == 0) throw Error(ErrorCode::ConfigError, "set_size must be positive");
    if (diversity == 0) throw Error(ErrorCode::ConfigError, "diversity must be positive");
    if (diversity > set_size) {
        throw Error(ErrorCode::ConfigError,
                    fmt::format("diversity ({}) must not exceed set_size ({})", diversity, set_size));
    }
    if (batch_size == 0) throw Error(ErrorCode::ConfigError, "batch_size must be at least 1");
    if (temperature < 0.0) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
}

}  // namespace llmcer
