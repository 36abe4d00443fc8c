#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "llmcer/blocking.hpp"
#include "llmcer/record.hpp"

namespace llmcer {

/// Records of one delimited file plus optional ground truth.
struct Dataset {
    std::vector<Record> records;
    /// Entity id per record index, when known.
    std::optional<std::vector<std::string>> truth;
    std::vector<std::filesystem::path> provenance;

    /// Throws MissingRecord for an unknown id.
    RecordIndex index_of(std::string_view id) const;
    /// Rebuilds the id lookup; throws DuplicateId. Called by ingest.
    void reindex();

    /// Dense entity label per record; throws NoValidationData without truth.
    std::vector<std::size_t> entity_labels() const;
    Partition truth_partition() const;

  private:
    std::unordered_map<std::string, RecordIndex> index_;
};

struct IngestOptions {
    std::string id_column = "id";
    std::optional<std::string> truth_column;
    char delimiter = ',';
};

/// One record per data row; the truth column, if named, is moved out of the
/// attributes. Kinds: numeric when every non-empty value parses as a number,
/// categorical at <= 20 distinct values, textual otherwise.
/// Throws EmptyFile, MissingHeader, DuplicateId.
Dataset ingest(const std::filesystem::path& path, const IngestOptions& options = {});

/// Reads "record_id,entity_id" rows into dataset.truth. Every record must be covered.
/// Throws MissingRecord, UncoveredRecord, ParseError.
void attach_truth(Dataset& dataset, const std::filesystem::path& path);

/// Writes `content` to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);

/// Header "record_id,cluster_id"; clusters numbered in partition order.
std::string format_partition(const Dataset& dataset, const Partition& partition);
/// Reads "record_id,cluster_id"; throws MissingRecord / UniverseMismatch.
Partition read_partition(const std::filesystem::path& path, const Dataset& dataset);

/// Header "block_id,record_id".
std::string format_blocks(const Dataset& dataset, std::span<const Block> blocks);

/// The dataset as a delimited file; truth goes into `truth_column` when present.
std::string format_dataset(const Dataset& dataset, std::string_view id_column = "id",
                           std::string_view truth_column = "entity_id");
/// Header "record_id,entity_id".
std::string format_truth(const Dataset& dataset);

}  // namespace llmcer
