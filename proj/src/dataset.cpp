#include "llmcer/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "csv.hpp"
#include "llmcer/error.hpp"

namespace llmcer {

namespace {

constexpr std::size_t kCategoricalCutoff = 20;

bool is_number(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

bool blank(const std::vector<std::string>& row) { return row.size() == 1 && row[0].empty(); }

}  // namespace

RecordIndex Dataset::index_of(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) throw Error(ErrorCode::MissingRecord, fmt::format("unknown record id '{}'", id));
    return it->second;
}

void Dataset::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!index_.emplace(records[i].id, static_cast<RecordIndex>(i)).second) {
            throw Error(ErrorCode::DuplicateId, fmt::format("record id '{}' repeated (row {})", records[i].id, i + 1));
        }
    }
}

std::vector<std::size_t> Dataset::entity_labels() const {
    if (!truth) throw Error(ErrorCode::NoValidationData, "dataset has no ground truth");
    std::unordered_map<std::string, std::size_t> dense;
    std::vector<std::size_t> labels;
    labels.reserve(truth->size());
    for (const auto& entity : *truth) labels.push_back(dense.emplace(entity, dense.size()).first->second);
    return labels;
}

Partition Dataset::truth_partition() const {
    const auto labels = entity_labels();
    Partition p = Partition::from_labels(labels);
    p.canonicalize();
    return p;
}

Dataset ingest(const std::filesystem::path& path, const IngestOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::EmptyFile, fmt::format("cannot read {}", path.string()));
    detail::CsvReader reader(in, options.delimiter);

    std::vector<std::string> header;
    if (!reader.next(header) || blank(header)) throw Error(ErrorCode::EmptyFile, path.string());
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

    const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto id_col = column(options.id_column);
    if (!id_col) {
        throw Error(ErrorCode::MissingHeader,
                    fmt::format("{}: no '{}' column in header", path.string(), options.id_column));
    }
    std::optional<std::size_t> truth_col;
    if (options.truth_column) {
        truth_col = column(*options.truth_column);
        if (!truth_col) {
            throw Error(ErrorCode::MissingHeader,
                        fmt::format("{}: no '{}' column in header", path.string(), *options.truth_column));
        }
    }

    Dataset ds;
    ds.provenance.push_back(path);
    if (truth_col) ds.truth.emplace();
    std::vector<std::string> row;
    std::size_t line = 1;
    while (reader.next(row)) {
        ++line;
        if (blank(row)) continue;
        if (row.size() != header.size()) {
            throw Error(ErrorCode::ParseError,
                        fmt::format("{}:{}: {} fields, header has {}", path.string(), line, row.size(), header.size()));
        }
        Record r;
        r.id = row[*id_col];
        if (r.id.empty()) throw Error(ErrorCode::ParseError, fmt::format("{}:{}: empty id", path.string(), line));
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == *id_col || c == truth_col) continue;
            r.attributes.push_back(Attribute{header[c], row[c], AttributeKind::textual});
        }
        if (truth_col) ds.truth->push_back(row[*truth_col]);
        ds.records.push_back(std::move(r));
    }
    if (ds.records.empty()) throw Error(ErrorCode::EmptyFile, fmt::format("{}: no data rows", path.string()));
    try {
        ds.reindex();
    } catch (const Error& e) {
        throw Error(ErrorCode::DuplicateId, fmt::format("{}: {}", path.string(), e.what()));
    }

    const std::size_t attrs = ds.records.front().attributes.size();
    for (std::size_t a = 0; a < attrs; ++a) {
        bool numeric = true;
        bool any = false;
        std::set<std::string_view> distinct;
        for (const auto& r : ds.records) {
            const std::string& v = r.attributes[a].value;
            if (v.empty()) continue;
            any = true;
            numeric = numeric && is_number(v);
            if (distinct.size() <= kCategoricalCutoff) distinct.insert(v);
        }
        AttributeKind kind = AttributeKind::textual;
        if (any && numeric) {
            kind = AttributeKind::numeric;
        } else if (distinct.size() <= kCategoricalCutoff) {
            kind = AttributeKind::categorical;
        }
        for (auto& r : ds.records) r.attributes[a].kind = kind;
    }
    return ds;
}

void attach_truth(Dataset& dataset, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ParseError, fmt::format("cannot read {}", path.string()));
    detail::CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row) || row.size() < 2) {
        throw Error(ErrorCode::ParseError, fmt::format("{}: expected header record_id,entity_id", path.string()));
    }
    std::vector<std::optional<std::string>> truth(dataset.records.size());
    std::size_t line = 1;
    while (reader.next(row)) {
        ++line;
        if (blank(row)) continue;
        if (row.size() != 2) throw Error(ErrorCode::ParseError, fmt::format("{}:{}: expected 2 fields", path.string(), line));
        truth[dataset.index_of(row[0])] = row[1];
    }
    std::vector<std::string> out;
    out.reserve(truth.size());
    for (std::size_t r = 0; r < truth.size(); ++r) {
        if (!truth[r]) {
            throw Error(ErrorCode::UncoveredRecord,
                        fmt::format("{}: no entity for record '{}'", path.string(), dataset.records[r].id));
        }
        out.push_back(std::move(*truth[r]));
    }
    dataset.truth = std::move(out);
    dataset.provenance.push_back(path);
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += fmt::format(".tmp{}", ::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::ConfigError, fmt::format("cannot write {}", path.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw Error(ErrorCode::ConfigError, fmt::format("write to {} failed", path.string()));
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string format_partition(const Dataset& dataset, const Partition& partition) {
    partition.validate(dataset.records.size());
    const auto labels = partition.labels();
    std::string out = "record_id,cluster_id\n";
    for (std::size_t r = 0; r < labels.size(); ++r) {
        out += fmt::format("{},{}\n", detail::csv_escape(dataset.records[r].id), labels[r]);
    }
    return out;
}

Partition read_partition(const std::filesystem::path& path, const Dataset& dataset) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ParseError, fmt::format("cannot read {}", path.string()));
    detail::CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row) || row.size() != 2) {
        throw Error(ErrorCode::ParseError, fmt::format("{}: expected header record_id,cluster_id", path.string()));
    }
    std::unordered_map<std::string, std::size_t> dense;
    std::vector<std::optional<std::size_t>> labels(dataset.records.size());
    std::size_t line = 1;
    while (reader.next(row)) {
        ++line;
        if (blank(row)) continue;
        if (row.size() != 2) throw Error(ErrorCode::ParseError, fmt::format("{}:{}: expected 2 fields", path.string(), line));
        const RecordIndex r = dataset.index_of(row[0]);
        if (labels[r]) {
            throw Error(ErrorCode::UniverseMismatch, fmt::format("{}: record '{}' listed twice", path.string(), row[0]));
        }
        labels[r] = dense.emplace(row[1], dense.size()).first->second;
    }
    std::vector<std::size_t> flat;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (!labels[r]) {
            throw Error(ErrorCode::UniverseMismatch,
                        fmt::format("{}: record '{}' missing", path.string(), dataset.records[r].id));
        }
        flat.push_back(*labels[r]);
    }
    Partition p = Partition::from_labels(flat);
    p.canonicalize();
    return p;
}

std::string format_blocks(const Dataset& dataset, std::span<const Block> blocks) {
    std::string out = "block_id,record_id\n";
    for (const auto& b : blocks) {
        for (RecordIndex r : b.members) out += fmt::format("{},{}\n", b.block_id, detail::csv_escape(dataset.records[r].id));
    }
    return out;
}

std::string format_dataset(const Dataset& dataset, std::string_view id_column, std::string_view truth_column) {
    std::string out(id_column);
    if (!dataset.records.empty()) {
        for (const auto& a : dataset.records.front().attributes) out += "," + detail::csv_escape(a.name);
    }
    if (dataset.truth) out += fmt::format(",{}", truth_column);
    out += '\n';
    for (std::size_t r = 0; r < dataset.records.size(); ++r) {
        out += detail::csv_escape(dataset.records[r].id);
        for (const auto& a : dataset.records[r].attributes) out += "," + detail::csv_escape(a.value);
        if (dataset.truth) out += "," + detail::csv_escape((*dataset.truth)[r]);
        out += '\n';
    }
    return out;
}

std::string format_truth(const Dataset& dataset) {
    if (!dataset.truth) throw Error(ErrorCode::NoValidationData, "dataset has no ground truth");
    std::string out = "record_id,entity_id\n";
    for (std::size_t r = 0; r < dataset.records.size(); ++r) {
        out += fmt::format("{},{}\n", detail::csv_escape(dataset.records[r].id), detail::csv_escape((*dataset.truth)[r]));
    }
    return out;
}

}  // namespace llmcer
