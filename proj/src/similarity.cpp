#include "llmcer/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "llmcer/error.hpp"

namespace llmcer {

std::uint64_t stable_hash(std::string_view text, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

std::vector<std::string> TokenSet::distinct() const {
    std::vector<std::string> out = tokens;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string serialize(const Record& record) {
    std::string out;
    for (const auto& attr : record.attributes) {
        if (attr.value.empty()) continue;
        if (!out.empty()) out += ' ';
        out += attr.name;
        out += ": ";
        out += attr.value;
    }
    return out;
}

namespace {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

}  // namespace

std::vector<std::string> char_ngrams(std::string_view word, std::size_t n) {
    if (n == 0 || word.size() <= n) return {std::string(word)};
    std::vector<std::string> grams;
    grams.reserve(word.size() - n + 1);
    for (std::size_t i = 0; i + n <= word.size(); ++i) grams.emplace_back(word.substr(i, n));
    return grams;
}

TokenSet tokenize(const Record& record, TokenScheme scheme, std::size_t n) {
    if (record.attributes.empty()) {
        throw Error(ErrorCode::EmptyRecord, fmt::format("record '{}' has no attributes", record.id));
    }
    TokenSet out;
    for (auto& word : split_words(serialize(record))) {
        if (scheme == TokenScheme::word) {
            out.tokens.push_back(std::move(word));
        } else {
            for (auto& g : char_ngrams(word, n)) out.tokens.push_back(std::move(g));
        }
    }
    return out;
}

double jaccard(const TokenSet& a, const TokenSet& b) {
    const auto da = a.distinct();
    const auto db = b.distinct();
    if (da.empty() && db.empty()) return 1.0;
    std::size_t common = 0;
    auto i = da.begin();
    auto j = db.begin();
    while (i != da.end() && j != db.end()) {
        if (*i == *j) {
            ++common, ++i, ++j;
        } else if (*i < *j) {
            ++i;
        } else {
            ++j;
        }
    }
    return static_cast<double>(common) / static_cast<double>(da.size() + db.size() - common);
}

double jaccard_sorted(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t common = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++common, ++i, ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

double Embedding::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

double cosine(const Embedding& u, const Embedding& v) {
    if (u.dim() != v.dim()) {
        throw Error(ErrorCode::DimMismatch, fmt::format("{} vs {}", u.dim(), v.dim()));
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) dot += u.values[i] * v.values[i];
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

HashedTfidfEmbedder::HashedTfidfEmbedder(std::span<const Record> corpus, std::size_t dim,
                                         std::uint64_t seed)
    : dim_(dim), seed_(seed), corpus_size_(corpus.size()) {
    if (dim_ == 0) throw Error(ErrorCode::ConfigError, "embedding dim must be positive");
    for (const auto& record : corpus) {
        if (record.attributes.empty()) continue;
        for (const auto& token : tokenize(record).distinct()) ++df_[token];
    }
}

double HashedTfidfEmbedder::idf(const std::string& token) const {
    auto it = df_.find(token);
    const double df = it == df_.end() ? 1.0 : static_cast<double>(it->second);
    return std::log(1.0 + static_cast<double>(std::max<std::size_t>(corpus_size_, 1)) / df);
}

Embedding HashedTfidfEmbedder::embed(const Record& record) const {
    const TokenSet tokens = tokenize(record);
    if (tokens.empty()) {
        throw Error(ErrorCode::EmptyRecord, fmt::format("record '{}' has no tokens", record.id));
    }
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& t : tokens.tokens) ++tf[t];

    Embedding e{std::vector<double>(dim_, 0.0)};
    for (const auto& [token, count] : tf) {
        const std::uint64_t h = stable_hash(token, seed_);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        e.values[h % dim_] += sign * static_cast<double>(count) * idf(token);
    }
    const double n = e.norm();
    if (n == 0.0) {
        // Every token cancelled out in its bucket; fall back to an unsigned projection.
        for (const auto& [token, count] : tf) {
            e.values[stable_hash(token, seed_) % dim_] += static_cast<double>(count) * idf(token);
        }
    }
    const double final_norm = e.norm();
    for (double& v : e.values) v /= final_norm;
    return e;
}

std::vector<Embedding> HashedTfidfEmbedder::embed_all(std::span<const Record> records) const {
    std::vector<Embedding> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(embed(r));
    return out;
}

std::vector<Embedding> load_embeddings(const std::filesystem::path& path, std::span<const Record> records) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, fmt::format("cannot open {}", path.string()));
    detail::CsvReader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row) || row.empty() || row[0] != "id") {
        throw Error(ErrorCode::ParseError, fmt::format("{}: expected header 'id,d0,...'", path.string()));
    }
    const std::size_t header_dim = row.size() - 1;

    std::unordered_map<std::string, Embedding> by_id;
    std::size_t line = 1;
    std::size_t dim = 0;
    while (reader.next(row)) {
        ++line;
        if (row.size() == 1 && row[0].empty()) continue;
        Embedding e;
        e.values.reserve(row.size() - 1);
        for (std::size_t i = 1; i < row.size(); ++i) {
            try {
                std::size_t used = 0;
                e.values.push_back(std::stod(row[i], &used));
                if (used != row[i].size()) throw std::invalid_argument(row[i]);
            } catch (const std::exception&) {
                throw Error(ErrorCode::ParseError,
                            fmt::format("{}:{}: bad number '{}'", path.string(), line, row[i]));
            }
            if (!std::isfinite(e.values.back())) {
                throw Error(ErrorCode::ParseError, fmt::format("{}:{}: non-finite value", path.string(), line));
            }
        }
        if (dim == 0) dim = e.dim();
        if (e.dim() != dim || e.dim() == 0) {
            throw Error(ErrorCode::DimMismatch,
                        fmt::format("{}:{}: row has dim {} but earlier rows have {}", path.string(), line,
                                    e.dim(), dim));
        }
        by_id[row[0]] = std::move(e);
    }
    if (dim != 0 && header_dim != dim) {
        throw Error(ErrorCode::DimMismatch,
                    fmt::format("{}: header declares dim {} but rows have {}", path.string(), header_dim, dim));
    }

    std::vector<Embedding> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto it = by_id.find(r.id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::MissingRecord, fmt::format("no embedding for record '{}'", r.id));
        }
        out.push_back(it->second);
    }
    return out;
}

void write_embeddings(const std::filesystem::path& path, std::span<const Record> records,
                      std::span<const Embedding> embeddings) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, fmt::format("cannot write {}", path.string()));
    const std::size_t dim = embeddings.empty() ? 0 : embeddings.front().dim();
    out << "id";
    for (std::size_t d = 0; d < dim; ++d) out << ",d" << d;
    out << '\n';
    for (std::size_t i = 0; i < records.size(); ++i) {
        out << detail::csv_escape(records[i].id);
        for (double v : embeddings[i].values) out << ',' << fmt::format("{:.17g}", v);
        out << '\n';
    }
}

std::string_view to_string(Measure m) { return m == Measure::jaccard ? "jaccard" : "cosine"; }

Measure parse_measure(std::string_view name) {
    if (name == "jaccard") return Measure::jaccard;
    if (name == "cosine") return Measure::cosine;
    throw Error(ErrorCode::ConfigError, fmt::format("unknown similarity measure '{}'", name));
}

SimilarityModel::SimilarityModel(std::span<const Record> records, std::vector<Embedding> embeddings,
                                 Measure measure)
    : measure_(measure), embeddings_(std::move(embeddings)) {
    if (embeddings_.size() != records.size()) {
        throw Error(ErrorCode::MissingRecord,
                    fmt::format("{} embeddings for {} records", embeddings_.size(), records.size()));
    }
    norms_.reserve(embeddings_.size());
    for (const auto& e : embeddings_) {
        if (e.dim() != embeddings_.front().dim()) {
            throw Error(ErrorCode::DimMismatch, "embeddings have inconsistent dimensions");
        }
        norms_.push_back(e.norm());
    }

    std::unordered_map<std::string, std::uint32_t> vocab;
    token_ids_.reserve(records.size());
    for (const auto& r : records) {
        std::vector<std::uint32_t> ids;
        if (!r.attributes.empty()) {
            for (const auto& t : tokenize(r).distinct()) {
                auto [it, inserted] = vocab.emplace(t, static_cast<std::uint32_t>(vocab.size()));
                ids.push_back(it->second);
            }
        }
        std::sort(ids.begin(), ids.end());
        token_ids_.push_back(std::move(ids));
    }
}

double SimilarityModel::cosine(RecordIndex a, RecordIndex b) const {
    if (a == b) return 1.0;
    const auto& u = embeddings_[a].values;
    const auto& v = embeddings_[b].values;
    const double denom = norms_[a] * norms_[b];
    if (denom == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
    return std::clamp(dot / denom, -1.0, 1.0);
}

double SimilarityModel::jaccard(RecordIndex a, RecordIndex b) const {
    return jaccard_sorted(token_ids_[a], token_ids_[b]);
}

double SimilarityModel::operator()(RecordIndex a, RecordIndex b) const {
    return measure_ == Measure::jaccard ? jaccard(a, b) : cosine(a, b);
}

}  // namespace llmcer
