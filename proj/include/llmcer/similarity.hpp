#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "llmcer/record.hpp"

namespace llmcer {

enum class TokenScheme { word, char_ngram };

/// Lowercased tokens of a serialized record; may contain repeats.
struct TokenSet {
    std::vector<std::string> tokens;

    /// Sorted, de-duplicated view used by set similarities.
    std::vector<std::string> distinct() const;
    bool empty() const { return tokens.empty(); }
};

/// "name: value" pairs in attribute order. Attributes with empty values are skipped.
std::string serialize(const Record& record);

/// Throws EmptyRecord if the record has no attributes.
TokenSet tokenize(const Record& record, TokenScheme scheme = TokenScheme::word, std::size_t n = 3);

/// Character n-grams of one word; words shorter than n are returned whole.
std::vector<std::string> char_ngrams(std::string_view word, std::size_t n);

/// |a ∩ b| / |a ∪ b| over distinct tokens; 1.0 when both are empty.
double jaccard(const TokenSet& a, const TokenSet& b);
/// Same, on sorted distinct integer token ids.
double jaccard_sorted(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

struct Embedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    double norm() const;
};

/// Throws DimMismatch or ZeroVector.
double cosine(const Embedding& u, const Embedding& v);

/// Signed feature hashing of TF-IDF weighted tokens, L2-normalized.
/// Document frequencies are frozen from the records passed at construction.
class HashedTfidfEmbedder {
  public:
    static constexpr std::size_t kDefaultDim = 256;
    static constexpr std::uint64_t kDefaultSeed = 0x5eed5eedULL;

    explicit HashedTfidfEmbedder(std::span<const Record> corpus, std::size_t dim = kDefaultDim,
                                 std::uint64_t seed = kDefaultSeed);

    /// Throws EmptyRecord when the record yields no tokens.
    Embedding embed(const Record& record) const;
    std::vector<Embedding> embed_all(std::span<const Record> records) const;

    std::size_t dim() const { return dim_; }
    double idf(const std::string& token) const;

  private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::size_t corpus_size_;
    std::unordered_map<std::string, std::uint32_t> df_;
};

/// Reads "id,d0,...,d{dim-1}" rows; result is indexed like `records`.
/// Throws ParseError, DimMismatch, or MissingRecord (naming the first absent id).
std::vector<Embedding> load_embeddings(const std::filesystem::path& path, std::span<const Record> records);
void write_embeddings(const std::filesystem::path& path, std::span<const Record> records,
                      std::span<const Embedding> embeddings);

enum class Measure { jaccard, cosine };

std::string_view to_string(Measure m);
Measure parse_measure(std::string_view name);

/// Record-level similarity F(.) shared by ordering, the guardrail and blocking.
class SimilarityModel {
  public:
    SimilarityModel(std::span<const Record> records, std::vector<Embedding> embeddings,
                    Measure measure = Measure::cosine);

    double operator()(RecordIndex a, RecordIndex b) const;
    double cosine(RecordIndex a, RecordIndex b) const;
    double jaccard(RecordIndex a, RecordIndex b) const;

    Measure measure() const { return measure_; }
    std::size_t size() const { return embeddings_.size(); }
    const Embedding& embedding(RecordIndex r) const { return embeddings_[r]; }
    std::span<const std::uint32_t> token_ids(RecordIndex r) const { return token_ids_[r]; }

  private:
    Measure measure_;
    std::vector<Embedding> embeddings_;
    std::vector<double> norms_;
    std::vector<std::vector<std::uint32_t>> token_ids_;
};

/// Stable 64-bit hash (FNV-1a followed by a splitmix finalizer).
std::uint64_t stable_hash(std::string_view text, std::uint64_t seed = 0);

}  // namespace llmcer
