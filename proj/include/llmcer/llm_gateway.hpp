#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llmcer/cost_ledger.hpp"
#include "llmcer/record.hpp"

namespace llmcer {

/// Appended to the user message when a response could not be parsed.
inline constexpr std::string_view kFormatReminder =
    "Answer ONLY with one line per cluster, comma-separated labels.";

/// One record set inside a prompt: label Rk refers to `shown[k-1]`.
struct PromptSection {
    std::string set_id;
    std::vector<RecordIndex> shown;
};

struct Prompt {
    std::string system_text;
    std::string user_text;
    std::vector<PromptSection> sections;
};

/// Zero-shot clustering prompt. Each member is shown through its representative
/// as "Rk | name: value | ..."; several sets get "SET j" headers and labels restart.
Prompt build_prompt(std::span<const RecordSet> sets, std::span<const Record> records);

/// One line per group of comma-separated "Rk" labels. Throws MalformedResponse,
/// UnknownLabel, DuplicateMember or MissingMember.
SetClustering parse_clustering(std::string_view response, std::size_t member_count, std::string source = {});

/// Splits a batched response on its "SET j" headers; a single set is parsed whole.
std::vector<SetClustering> parse_batch(std::string_view response, std::span<const RecordSet> sets);

/// Labels text for a clustering, e.g. "R1,R2\nR3".
std::string render_clustering(const SetClustering& clustering);

struct Completion {
    std::string text;
    std::optional<std::uint64_t> tokens_in;
    std::optional<std::uint64_t> tokens_out;
};

class Backend {
  public:
    virtual ~Backend() = default;
    /// Must be safe to call from several threads at once.
    virtual Completion complete(const Prompt& prompt) = 0;
};

struct OracleConfig {
    /// Entity label per record index.
    std::vector<std::size_t> entity;
    double error_rate = 0.0;
    std::uint64_t seed = 42;
};

struct OracleAnswer {
    SetClustering clustering;
    std::vector<std::size_t> displaced;  ///< positions chosen for displacement
};

/// Ground truth restricted to `shown`, then each member independently (with
/// probability error_rate) moves to a uniformly chosen other group, or to a new
/// singleton group with probability 1/(g+1). `stream` seeds the draw.
/// Throws UncoveredRecord when a shown record has no truth label.
OracleAnswer simulated_oracle(std::span<const RecordIndex> shown, const OracleConfig& config,
                              std::uint64_t stream, std::string source = {});

/// Stream for one prompt section: depends on the seed, the set id and the order
/// of the shown records, so an identical prompt always gets an identical answer.
std::uint64_t oracle_stream(std::uint64_t seed, std::string_view set_id, std::span<const RecordIndex> shown);

/// Test double answering prompts from ground truth through the noise model above.
class OracleBackend : public Backend {
  public:
    explicit OracleBackend(OracleConfig config);
    Completion complete(const Prompt& prompt) override;
    const OracleConfig& config() const { return config_; }

  private:
    OracleConfig config_;
};

struct ProviderConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    double temperature = 0.0;
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{60};
    std::size_t max_retries = 3;
    double requests_per_minute = 0.0;  ///< 0 disables throttling
    std::chrono::milliseconds backoff_base{1000};

    void validate() const;
};

/// Token bucket over requests per minute.
class RateLimiter {
  public:
    explicit RateLimiter(double requests_per_minute);
    void acquire();

  private:
    std::mutex mu_;
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

/// Chat-completion over HTTP(S). Retries transport errors, 429 and 5xx with
/// exponential backoff; throws ProviderUnavailable once retries are exhausted
/// or on auth failures.
class HttpBackend : public Backend {
  public:
    /// Reads the API key from the environment; throws ConfigError when unset.
    explicit HttpBackend(ProviderConfig config);
    HttpBackend(ProviderConfig config, std::string api_key);
    Completion complete(const Prompt& prompt) override;

    /// The JSON request body for a prompt.
    std::string request_body(const Prompt& prompt) const;

  private:
    ProviderConfig config_;
    std::string api_key_;
    std::string base_;
    std::string path_;
    RateLimiter limiter_;
};

/// Structured transcript, one JSON object per line. Thread-safe.
class TranscriptLog {
  public:
    explicit TranscriptLog(const std::filesystem::path& path);
    void write(std::string_view json_line);

  private:
    std::mutex mu_;
    std::ofstream out_;
};

struct GatewayConfig {
    std::size_t max_retries = 3;
    std::size_t batch_size = 1;
};

struct ClusterOutcome {
    SetClustering clustering;
    std::size_t attempts = 0;
    bool fallback = false;  ///< every attempt failed to parse; all-singleton answer
};

/// Prompt -> backend -> parse, with format-reminder retries and an all-singleton
/// fallback. Every backend attempt is recorded in the ledger.
class Gateway {
  public:
    Gateway(Backend& backend, std::span<const Record> records, CostLedger& ledger, GatewayConfig config = {},
            TranscriptLog* transcript = nullptr);

    ClusterOutcome cluster_records(const RecordSet& set);
    /// One prompt for all `sets` (at most batch_size of them).
    std::vector<ClusterOutcome> cluster_batch(std::span<const RecordSet> sets);

    const GatewayConfig& config() const { return config_; }
    CostLedger& ledger() { return ledger_; }

  private:
    Backend& backend_;
    std::span<const Record> records_;
    CostLedger& ledger_;
    GatewayConfig config_;
    TranscriptLog* transcript_;
};

}  // namespace llmcer
