#include <fmt/format.h>
#include <json.hpp>

#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"

namespace llmcer {

TranscriptLog::TranscriptLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
    if (!out_) throw Error(ErrorCode::ConfigError, fmt::format("cannot open transcript {}", path.string()));
}

void TranscriptLog::write(std::string_view json_line) {
    std::lock_guard lock(mu_);
    out_ << json_line << '\n';
    out_.flush();
}

Gateway::Gateway(Backend& backend, std::span<const Record> records, CostLedger& ledger, GatewayConfig config,
                 TranscriptLog* transcript)
    : backend_(backend), records_(records), ledger_(ledger), config_(config), transcript_(transcript) {
    if (config_.batch_size == 0) throw Error(ErrorCode::ConfigError, "batch_size must be at least 1");
}

ClusterOutcome Gateway::cluster_records(const RecordSet& set) {
    return cluster_batch(std::span<const RecordSet>(&set, 1)).front();
}

namespace {

bool is_parse_error(ErrorCode code) {
    return code == ErrorCode::MalformedResponse || code == ErrorCode::MissingMember ||
           code == ErrorCode::DuplicateMember || code == ErrorCode::UnknownLabel;
}

}  // namespace

std::vector<ClusterOutcome> Gateway::cluster_batch(std::span<const RecordSet> sets) {
    if (sets.empty()) return {};
    if (sets.size() > config_.batch_size) {
        throw Error(ErrorCode::ConfigError,
                    fmt::format("{} sets in one prompt exceeds batch_size {}", sets.size(), config_.batch_size));
    }

    const Prompt base = build_prompt(sets, records_);
    Prompt prompt = base;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) prompt.user_text = base.user_text + "\n" + std::string(kFormatReminder);

        const auto started = std::chrono::steady_clock::now();
        const Completion completion = backend_.complete(prompt);
        ledger_.add_wall_time(std::chrono::steady_clock::now() - started);
        const std::uint64_t tokens_in =
            completion.tokens_in.value_or(estimate_tokens(prompt.system_text) + estimate_tokens(prompt.user_text));
        const std::uint64_t tokens_out = completion.tokens_out.value_or(estimate_tokens(completion.text));
        ledger_.record(tokens_in, tokens_out);

        std::string error;
        std::vector<SetClustering> parsed;
        try {
            parsed = parse_batch(completion.text, sets);
        } catch (const Error& e) {
            if (!is_parse_error(e.code())) throw;
            error = e.what();
        }

        if (transcript_ != nullptr) {
            nlohmann::json sets_json = nlohmann::json::array();
            for (const auto& s : sets) sets_json.push_back(s.set_id);
            nlohmann::json line = {{"sets", sets_json},       {"attempt", attempt},
                                   {"system", prompt.system_text}, {"user", prompt.user_text},
                                   {"response", completion.text},  {"tokens_in", tokens_in},
                                   {"tokens_out", tokens_out}};
            if (!error.empty()) line["error"] = error;
            transcript_->write(line.dump());
        }

        if (error.empty()) {
            std::vector<ClusterOutcome> out;
            for (auto& c : parsed) out.push_back(ClusterOutcome{std::move(c), attempt + 1, false});
            return out;
        }
    }

    std::vector<ClusterOutcome> out;
    for (const auto& s : sets) {
        out.push_back(ClusterOutcome{SetClustering::singletons(s.set_id, s.size()), config_.max_retries + 1, true});
    }
    return out;
}

}  // namespace llmcer
