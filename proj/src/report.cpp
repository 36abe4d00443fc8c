#include "llmcer/report.hpp"

namespace llmcer {

nlohmann::ordered_json to_json(const LedgerTotals& totals) {
    return {
        {"api_calls", totals.api_calls},
        {"tokens_in", totals.tokens_in},
        {"tokens_out", totals.tokens_out},
        {"wall_time_s", std::chrono::duration<double>(totals.wall_time).count()},
        {"estimated_cost_usd", totals.estimated_cost()},
    };
}

nlohmann::ordered_json to_json(const MetricReport& metrics) {
    return {
        {"acc", metrics.acc},
        {"fp", metrics.fp},
        {"nmi", metrics.nmi},
        {"ari", metrics.ari},
        {"pairwise",
         {{"precision", metrics.pairwise.precision},
          {"recall", metrics.pairwise.recall},
          {"f1", metrics.pairwise.f1}}},
    };
}

nlohmann::ordered_json to_json(const RunReport& report) {
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < report.sets_per_level.size(); ++l) {
        levels.push_back({{"level", l}, {"record_sets", report.sets_per_level[l]}});
    }
    return {
        {"blocks", report.blocks},
        {"levels", levels},
        {"final_check", {{"record_sets", report.final_check_sets}, {"rounds", report.final_check_rounds}}},
        {"guardrail",
         {{"checks", report.guardrail.checks},
          {"failures", report.guardrail.failures},
          {"regenerations", report.guardrail.regenerations},
          {"exhaustions", report.guardrail.exhaustions}}},
        {"conflict_warnings", report.conflict_warnings},
        {"fallbacks", report.fallbacks},
        {"ledger", to_json(report.ledger)},
    };
}

}  // namespace llmcer
