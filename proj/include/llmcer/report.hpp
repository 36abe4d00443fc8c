#pragma once

#include <json.hpp>

#include "llmcer/cost_ledger.hpp"
#include "llmcer/engine.hpp"
#include "llmcer/metrics.hpp"

namespace llmcer {

nlohmann::ordered_json to_json(const LedgerTotals& totals);
nlohmann::ordered_json to_json(const MetricReport& metrics);
/// Per-level record-set counts, final check, guardrail and ledger sections.
nlohmann::ordered_json to_json(const RunReport& report);

}  // namespace llmcer
