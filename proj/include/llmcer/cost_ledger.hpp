#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string_view>

namespace llmcer {

struct LedgerTotals {
    std::uint64_t api_calls = 0;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
    std::chrono::nanoseconds wall_time{0};
    double price_per_mtoken_in = 0.0;
    double price_per_mtoken_out = 0.0;

    double estimated_cost() const {
        return (static_cast<double>(tokens_in) * price_per_mtoken_in +
                static_cast<double>(tokens_out) * price_per_mtoken_out) /
               1e6;
    }
};

/// Thread-safe accumulator of backend usage. Counters only ever grow.
class CostLedger {
  public:
    CostLedger() = default;
    CostLedger(double price_in, double price_out) {
        totals_.price_per_mtoken_in = price_in;
        totals_.price_per_mtoken_out = price_out;
    }

    /// One backend attempt.
    void record(std::uint64_t tokens_in, std::uint64_t tokens_out) {
        std::lock_guard lock(mu_);
        ++totals_.api_calls;
        totals_.tokens_in += tokens_in;
        totals_.tokens_out += tokens_out;
    }

    void add_wall_time(std::chrono::nanoseconds t) {
        std::lock_guard lock(mu_);
        totals_.wall_time += t;
    }

    LedgerTotals totals() const {
        std::lock_guard lock(mu_);
        return totals_;
    }

    double estimated_cost() const { return totals().estimated_cost(); }

  private:
    mutable std::mutex mu_;
    LedgerTotals totals_;
};

/// Fallback token estimate when a provider does not report usage: ceil(chars / 4).
inline std::uint64_t estimate_tokens(std::string_view text) {
    return (static_cast<std::uint64_t>(text.size()) + 3) / 4;
}

}  // namespace llmcer
