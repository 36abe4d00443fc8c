#include <algorithm>
#include <fmt/format.h>
#include <random>
#include <unordered_map>

#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"
#include "llmcer/similarity.hpp"

namespace llmcer {

std::uint64_t oracle_stream(std::uint64_t seed, std::string_view set_id, std::span<const RecordIndex> shown) {
    std::string key(set_id);
    for (RecordIndex r : shown) key += fmt::format("/{}", r);
    return stable_hash(key, seed);
}

OracleAnswer simulated_oracle(std::span<const RecordIndex> shown, const OracleConfig& config, std::uint64_t stream,
                              std::string source) {
    // Truth restriction, groups ordered by first appearance.
    std::vector<std::vector<std::size_t>> groups;
    std::unordered_map<std::size_t, std::size_t> slot;
    for (std::size_t pos = 0; pos < shown.size(); ++pos) {
        if (shown[pos] >= config.entity.size()) {
            throw Error(ErrorCode::UncoveredRecord, fmt::format("record index {} has no ground truth", shown[pos]));
        }
        const std::size_t entity = config.entity[shown[pos]];
        auto [it, inserted] = slot.emplace(entity, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(pos);
    }

    OracleAnswer answer;
    if (config.error_rate > 0.0) {
        std::mt19937_64 rng(stream);
        auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
        for (std::size_t pos = 0; pos < shown.size(); ++pos) {
            if (unit() >= config.error_rate) continue;
            answer.displaced.push_back(pos);

            std::size_t from = 0;
            while (std::find(groups[from].begin(), groups[from].end(), pos) == groups[from].end()) ++from;
            const std::size_t g = groups.size();
            const double u = unit();
            const bool new_group = g == 1 || u < 1.0 / static_cast<double>(g + 1);

            std::erase(groups[from], pos);
            if (new_group) {
                groups.push_back({pos});
            } else {
                // Uniform over the g - 1 other groups.
                std::size_t pick = static_cast<std::size_t>(rng() % (g - 1));
                if (pick >= from) ++pick;
                groups[pick].push_back(pos);
            }
            std::erase_if(groups, [](const auto& grp) { return grp.empty(); });
        }
        for (auto& grp : groups) std::sort(grp.begin(), grp.end());
        std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    }
    answer.clustering = SetClustering{std::move(source), std::move(groups)};
    return answer;
}

OracleBackend::OracleBackend(OracleConfig config) : config_(std::move(config)) {
    if (config_.error_rate < 0.0 || config_.error_rate > 1.0) {
        throw Error(ErrorCode::ConfigError, fmt::format("error rate {} outside [0, 1]", config_.error_rate));
    }
}

Completion OracleBackend::complete(const Prompt& prompt) {
    Completion c;
    const bool batched = prompt.sections.size() > 1;
    for (std::size_t j = 0; j < prompt.sections.size(); ++j) {
        const auto& section = prompt.sections[j];
        const auto answer = simulated_oracle(section.shown, config_,
                                             oracle_stream(config_.seed, section.set_id, section.shown),
                                             section.set_id);
        if (batched) c.text += fmt::format("SET {}\n", j + 1);
        c.text += render_clustering(answer.clustering);
    }
    return c;
}

}  // namespace llmcer
