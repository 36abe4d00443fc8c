#include "llmcer/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <random>

#include "llmcer/error.hpp"

namespace llmcer {

namespace {

constexpr std::array<std::string_view, 24> kSyllables = {
    "ka", "lo", "mi", "ren", "tas", "vor", "bel", "qua", "dro", "sen", "pix", "ul",
    "fen", "gar", "hol", "jet", "nim", "ost", "pra", "sul", "tor", "vex", "wyn", "zed"};
constexpr std::array<std::string_view, 12> kCities = {"Oslo",  "Lima",  "Quito", "Perth", "Turin", "Leeds",
                                                       "Kyoto", "Cairo", "Dakar", "Hanoi", "Porto", "Omaha"};
constexpr std::array<std::string_view, 6> kNames = {"name", "city", "year", "code", "maker", "notes"};

using Rng = std::mt19937_64;

double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string word(Rng& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[rng() % kSyllables.size()];
    return w;
}

std::string typo(std::string value, Rng& rng) {
    if (value.size() < 2) return value;
    const std::size_t i = rng() % value.size();
    switch (rng() % 3) {
        case 0:
            value.erase(i, 1);
            break;
        case 1:
            value[i] = static_cast<char>('a' + rng() % 26);
            break;
        default:
            std::swap(value[i], value[i + 1 < value.size() ? i + 1 : i - 1]);
            break;
    }
    return value;
}

std::vector<double> gaussian(Rng& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    return v;
}

void normalize(std::vector<double>& v) {
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= n;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (entities == 0 || duplicates == 0) throw Error(ErrorCode::ConfigError, "entities and duplicates must be positive");
    if (attributes == 0 || attributes > kNames.size()) {
        throw Error(ErrorCode::ConfigError, fmt::format("attributes must be in 1..{}", kNames.size()));
    }
    for (double rate : {typo_rate, drop_rate, family_share}) {
        if (rate < 0.0 || rate > 1.0) throw Error(ErrorCode::ConfigError, "rates must lie in [0, 1]");
    }
    if (family_size == 0) throw Error(ErrorCode::ConfigError, "family_size must be positive");
    if (embedding_dim < 2) throw Error(ErrorCode::ConfigError, "embedding_dim must be at least 2");
    if (record_noise < 0.0) throw Error(ErrorCode::ConfigError, "record_noise must be >= 0");
}

SyntheticData make_synthetic(const SyntheticConfig& config) {
    config.validate();
    Rng rng(config.seed);

    struct Entry {
        std::size_t entity;
        std::vector<std::string> values;
        std::vector<double> embedding;
    };
    std::vector<Entry> entries;

    std::vector<double> family;
    for (std::size_t e = 0; e < config.entities; ++e) {
        if (e % config.family_size == 0) {
            family = gaussian(rng, config.embedding_dim);
            normalize(family);
        }
        auto center = gaussian(rng, config.embedding_dim);
        normalize(center);
        const double own = std::sqrt(1.0 - config.family_share * config.family_share);
        for (std::size_t d = 0; d < center.size(); ++d) {
            center[d] = config.family_share * family[d] + own * center[d];
        }
        normalize(center);

        const std::vector<std::string> profile = {
            word(rng, 2) + " " + word(rng, 3),
            std::string(kCities[rng() % kCities.size()]),
            std::to_string(1950 + rng() % 70),
            fmt::format("{}-{}", word(rng, 1), rng() % 10000),
            word(rng, 2),
            word(rng, 2) + " " + word(rng, 2) + " " + word(rng, 1),
        };

        for (std::size_t k = 0; k < config.duplicates; ++k) {
            Entry entry{e, {}, center};
            for (std::size_t a = 0; a < config.attributes; ++a) {
                std::string v = profile[a];
                if (k > 0) {
                    if (unit(rng) < config.typo_rate) v = typo(std::move(v), rng);
                    if (unit(rng) < config.drop_rate) v.clear();
                }
                entry.values.push_back(std::move(v));
            }
            auto noise = gaussian(rng, config.embedding_dim);
            const double scale = config.record_noise / std::sqrt(static_cast<double>(config.embedding_dim));
            for (std::size_t d = 0; d < noise.size(); ++d) entry.embedding[d] += scale * noise[d];
            normalize(entry.embedding);
            entries.push_back(std::move(entry));
        }
    }
    std::shuffle(entries.begin(), entries.end(), rng);

    SyntheticData out;
    out.dataset.truth.emplace();
    const int width = entries.size() > 10000 ? 6 : 4;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Record r;
        r.id = fmt::format("r{:0{}}", i, width);
        for (std::size_t a = 0; a < config.attributes; ++a) {
            const AttributeKind kind = a == 1 ? AttributeKind::categorical
                                       : a == 2 ? AttributeKind::numeric
                                                : AttributeKind::textual;
            r.attributes.push_back(Attribute{std::string(kNames[a]), entries[i].values[a], kind});
        }
        out.dataset.records.push_back(std::move(r));
        out.dataset.truth->push_back(fmt::format("e{}", entries[i].entity));
        out.embeddings.push_back(Embedding{std::move(entries[i].embedding)});
    }
    out.dataset.reindex();
    return out;
}

}  // namespace llmcer
