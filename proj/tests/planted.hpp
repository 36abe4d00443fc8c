#pragma once

#include <cmath>
#include <random>

#include "llmcer/similarity.hpp"

namespace llmcer::testing {

struct PlantedEmbeddings {
    std::vector<Embedding> embeddings;
    std::vector<std::size_t> entity;
};

inline std::vector<double> unit_gaussian(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double n = 0.0;
    for (double& x : v) {
        x = normal(rng);
        n += x * x;
    }
    for (double& x : v) x /= std::sqrt(n);
    return v;
}

// Independent random entity centers (near-orthogonal in high dimension) plus
// small per-record noise. Records of one entity are contiguous.
inline PlantedEmbeddings planted_embeddings(std::size_t entities, std::size_t per_entity, std::uint64_t seed,
                                            std::size_t dim = 256, double noise = 0.3) {
    std::mt19937_64 rng(seed);
    PlantedEmbeddings out;
    for (std::size_t e = 0; e < entities; ++e) {
        const auto center = unit_gaussian(rng, dim);
        for (std::size_t k = 0; k < per_entity; ++k) {
            auto jitter = unit_gaussian(rng, dim);
            std::vector<double> v(dim);
            for (std::size_t d = 0; d < dim; ++d) v[d] = center[d] + noise * jitter[d];
            out.embeddings.push_back(Embedding{std::move(v)});
            out.entity.push_back(e);
        }
    }
    return out;
}

}  // namespace llmcer::testing
