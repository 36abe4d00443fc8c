#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "llmcer/dataset.hpp"
#include "llmcer/similarity.hpp"

namespace llmcer {

/// Controlled dirty-ER data: every entity gets a clean profile and `duplicates`
/// noisy copies. Embeddings are planted: entities of one family share a direction,
/// so they are similar to each other but well separated from other families.
struct SyntheticConfig {
    std::size_t entities = 40;
    std::size_t duplicates = 5;      ///< records per entity
    std::size_t attributes = 4;      ///< 1..6
    double typo_rate = 0.1;          ///< per attribute value
    double drop_rate = 0.05;         ///< per attribute value
    std::size_t family_size = 2;     ///< entities per embedding family
    double family_share = 0.8;       ///< weight of the family direction in an entity center
    double record_noise = 0.25;      ///< norm of the per-record perturbation
    std::size_t embedding_dim = 64;
    std::uint64_t seed = 42;

    void validate() const;
};

struct SyntheticData {
    Dataset dataset;  ///< with truth ("e<k>" entity ids)
    std::vector<Embedding> embeddings;
};

/// Records are shuffled; ids are "r0000", "r0001", ... in output order.
SyntheticData make_synthetic(const SyntheticConfig& config);

}  // namespace llmcer
