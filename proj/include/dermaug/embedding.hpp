#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dermaug/errors.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/taxonomy.hpp"

namespace dermaug {

// One learned conditioning vector per class: the "token" for the prompt
// naming that disease. Rows follow taxonomy order.
struct EmbeddingTable {
    std::vector<std::string> class_ids;
    nn::Param vectors;  // [n_classes x dim]

    int dim() const { return int(vectors.value.cols()); }
    std::size_t size() const { return class_ids.size(); }

    static EmbeddingTable init(const ClassTaxonomy& taxonomy, int dim, std::uint64_t seed) {
        EmbeddingTable t;
        t.class_ids = taxonomy.class_ids();
        RngStream rng(seed, "embedding-init");
        t.vectors.init_gaussian(Eigen::Index(t.class_ids.size()), dim,
                                1.0f / std::sqrt(float(dim)), rng);
        return t;
    }

    std::size_t index_of(const std::string& class_id) const {
        for (std::size_t i = 0; i < class_ids.size(); ++i)
            if (class_ids[i] == class_id) return i;
        throw DataError("unknown class in embedding table: '" + class_id + "'");
    }

    void check_finite() const {
        if (!vectors.value.allFinite()) throw DataError("embedding table contains non-finite values");
    }
};

// Toy analogue of a text encoder: the prompt is the bare disease name and
// encodes to that class's stored vector, unchanged.
inline std::vector<float> encode_prompt(const std::string& class_id, const EmbeddingTable& table) {
    std::size_t idx = table.index_of(class_id);
    const auto& row = table.vectors.value.row(Eigen::Index(idx));
    return std::vector<float>(row.data(), row.data() + row.size());
}

}  // namespace dermaug
