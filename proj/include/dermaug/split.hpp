#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dermaug/manifest.hpp"
#include "dermaug/sha256.hpp"

namespace dermaug {

// Keyed hash of (seed, record_id). Splits and samples order records by this
// key, so assignments survive any re-ordering of the manifest file.
inline std::uint64_t record_key(std::uint64_t seed, const std::string& record_id) {
    Sha256 h;
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(seed >> (8 * i));
    h.update(buf, 8);
    h.update(record_id);
    auto d = h.finish();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

// Indices into `records`, grouped per taxonomy class, each group ordered by
// (record_key, record_id).
inline std::vector<std::vector<std::size_t>> keyed_order_per_class(const Manifest& m, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> groups(m.taxonomy.size());
    for (std::size_t i = 0; i < m.records.size(); ++i)
        groups[m.taxonomy.index_of(m.records[i].label)].push_back(i);
    for (auto& g : groups) {
        std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
            std::uint64_t ka = record_key(seed, m.records[a].record_id);
            std::uint64_t kb = record_key(seed, m.records[b].record_id);
            if (ka != kb) return ka < kb;
            return m.records[a].record_id < m.records[b].record_id;
        });
    }
    return groups;
}

// Round-half-up train count per class; validation gets the remainder.
inline std::size_t train_count_for(std::size_t n, double train_fraction) {
    return std::size_t(std::floor(train_fraction * double(n) + 0.5));
}

// Assigns train/val per class. Pure function of (seed, record_ids): records
// come back in their input order with only the split field changed.
inline Manifest stratified_split(const Manifest& m, double train_fraction, double val_fraction,
                                 std::uint64_t seed) {
    if (std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("train fraction must be in (0,1)");
    auto groups = keyed_order_per_class(m, seed);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (!groups[c].empty() && groups[c].size() < 2)
            throw DataError("class '" + m.taxonomy.at(c).class_id + "' has fewer than 2 records (" +
                            std::to_string(groups[c].size()) + "), cannot split");
    }
    Manifest out = m;
    out.parent = m.stage_chain();
    out.created_by = "split";
    for (std::size_t c = 0; c < groups.size(); ++c) {
        const auto& g = groups[c];
        std::size_t n_train = train_count_for(g.size(), train_fraction);
        for (std::size_t i = 0; i < g.size(); ++i)
            out.records[g[i]].split = (i < n_train) ? Split::train : Split::val;
    }
    return out;
}

inline Manifest stratified_split(const Manifest& m, std::uint64_t seed) {
    return stratified_split(m, 0.8, 0.2, seed);
}

// First `per_class` records of each class in keyed order. Errors name the
// class and the shortfall.
inline std::vector<std::size_t> sample_per_class(const Manifest& m, std::size_t per_class,
                                                 std::uint64_t seed) {
    auto groups = keyed_order_per_class(m, seed);
    std::vector<std::size_t> picked;
    picked.reserve(per_class * groups.size());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].size() < per_class)
            throw DataError("class '" + m.taxonomy.at(c).class_id + "' has " +
                            std::to_string(groups[c].size()) + " records, need " +
                            std::to_string(per_class) + " (short by " +
                            std::to_string(per_class - groups[c].size()) + ")");
        for (std::size_t i = 0; i < per_class; ++i) picked.push_back(groups[c][i]);
    }
    return picked;
}

inline std::vector<const ImageRecord*> records_in_split(const Manifest& m, Split s) {
    std::vector<const ImageRecord*> out;
    for (const auto& r : m.records)
        if (r.split && *r.split == s) out.push_back(&r);
    return out;
}

}  // namespace dermaug
