#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "dermaug/dataset_io.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/nn.hpp"

namespace dermaug {

// Per-channel pixel mean and standard deviation in [0,1] units, computed on
// the training split only. Validation and test preprocessing reuse the same
// stats.
struct NormalizationStats {
    std::array<double, 3> mean{};
    std::array<double, 3> std{};

    nlohmann::json to_json() const {
        return {{"mean", mean}, {"std", std}};
    }

    static NormalizationStats from_json(const nlohmann::json& j) {
        NormalizationStats s;
        for (int c = 0; c < 3; ++c) {
            s.mean[std::size_t(c)] = j.at("mean").at(c).get<double>();
            s.std[std::size_t(c)] = j.at("std").at(c).get<double>();
        }
        return s;
    }

    bool operator==(const NormalizationStats&) const = default;
};

// Population statistics over all pixels of all given images.
inline NormalizationStats compute_normalization(const nn::MatrixF& rows01) {
    if (rows01.rows() == 0) throw DataError("compute_normalization: empty training split");
    std::array<double, 3> sum{}, sumsq{};
    const std::size_t n_pixels = std::size_t(rows01.rows()) * std::size_t(rows01.cols()) / 3;
    for (Eigen::Index i = 0; i < rows01.rows(); ++i) {
        const float* row = rows01.row(i).data();
        for (Eigen::Index j = 0; j < rows01.cols(); j += 3) {
            for (int c = 0; c < 3; ++c) {
                double v = double(row[j + c]);
                sum[std::size_t(c)] += v;
                sumsq[std::size_t(c)] += v * v;
            }
        }
    }
    NormalizationStats stats;
    for (int c = 0; c < 3; ++c) {
        double m = sum[std::size_t(c)] / double(n_pixels);
        double var = sumsq[std::size_t(c)] / double(n_pixels) - m * m;
        if (var < 0) var = 0;
        stats.mean[std::size_t(c)] = m;
        stats.std[std::size_t(c)] = std::sqrt(var);
        if (stats.std[std::size_t(c)] <= 0.0)
            throw DataError("compute_normalization: zero-variance channel " + std::to_string(c) +
                            " (degenerate data)");
    }
    return stats;
}

inline NormalizationStats compute_normalization(const Manifest& m,
                                                const std::vector<const ImageRecord*>& records,
                                                int height, int width) {
    if (records.empty()) throw DataError("compute_normalization: empty training split");
    return compute_normalization(load_image_rows(m, records, height, width));
}

// (x - mean) / std, channel-interleaved rows.
inline nn::MatrixF apply_normalization(const nn::MatrixF& rows01, const NormalizationStats& stats) {
    nn::MatrixF out = rows01;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        float* row = out.row(i).data();
        for (Eigen::Index j = 0; j < out.cols(); j += 3)
            for (int c = 0; c < 3; ++c)
                row[j + c] = float((double(row[j + c]) - stats.mean[std::size_t(c)]) /
                                   stats.std[std::size_t(c)]);
    }
    return out;
}

}  // namespace dermaug
