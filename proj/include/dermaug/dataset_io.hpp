#pragma once

#include <string>
#include <vector>

#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/png_io.hpp"

namespace dermaug {

// Loads records' images as rows of a [N x H*W*3] matrix, values in [0,1].
// Fails loudly: a dataset with unreadable or mis-sized images is broken.
inline nn::MatrixF load_image_rows(const Manifest& m, const std::vector<const ImageRecord*>& records,
                                   int height, int width) {
    nn::MatrixF out(Eigen::Index(records.size()), Eigen::Index(height) * width * 3);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = *records[i];
        Image img;
        try {
            img = png::load_image(m.resolve_image_path(rec));
        } catch (const std::exception& e) {
            throw DataError("record '" + rec.record_id + "': unreadable image: " + e.what());
        }
        if (img.height != height || img.width != width)
            throw DataError("record '" + rec.record_id + "': image is " + std::to_string(img.height) +
                            "x" + std::to_string(img.width) + ", expected " + std::to_string(height) +
                            "x" + std::to_string(width));
        std::copy(img.data.begin(), img.data.end(), out.row(Eigen::Index(i)).data());
    }
    return out;
}

inline std::vector<const ImageRecord*> all_records(const Manifest& m) {
    std::vector<const ImageRecord*> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) out.push_back(&r);
    return out;
}

inline std::vector<int> record_label_indices(const Manifest& m,
                                             const std::vector<const ImageRecord*>& records) {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto* r : records) out.push_back(int(m.taxonomy.index_of(r->label)));
    return out;
}

}  // namespace dermaug
