#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace dermaug {

// RGB image, row-major HWC, float values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // height * width * 3

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(std::size_t(h) * w * 3, 0.0f) {}

    std::size_t pixel_count() const { return std::size_t(height) * width; }
    std::size_t value_count() const { return pixel_count() * 3; }

    float& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * 3 + c]; }

    void clamp01() {
        for (auto& v : data) v = std::min(1.0f, std::max(0.0f, v));
    }

    std::vector<std::uint8_t> to_u8() const {
        std::vector<std::uint8_t> out(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            float v = std::min(1.0f, std::max(0.0f, data[i]));
            out[i] = std::uint8_t(std::lround(v * 255.0f));
        }
        return out;
    }

    static Image from_u8(int h, int w, const std::uint8_t* rgb) {
        Image img(h, w);
        for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = float(rgb[i]) / 255.0f;
        return img;
    }
};

}  // namespace dermaug
