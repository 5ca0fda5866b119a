#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dermaug/errors.hpp"
#include "dermaug/image.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/png_io.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/taxonomy.hpp"

namespace dermaug {

namespace detail {

inline void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    float c = v * s;
    float hp = h * 6.0f;
    float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1)      { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else             { r1 = c; b1 = x; }
    float m = v - c;
    r = r1 + m; g = g1 + m; b = b1 + m;
}

}  // namespace detail

// Renders one toy image for class k: a strongly class-colored background,
// k+1 bright blobs, and a sinusoidal texture whose frequency grows with k.
// Classes are separable by color statistics alone, which keeps desk-scale
// experiments cheap and stable.
inline Image render_toy_image(std::size_t class_idx, std::size_t n_classes, int size, RngStream& rng) {
    Image img(size, size);
    float hue = float(class_idx) / float(n_classes);
    float sat = 0.78f + 0.06f * float(rng.uniform() - 0.5);
    float val = 0.52f + 0.06f * float(rng.uniform() - 0.5);
    float base_r, base_g, base_b;
    detail::hsv_to_rgb(hue, sat, val, base_r, base_g, base_b);

    float freq = 1.5f + float(class_idx);
    float theta = float(rng.uniform() * 2.0 * M_PI);
    float phase = float(rng.uniform() * 2.0 * M_PI);
    float ct = std::cos(theta), st = std::sin(theta);

    struct Blob { float cx, cy, radius, gain; };
    std::vector<Blob> blobs(class_idx + 1);
    for (auto& blob : blobs) {
        blob.cx = float(rng.uniform()) * size;
        blob.cy = float(rng.uniform()) * size;
        blob.radius = (0.10f + 0.12f * float(rng.uniform())) * size;
        blob.gain = 0.20f + 0.15f * float(rng.uniform());
    }

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            float u = float(x) / size, v = float(y) / size;
            float tex = 0.08f * std::sin(2.0f * float(M_PI) * freq * (u * ct + v * st) + phase);
            float bump = 0.0f;
            for (const auto& blob : blobs) {
                float dx = float(x) - blob.cx, dy = float(y) - blob.cy;
                bump += blob.gain * std::exp(-(dx * dx + dy * dy) / (2.0f * blob.radius * blob.radius));
            }
            float noise = 0.02f * rng.gaussian_f();
            img.at(y, x, 0) = base_r + tex + bump + noise;
            img.at(y, x, 1) = base_g + tex + bump + noise;
            img.at(y, x, 2) = base_b + tex + bump * 0.6f + noise;
        }
    }
    img.clamp01();
    return img;
}

// Out-of-domain counterexamples for the domain filter's training set:
// structureless uniform noise.
inline Image render_noise_image(int size, RngStream& rng) {
    Image img(size, size);
    for (auto& v : img.data) v = float(rng.uniform());
    return img;
}

// Procedural stand-in for a real image corpus: per_class images per taxonomy
// class, written as PNGs with a real-source manifest. Deterministic in seed.
inline Manifest make_toy_dataset(const std::filesystem::path& out_dir, std::size_t per_class,
                                 std::uint64_t seed, int image_size = 32,
                                 const ClassTaxonomy& taxonomy = default_skin_taxonomy()) {
    if (per_class < 1) throw ConfigError("make_toy_dataset: per_class must be >= 1");
    if (image_size < 8) throw ConfigError("make_toy_dataset: image_size must be >= 8");

    Manifest m(taxonomy, "make-toy");
    m.set_base_dir(out_dir);
    for (std::size_t c = 0; c < taxonomy.size(); ++c) {
        const auto& entry = taxonomy.at(c);
        for (std::size_t i = 0; i < per_class; ++i) {
            RngStream rng(seed, "toy/" + entry.class_id, i);
            Image img = render_toy_image(c, taxonomy.size(), image_size, rng);
            char name[32];
            std::snprintf(name, sizeof(name), "%05zu.png", i);
            std::filesystem::path rel = std::filesystem::path("images") / entry.class_id / name;
            png::save_image(img, out_dir / rel);

            ImageRecord rec;
            rec.record_id = "toy/" + entry.class_id + "/" + std::to_string(i);
            rec.image_path = rel.generic_string();
            rec.label = entry.class_id;
            rec.source = ImageSource::real;
            m.records.push_back(std::move(rec));
        }
    }
    m.validate();
    return m;
}

}  // namespace dermaug
