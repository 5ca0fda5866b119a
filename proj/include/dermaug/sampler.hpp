#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dermaug/denoiser.hpp"
#include "dermaug/embedding.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/image.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/schedule.hpp"

namespace dermaug {

namespace detail {

// Each image owns one RNG stream; its draw order is fixed (x_T first, then
// one noise vector per step down to t=2), so results do not depend on how
// images are batched across workers.
inline constexpr std::size_t kSamplerChunk = 64;

inline void sample_chunk_into(const DenoiserModel& model, const NoiseSchedule& schedule,
                              const std::vector<float>& class_embedding,
                              const std::vector<std::uint64_t>& image_seeds, std::size_t begin,
                              std::size_t end, float* out_rows) {
    const int dim = model.config.input_dim();
    const int cond_dim = model.config.cond_dim;
    const auto count = Eigen::Index(end - begin);

    std::vector<RngStream> streams;
    streams.reserve(std::size_t(count));
    for (std::size_t i = begin; i < end; ++i) streams.emplace_back(image_seeds[i]);

    nn::MatrixF x(count, dim);
    for (Eigen::Index r = 0; r < count; ++r)
        for (int j = 0; j < dim; ++j) x(r, j) = streams[std::size_t(r)].gaussian_f();

    nn::MatrixF cond(count, cond_dim);
    for (int t = schedule.timesteps; t >= 1; --t) {
        auto temb = timestep_embedding(t, cond_dim);
        for (Eigen::Index r = 0; r < count; ++r)
            for (int j = 0; j < cond_dim; ++j)
                cond(r, j) = temb[std::size_t(j)] + class_embedding[std::size_t(j)];
        nn::MatrixF eps = model.forward_infer(x, cond);
        double beta = schedule.beta(t);
        double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
        double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
        double sigma = std::sqrt(beta);
        for (Eigen::Index r = 0; r < count; ++r) {
            auto& rng = streams[std::size_t(r)];
            for (int j = 0; j < dim; ++j) {
                double mean = inv_sqrt_alpha * (double(x(r, j)) - coef * double(eps(r, j)));
                if (t > 1) mean += sigma * rng.gaussian();
                x(r, j) = float(mean);
            }
        }
    }
    // clamp to pixel range and store as [0,1]
    for (Eigen::Index r = 0; r < count; ++r) {
        float* dst = out_rows + std::size_t(begin + std::size_t(r)) * std::size_t(dim);
        for (int j = 0; j < dim; ++j) {
            float v = std::min(1.0f, std::max(-1.0f, x(r, j)));
            dst[j] = (v + 1.0f) * 0.5f;
        }
    }
}

inline Image row_to_image(const float* row, int height, int width) {
    Image img(height, width);
    std::copy(row, row + img.value_count(), img.data.begin());
    return img;
}

}  // namespace detail

// Ancestral reverse diffusion from pure noise, conditioned on the class's
// learned embedding. sigma_t^2 = beta_t; all timesteps are used.
inline std::vector<Image> sample(const DenoiserModel& model, const EmbeddingTable& table,
                                 const NoiseSchedule& schedule, const std::string& class_id,
                                 std::size_t n, std::uint64_t seed, int workers = 1) {
    std::vector<float> emb = encode_prompt(class_id, table);
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(seed, "sample", i);

    const int dim = model.config.input_dim();
    std::vector<float> rows(n * std::size_t(dim));
    parallel_chunks(n, detail::kSamplerChunk, workers, [&](std::size_t b, std::size_t e) {
        detail::sample_chunk_into(model, schedule, emb, seeds, b, e, rows.data());
    });

    std::vector<Image> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(detail::row_to_image(rows.data() + i * std::size_t(dim), model.config.height,
                                           model.config.width));
    return out;
}

}  // namespace dermaug
