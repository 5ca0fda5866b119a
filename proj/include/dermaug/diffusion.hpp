#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dermaug/dataset_io.hpp"
#include "dermaug/denoiser.hpp"
#include "dermaug/embedding.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/schedule.hpp"

namespace dermaug {

struct GeneratorTrainConfig {
    std::uint64_t seed = 0;
    int steps = 2000;
    float lr = 1e-3f;
    int batch_size = 16;

    bool operator==(const GeneratorTrainConfig&) const = default;
};

struct LossCurve {
    std::vector<float> raw;       // per-step MSE
    std::vector<float> smoothed;  // exponential moving average, alpha = 0.02

    void push(float loss) {
        raw.push_back(loss);
        if (smoothed.empty())
            smoothed.push_back(loss);
        else
            smoothed.push_back(0.98f * smoothed.back() + 0.02f * loss);
    }
};

namespace detail {

struct DiffusionBatchPlan {
    nn::MatrixF x_t;    // noised images
    nn::MatrixF eps;    // the noise to predict
    nn::MatrixF cond;   // timestep embedding + class embedding
    std::vector<int> labels;
    std::vector<int> timesteps;
};

// One deterministic draw sequence per training run: for each batch slot,
// (record index, timestep, noise vector), in that order.
inline DiffusionBatchPlan make_batch(const nn::MatrixF& x0, const std::vector<int>& labels,
                                     const NoiseSchedule& schedule, const EmbeddingTable& table,
                                     int batch_size, int cond_dim, RngStream& rng) {
    const Eigen::Index dim = x0.cols();
    DiffusionBatchPlan b;
    b.x_t.resize(batch_size, dim);
    b.eps.resize(batch_size, dim);
    b.cond.resize(batch_size, cond_dim);
    b.labels.resize(std::size_t(batch_size));
    b.timesteps.resize(std::size_t(batch_size));
    for (int s = 0; s < batch_size; ++s) {
        auto idx = Eigen::Index(rng.uniform_int(std::uint64_t(x0.rows())));
        int t = int(rng.uniform_int(std::uint64_t(schedule.timesteps))) + 1;
        b.labels[std::size_t(s)] = labels[std::size_t(idx)];
        b.timesteps[std::size_t(s)] = t;
        double signal = std::sqrt(schedule.alpha_bar(t));
        double noise = std::sqrt(1.0 - schedule.alpha_bar(t));
        for (Eigen::Index j = 0; j < dim; ++j) {
            float e = rng.gaussian_f();
            b.eps(s, j) = e;
            b.x_t(s, j) = float(signal * double(x0(idx, j)) + noise * double(e));
        }
        auto temb = timestep_embedding(t, cond_dim);
        for (int j = 0; j < cond_dim; ++j)
            b.cond(s, j) = temb[std::size_t(j)] +
                           table.vectors.value(Eigen::Index(b.labels[std::size_t(s)]), j);
    }
    return b;
}

inline void accumulate_embedding_grads(EmbeddingTable& table, const nn::MatrixF& dcond,
                                       const std::vector<int>& labels) {
    for (Eigen::Index s = 0; s < dcond.rows(); ++s)
        table.vectors.grad.row(labels[std::size_t(s)]) += dcond.row(s);
}

// Images in [-1,1] plus label indices for every record of the manifest.
inline std::pair<nn::MatrixF, std::vector<int>> load_diffusion_data(const Manifest& m, int height,
                                                                    int width) {
    if (m.records.empty()) throw DataError("training manifest is empty");
    auto records = all_records(m);
    nn::MatrixF x0 = load_image_rows(m, records, height, width);
    x0 = (x0.array() * 2.0f - 1.0f).matrix();
    return {std::move(x0), record_label_indices(m, records)};
}

}  // namespace detail

struct GeneratorTrainResult {
    DenoiserModel model;
    EmbeddingTable embeddings;
    LossCurve curve;
};

// Joint training of denoiser weights and class embeddings. The loss is the
// MSE between the drawn noise and eps(x_t, t, c_label).
inline GeneratorTrainResult train_denoiser(const Manifest& train, const NoiseSchedule& schedule,
                                           const DenoiserConfig& arch,
                                           const GeneratorTrainConfig& config) {
    auto [x0, labels] = detail::load_diffusion_data(train, arch.height, arch.width);

    GeneratorTrainResult result;
    result.model = DenoiserModel::init(arch, config.seed);
    result.embeddings = EmbeddingTable::init(train.taxonomy, arch.cond_dim, config.seed);

    nn::ParamList trainable = result.model.params();
    trainable.push_back(&result.embeddings.vectors);
    nn::Adam opt(config.lr);

    RngStream rng(config.seed, "train-denoiser");
    const float norm = 1.0f / float(config.batch_size * arch.input_dim());
    for (int step = 0; step < config.steps; ++step) {
        auto batch = detail::make_batch(x0, labels, schedule, result.embeddings, config.batch_size,
                                        arch.cond_dim, rng);
        nn::zero_grads(trainable);
        nn::MatrixF pred = result.model.forward(batch.x_t, batch.cond);
        nn::MatrixF diff = pred - batch.eps;
        float loss = diff.squaredNorm() * norm;
        if (!std::isfinite(loss))
            throw TrainingError("non-finite diffusion loss at step " + std::to_string(step));
        nn::MatrixF dy = diff * (2.0f * norm);
        nn::MatrixF dcond = result.model.backward(dy);
        detail::accumulate_embedding_grads(result.embeddings, dcond, batch.labels);
        opt.step(trainable);
        result.curve.push(loss);
    }
    result.model.check_finite();
    result.embeddings.check_finite();
    return result;
}

// Textual-inversion mode: the denoiser is frozen bit-for-bit and only the
// embedding vectors are optimized, under the same objective.
inline std::pair<EmbeddingTable, LossCurve> train_embeddings(DenoiserModel& frozen,
                                                             EmbeddingTable initial,
                                                             const Manifest& train,
                                                             const NoiseSchedule& schedule,
                                                             const GeneratorTrainConfig& config) {
    auto [x0, labels] = detail::load_diffusion_data(train, frozen.config.height, frozen.config.width);

    EmbeddingTable table = std::move(initial);
    nn::ParamList trainable = {&table.vectors};
    nn::Adam opt(config.lr);
    LossCurve curve;

    RngStream rng(config.seed, "train-embeddings");
    const float norm = 1.0f / float(config.batch_size * frozen.config.input_dim());
    for (int step = 0; step < config.steps; ++step) {
        auto batch = detail::make_batch(x0, labels, schedule, table, config.batch_size,
                                        frozen.config.cond_dim, rng);
        nn::zero_grads(trainable);
        nn::MatrixF pred = frozen.forward(batch.x_t, batch.cond);
        nn::MatrixF diff = pred - batch.eps;
        float loss = diff.squaredNorm() * norm;
        if (!std::isfinite(loss))
            throw TrainingError("non-finite embedding loss at step " + std::to_string(step));
        nn::MatrixF dy = diff * (2.0f * norm);
        nn::ParamList denoiser_params = frozen.params();
        // gradients flow through frozen weights to the conditioning only;
        // weight grads are discarded by never stepping them
        nn::zero_grads(denoiser_params);
        nn::MatrixF dcond = frozen.backward(dy);
        nn::zero_grads(denoiser_params);
        detail::accumulate_embedding_grads(table, dcond, batch.labels);
        opt.step(trainable);
        curve.push(loss);
    }
    table.check_finite();
    return {std::move(table), std::move(curve)};
}

}  // namespace dermaug
