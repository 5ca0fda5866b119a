#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dermaug/embedding.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/sha256.hpp"

namespace dermaug {

struct DenoiserConfig {
    int height = 32;
    int width = 32;
    int hidden = 256;
    int blocks = 2;
    int cond_dim = 64;  // must equal the embedding dimension

    int input_dim() const { return height * width * 3; }

    bool operator==(const DenoiserConfig&) const = default;
};

// Sinusoidal timestep embedding, dimension d, for raw integer timesteps.
inline std::vector<float> timestep_embedding(int t, int dim) {
    std::vector<float> out(dim, 0.0f);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        out[2 * i] = float(std::sin(double(t) * freq));
        out[2 * i + 1] = float(std::cos(double(t) * freq));
    }
    return out;
}

// Conditional noise-prediction network eps(x_t, t, c). Residual MLP blocks on
// the flattened image; each block receives an added projection of
// (timestep embedding + class embedding).
class DenoiserModel {
public:
    DenoiserConfig config;

    DenoiserModel() = default;

    static DenoiserModel init(const DenoiserConfig& cfg, std::uint64_t seed) {
        DenoiserModel m;
        m.config = cfg;
        RngStream rng(seed, "denoiser-init");
        const int d = cfg.input_dim(), h = cfg.hidden, c = cfg.cond_dim;
        m.w_in_.init_gaussian(h, d, std::sqrt(1.0f / float(d)), rng);
        m.b_in_.init_zero(1, h);
        m.blocks_.resize(std::size_t(cfg.blocks));
        for (auto& blk : m.blocks_) {
            blk.w1.init_gaussian(h, h, std::sqrt(2.0f / float(h)), rng);
            blk.b1.init_zero(1, h);
            blk.p.init_gaussian(h, c, std::sqrt(1.0f / float(c)), rng);
            blk.w2.init_gaussian(h, h, std::sqrt(2.0f / float(h)) / float(cfg.blocks), rng);
            blk.b2.init_zero(1, h);
        }
        // zero-init output head: the untrained model predicts zero noise
        m.w_out_.init_zero(d, h);
        m.b_out_.init_zero(1, d);
        // conditioning-gated input skip: lets the full-rank part of the noise
        // reach the output through the hidden bottleneck
        m.w_skip_.init_zero(1, c);
        // direct conditioning-to-output projection: carries the class- and
        // timestep-dependent mean offset at full output rank
        m.w_cond_out_.init_zero(d, c);
        return m;
    }

    nn::ParamList params() {
        nn::ParamList out;
        out.push_back(&w_in_);
        out.push_back(&b_in_);
        for (auto& blk : blocks_) {
            out.push_back(&blk.w1);
            out.push_back(&blk.b1);
            out.push_back(&blk.p);
            out.push_back(&blk.w2);
            out.push_back(&blk.b2);
        }
        out.push_back(&w_out_);
        out.push_back(&b_out_);
        out.push_back(&w_skip_);
        out.push_back(&w_cond_out_);
        return out;
    }

    std::size_t param_count() { return nn::param_count(params()); }

    std::vector<float> serialize() { return nn::serialize_params(params()); }
    void deserialize(const std::vector<float>& flat) { nn::deserialize_params(params(), flat); }

    std::string checksum() {
        auto flat = serialize();
        return sha256_hex(flat.data(), flat.size() * sizeof(float));
    }

    void check_finite() {
        for (auto* p : params())
            if (!p->value.allFinite()) throw TrainingError("denoiser parameters are non-finite");
    }

    // x: [B x D] noisy images, cond: [B x cond_dim]. Returns predicted noise.
    nn::MatrixF forward(const nn::MatrixF& x, const nn::MatrixF& cond) {
        if (x.cols() != config.input_dim()) throw ConfigError("denoiser: input shape mismatch");
        if (cond.cols() != config.cond_dim) throw ConfigError("denoiser: conditioning dim mismatch");
        x_cache_ = x;
        cond_cache_ = cond;
        nn::MatrixF h = x * w_in_.value.transpose();
        h.rowwise() += b_in_.value.row(0);
        for (auto& blk : blocks_) {
            blk.h_in = h;
            blk.a = h * blk.w1.value.transpose();
            blk.a.rowwise() += blk.b1.value.row(0);
            blk.a.noalias() += cond * blk.p.value.transpose();
            nn::silu_forward(blk.a, blk.u);
            h.noalias() += blk.u * blk.w2.value.transpose();
            h.rowwise() += blk.b2.value.row(0);
        }
        h_final_ = h;
        nn::MatrixF y = h * w_out_.value.transpose();
        y.rowwise() += b_out_.value.row(0);
        skip_gain_ = cond * w_skip_.value.transpose();  // [B x 1]
        y.noalias() += skip_gain_.col(0).asDiagonal() * x;
        y.noalias() += cond * w_cond_out_.value.transpose();
        return y;
    }

    // Cache-free forward pass; safe to call concurrently from sampler workers.
    nn::MatrixF forward_infer(const nn::MatrixF& x, const nn::MatrixF& cond) const {
        if (x.cols() != config.input_dim()) throw ConfigError("denoiser: input shape mismatch");
        if (cond.cols() != config.cond_dim) throw ConfigError("denoiser: conditioning dim mismatch");
        nn::MatrixF h = x * w_in_.value.transpose();
        h.rowwise() += b_in_.value.row(0);
        nn::MatrixF a, u;
        for (const auto& blk : blocks_) {
            a = h * blk.w1.value.transpose();
            a.rowwise() += blk.b1.value.row(0);
            a.noalias() += cond * blk.p.value.transpose();
            nn::silu_forward(a, u);
            h.noalias() += u * blk.w2.value.transpose();
            h.rowwise() += blk.b2.value.row(0);
        }
        nn::MatrixF y = h * w_out_.value.transpose();
        y.rowwise() += b_out_.value.row(0);
        nn::MatrixF gain = cond * w_skip_.value.transpose();
        y.noalias() += gain.col(0).asDiagonal() * x;
        y.noalias() += cond * w_cond_out_.value.transpose();
        return y;
    }

    // Accumulates parameter gradients; returns gradient wrt the conditioning.
    nn::MatrixF backward(const nn::MatrixF& dy) {
        w_out_.grad.noalias() += dy.transpose() * h_final_;
        b_out_.grad.row(0) += dy.colwise().sum();
        nn::MatrixF dh = dy * w_out_.value;
        nn::MatrixF dcond = nn::MatrixF::Zero(dy.rows(), config.cond_dim);
        // skip path: y += (cond . w_skip) * x
        nn::MatrixF dgain = (dy.array() * x_cache_.array()).rowwise().sum().matrix();  // [B x 1]
        w_skip_.grad.row(0) += dgain.transpose() * cond_cache_;
        dcond.noalias() += dgain * w_skip_.value;
        w_cond_out_.grad.noalias() += dy.transpose() * cond_cache_;
        dcond.noalias() += dy * w_cond_out_.value;
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            auto& blk = *it;
            nn::MatrixF du = dh * blk.w2.value;
            blk.w2.grad.noalias() += dh.transpose() * blk.u;
            blk.b2.grad.row(0) += dh.colwise().sum();
            nn::MatrixF da;
            nn::silu_backward(blk.a, du, da);
            blk.w1.grad.noalias() += da.transpose() * blk.h_in;
            blk.b1.grad.row(0) += da.colwise().sum();
            blk.p.grad.noalias() += da.transpose() * cond_cache_;
            dcond.noalias() += da * blk.p.value;
            dh.noalias() += da * blk.w1.value;
        }
        w_in_.grad.noalias() += dh.transpose() * x_cache_;
        b_in_.grad.row(0) += dh.colwise().sum();
        return dcond;
    }

private:
    struct Block {
        nn::Param w1, b1, p, w2, b2;
        nn::MatrixF h_in, a, u;  // forward caches
    };

    nn::Param w_in_, b_in_, w_out_, b_out_, w_skip_, w_cond_out_;
    std::vector<Block> blocks_;
    nn::MatrixF x_cache_, cond_cache_, h_final_, skip_gain_;
};

}  // namespace dermaug
