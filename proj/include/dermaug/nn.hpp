#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermaug/errors.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {
namespace nn {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;

struct Param {
    MatrixF value;
    MatrixF grad;

    void init_zero(Eigen::Index rows, Eigen::Index cols) {
        value = MatrixF::Zero(rows, cols);
        grad = MatrixF::Zero(rows, cols);
    }

    void init_gaussian(Eigen::Index rows, Eigen::Index cols, float stddev, RngStream& rng) {
        value.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) value(i, j) = rng.gaussian_f() * stddev;
        grad = MatrixF::Zero(rows, cols);
    }

    void zero_grad() { grad.setZero(); }
    std::size_t count() const { return std::size_t(value.size()); }
};

using ParamList = std::vector<Param*>;

inline std::size_t param_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += p->count();
    return n;
}

inline std::vector<float> serialize_params(const ParamList& params) {
    std::vector<float> out;
    out.reserve(param_count(params));
    for (const auto* p : params)
        out.insert(out.end(), p->value.data(), p->value.data() + p->value.size());
    return out;
}

inline void deserialize_params(const ParamList& params, const std::vector<float>& flat) {
    if (flat.size() != param_count(params))
        throw DataError("parameter blob size mismatch: got " + std::to_string(flat.size()) +
                        ", expected " + std::to_string(param_count(params)));
    std::size_t off = 0;
    for (auto* p : params) {
        std::copy(flat.begin() + off, flat.begin() + off + p->count(), p->value.data());
        off += p->count();
    }
}

inline void zero_grads(const ParamList& params) {
    for (auto* p : params) p->zero_grad();
}

// ---- activations ----

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline void silu_forward(const MatrixF& x, MatrixF& y) {
    y = x.unaryExpr([](float v) { return v * sigmoid(v); });
}

inline void silu_backward(const MatrixF& x, const MatrixF& dy, MatrixF& dx) {
    dx = dy.array() * x.unaryExpr([](float v) {
                           float s = sigmoid(v);
                           return s * (1.0f + v * (1.0f - s));
                       }).array();
}

inline void relu_forward(const MatrixF& x, MatrixF& y) {
    y = x.cwiseMax(0.0f);
}

inline void relu_backward(const MatrixF& x, const MatrixF& dy, MatrixF& dx) {
    dx = (x.array() > 0.0f).cast<float>() * dy.array();
}

// Row-wise softmax, numerically stabilized.
inline MatrixF softmax_rows(const MatrixF& logits) {
    MatrixF out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        float mx = logits.row(i).maxCoeff();
        Eigen::ArrayXf e = (logits.row(i).array() - mx).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

// Mean cross-entropy over the batch; writes dlogits = (softmax - onehot)/B.
inline float cross_entropy_loss(const MatrixF& logits, const std::vector<int>& labels,
                                MatrixF& dlogits) {
    const auto batch = logits.rows();
    MatrixF probs = softmax_rows(logits);
    float loss = 0.0f;
    dlogits = probs;
    for (Eigen::Index i = 0; i < batch; ++i) {
        float p = std::max(probs(i, labels[std::size_t(i)]), 1e-12f);
        loss -= std::log(p);
        dlogits(i, labels[std::size_t(i)]) -= 1.0f;
    }
    dlogits /= float(batch);
    return loss / float(batch);
}

// ---- layers ----

// Fully connected: Y = X W^T + b. X is batch-major [B x in].
struct Dense {
    Param weight;  // [out x in]
    Param bias;    // [1 x out]

    void init(Eigen::Index in_dim, Eigen::Index out_dim, RngStream& rng, float scale = -1.0f) {
        float stddev = scale > 0.0f ? scale : std::sqrt(2.0f / float(in_dim));
        weight.init_gaussian(out_dim, in_dim, stddev, rng);
        bias.init_zero(1, out_dim);
    }

    MatrixF forward(const MatrixF& x) {
        x_cache_ = x;
        MatrixF y = x * weight.value.transpose();
        y.rowwise() += bias.value.row(0);
        return y;
    }

    MatrixF backward(const MatrixF& dy) {
        weight.grad.noalias() += dy.transpose() * x_cache_;
        bias.grad.row(0) += dy.colwise().sum();
        return dy * weight.value;
    }

    // Cache-free pass for concurrent inference.
    MatrixF infer(const MatrixF& x) const {
        MatrixF y = x * weight.value.transpose();
        y.rowwise() += bias.value.row(0);
        return y;
    }

    void collect(ParamList& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

private:
    MatrixF x_cache_;
};

// 3x3 same-padding convolution via im2col. Batch rows are flattened HWC.
struct Conv3x3 {
    int in_ch = 0, out_ch = 0, height = 0, width = 0;
    Param weight;  // [out_ch x 9*in_ch]
    Param bias;    // [1 x out_ch]

    void init(int h, int w, int in_channels, int out_channels, RngStream& rng) {
        height = h; width = w; in_ch = in_channels; out_ch = out_channels;
        float stddev = std::sqrt(2.0f / float(9 * in_ch));
        weight.init_gaussian(out_ch, 9 * in_ch, stddev, rng);
        bias.init_zero(1, out_ch);
    }

    // x: [B x H*W*in_ch] -> [B x H*W*out_ch]
    MatrixF forward(const MatrixF& x) {
        fill_col(x, col_cache_);
        return apply_weights(col_cache_, x.rows());
    }

    MatrixF infer(const MatrixF& x) const {
        MatrixF col;
        fill_col(x, col);
        return apply_weights(col, x.rows());
    }

    MatrixF backward(const MatrixF& dy) {
        const auto batch = dy.rows();
        const Eigen::Index hw = Eigen::Index(height) * width;
        MatrixF dy_flat(batch * hw, out_ch);
        for (Eigen::Index b = 0; b < batch; ++b)
            std::copy(dy.row(b).data(), dy.row(b).data() + hw * out_ch,
                      dy_flat.data() + b * hw * out_ch);
        weight.grad.noalias() += dy_flat.transpose() * col_cache_;
        bias.grad.row(0) += dy_flat.colwise().sum();
        MatrixF dcol = dy_flat * weight.value;  // [B*HW x 9*in_ch]
        MatrixF dx = MatrixF::Zero(batch, hw * in_ch);
        for (Eigen::Index b = 0; b < batch; ++b) {
            float* dimg = dx.row(b).data();
            for (int y = 0; y < height; ++y) {
                for (int xx = 0; xx < width; ++xx) {
                    const float* src = dcol.row(b * hw + y * width + xx).data();
                    int k = 0;
                    for (int dy2 = -1; dy2 <= 1; ++dy2) {
                        for (int dx2 = -1; dx2 <= 1; ++dx2, ++k) {
                            int sy = y + dy2, sx = xx + dx2;
                            if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                            float* dst = dimg + (std::size_t(sy) * width + sx) * in_ch;
                            const float* s = src + k * in_ch;
                            for (int c = 0; c < in_ch; ++c) dst[c] += s[c];
                        }
                    }
                }
            }
        }
        return dx;
    }

    void collect(ParamList& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

private:
    void fill_col(const MatrixF& x, MatrixF& col) const {
        const auto batch = x.rows();
        const Eigen::Index hw = Eigen::Index(height) * width;
        col.resize(batch * hw, 9 * in_ch);
        col.setZero();
        for (Eigen::Index b = 0; b < batch; ++b) {
            const float* img = x.row(b).data();
            for (int y = 0; y < height; ++y) {
                for (int xx = 0; xx < width; ++xx) {
                    float* dst = col.row(b * hw + y * width + xx).data();
                    int k = 0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx, ++k) {
                            int sy = y + dy, sx = xx + dx;
                            if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                            const float* src = img + (std::size_t(sy) * width + sx) * in_ch;
                            std::copy(src, src + in_ch, dst + k * in_ch);
                        }
                    }
                }
            }
        }
    }

    MatrixF apply_weights(const MatrixF& col, Eigen::Index batch) const {
        const Eigen::Index hw = Eigen::Index(height) * width;
        MatrixF y_flat = col * weight.value.transpose();  // [B*HW x out_ch]
        y_flat.rowwise() += bias.value.row(0);
        MatrixF y(batch, hw * out_ch);
        for (Eigen::Index b = 0; b < batch; ++b)
            std::copy(y_flat.data() + b * hw * out_ch, y_flat.data() + (b + 1) * hw * out_ch,
                      y.row(b).data());
        return y;
    }

    MatrixF col_cache_;
};

// 2x2 average pooling, stride 2, HWC layout. Height/width must be even.
struct AvgPool2 {
    int height = 0, width = 0, channels = 0;

    void init(int h, int w, int ch) {
        if (h % 2 || w % 2) throw ConfigError("AvgPool2 needs even spatial dims");
        height = h; width = w; channels = ch;
    }

    MatrixF forward(const MatrixF& x) const {
        const auto batch = x.rows();
        const int oh = height / 2, ow = width / 2;
        MatrixF y(batch, Eigen::Index(oh) * ow * channels);
        for (Eigen::Index b = 0; b < batch; ++b) {
            const float* img = x.row(b).data();
            float* out = y.row(b).data();
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx)
                    for (int c = 0; c < channels; ++c) {
                        auto px = [&](int sy, int sx) {
                            return img[(std::size_t(sy) * width + sx) * channels + c];
                        };
                        out[(std::size_t(yy) * ow + xx) * channels + c] =
                            0.25f * (px(2 * yy, 2 * xx) + px(2 * yy, 2 * xx + 1) +
                                     px(2 * yy + 1, 2 * xx) + px(2 * yy + 1, 2 * xx + 1));
                    }
        }
        return y;
    }

    MatrixF backward(const MatrixF& dy) const {
        const auto batch = dy.rows();
        const int oh = height / 2, ow = width / 2;
        MatrixF dx = MatrixF::Zero(batch, Eigen::Index(height) * width * channels);
        for (Eigen::Index b = 0; b < batch; ++b) {
            const float* g = dy.row(b).data();
            float* out = dx.row(b).data();
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx)
                    for (int c = 0; c < channels; ++c) {
                        float v = 0.25f * g[(std::size_t(yy) * ow + xx) * channels + c];
                        out[(std::size_t(2 * yy) * width + 2 * xx) * channels + c] += v;
                        out[(std::size_t(2 * yy) * width + 2 * xx + 1) * channels + c] += v;
                        out[(std::size_t(2 * yy + 1) * width + 2 * xx) * channels + c] += v;
                        out[(std::size_t(2 * yy + 1) * width + 2 * xx + 1) * channels + c] += v;
                    }
        }
        return dx;
    }
};

// Layer norm over the last dimension, applied row-wise to [N x d] token blocks.
struct LayerNorm {
    Param gamma;  // [1 x d]
    Param beta;   // [1 x d]
    static constexpr float eps = 1e-5f;

    void init(Eigen::Index d) {
        gamma.value = MatrixF::Ones(1, d);
        gamma.grad = MatrixF::Zero(1, d);
        beta.init_zero(1, d);
    }

    MatrixF forward(const MatrixF& x) {
        const auto d = x.cols();
        mean_ = x.rowwise().mean();
        MatrixF centered = x.array().colwise() - mean_.array();
        var_ = centered.array().square().rowwise().mean();
        inv_std_ = (var_.array() + eps).sqrt().inverse();
        norm_ = centered.array().colwise() * inv_std_.array();
        MatrixF y = norm_.array().rowwise() * gamma.value.row(0).array();
        y.array().rowwise() += beta.value.row(0).array();
        (void)d;
        return y;
    }

    MatrixF backward(const MatrixF& dy) {
        const auto d = float(dy.cols());
        gamma.grad.row(0) += (dy.array() * norm_.array()).colwise().sum().matrix();
        beta.grad.row(0) += dy.colwise().sum();
        MatrixF dnorm = dy.array().rowwise() * gamma.value.row(0).array();
        VectorF sum_dnorm = dnorm.rowwise().sum();
        VectorF sum_dnorm_norm = (dnorm.array() * norm_.array()).rowwise().sum();
        MatrixF dx = dnorm;
        dx.array().colwise() -= (sum_dnorm / d).array();
        dx.array() -= norm_.array().colwise() * (sum_dnorm_norm / d).array();
        dx.array().colwise() *= inv_std_.array();
        return dx;
    }

    MatrixF infer(const MatrixF& x) const {
        VectorF mean = x.rowwise().mean();
        MatrixF centered = x.array().colwise() - mean.array();
        VectorF var = centered.array().square().rowwise().mean();
        Eigen::ArrayXf inv_std = (var.array() + eps).sqrt().inverse();
        MatrixF y = (centered.array().colwise() * inv_std).rowwise() * gamma.value.row(0).array();
        y.array().rowwise() += beta.value.row(0).array();
        return y;
    }

    void collect(ParamList& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

private:
    VectorF mean_, var_, inv_std_;
    MatrixF norm_;
};

// Single-head self-attention over one token block [N x d].
struct SelfAttention {
    Dense q, k, v, o;
    Eigen::Index dim = 0;

    void init(Eigen::Index d, RngStream& rng) {
        dim = d;
        float scale = std::sqrt(1.0f / float(d));
        q.init(d, d, rng, scale);
        k.init(d, d, rng, scale);
        v.init(d, d, rng, scale);
        o.init(d, d, rng, scale);
    }

    MatrixF forward(const MatrixF& x) {
        q_ = q.forward(x);
        k_ = k.forward(x);
        v_ = v.forward(x);
        float inv_sqrt_d = 1.0f / std::sqrt(float(dim));
        MatrixF scores = q_ * k_.transpose() * inv_sqrt_d;
        attn_ = softmax_rows(scores);
        ctx_ = attn_ * v_;
        return o.forward(ctx_);
    }

    MatrixF backward(const MatrixF& dy) {
        MatrixF dctx = o.backward(dy);
        MatrixF dattn = dctx * v_.transpose();
        MatrixF dv = attn_.transpose() * dctx;
        // softmax jacobian per row
        MatrixF dscores(attn_.rows(), attn_.cols());
        for (Eigen::Index i = 0; i < attn_.rows(); ++i) {
            float dot = attn_.row(i).dot(dattn.row(i));
            dscores.row(i) = attn_.row(i).array() * (dattn.row(i).array() - dot);
        }
        float inv_sqrt_d = 1.0f / std::sqrt(float(dim));
        MatrixF dq = dscores * k_ * inv_sqrt_d;
        MatrixF dk = dscores.transpose() * q_ * inv_sqrt_d;
        MatrixF dx = q.backward(dq);
        dx += k.backward(dk);
        dx += v.backward(dv);
        return dx;
    }

    MatrixF infer(const MatrixF& x) const {
        MatrixF qm = q.infer(x), km = k.infer(x), vm = v.infer(x);
        MatrixF attn = softmax_rows(qm * km.transpose() * (1.0f / std::sqrt(float(dim))));
        return o.infer(attn * vm);
    }

    void collect(ParamList& out) {
        q.collect(out);
        k.collect(out);
        v.collect(out);
        o.collect(out);
    }

private:
    MatrixF q_, k_, v_, attn_, ctx_;
};

// ---- optimizers ----

struct SgdMomentum {
    float lr = 0.01f;
    float momentum = 0.9f;

    explicit SgdMomentum(float learning_rate = 0.01f, float mom = 0.9f)
        : lr(learning_rate), momentum(mom) {}

    void step(const ParamList& params) {
        if (velocity_.size() != params.size()) {
            velocity_.clear();
            for (const auto* p : params) velocity_.push_back(MatrixF::Zero(p->value.rows(), p->value.cols()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i] = momentum * velocity_[i] - lr * params[i]->grad;
            params[i]->value += velocity_[i];
        }
    }

private:
    std::vector<MatrixF> velocity_;
};

struct Adam {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    explicit Adam(float learning_rate = 1e-3f) : lr(learning_rate) {}

    void step(const ParamList& params) {
        if (m_.size() != params.size()) {
            m_.clear();
            v_.clear();
            for (const auto* p : params) {
                m_.push_back(MatrixF::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(MatrixF::Zero(p->value.rows(), p->value.cols()));
            }
        }
        ++t_;
        float bc1 = 1.0f - std::pow(beta1, float(t_));
        float bc2 = 1.0f - std::pow(beta2, float(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1 * m_[i] + (1.0f - beta1) * params[i]->grad;
            v_[i] = beta2 * v_[i].array() + (1.0f - beta2) * params[i]->grad.array().square();
            MatrixF mhat = m_[i] / bc1;
            MatrixF vhat = v_[i] / bc2;
            params[i]->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
        }
    }

private:
    std::vector<MatrixF> m_, v_;
    long t_ = 0;
};

}  // namespace nn
}  // namespace dermaug
