#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dermaug/errors.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"

namespace dermaug {

struct MemberInit {
    int height = 32;
    int width = 32;
    int n_classes = 6;
    std::uint64_t seed = 0;
};

// One ensemble member behind the uniform "image -> score vector" interface.
// Inputs are normalized, flattened HWC rows. predict_batch must be safe to
// call concurrently once training has finished.
class MemberModel {
public:
    virtual ~MemberModel() = default;
    virtual std::string arch_id() const = 0;

    // Called once per epoch before any train/predict calls of that epoch.
    virtual void begin_epoch(int /*epoch*/) {}

    // One SGD step on a batch; returns the batch loss.
    virtual float train_batch(const nn::MatrixF& x, const std::vector<int>& y, float lr,
                              float momentum) = 0;

    // Probability rows summing to 1.
    virtual nn::MatrixF predict_batch(const nn::MatrixF& x) const = 0;

    virtual std::vector<float> save_params() = 0;
    virtual void load_params(const std::vector<float>& flat) = 0;
};

using MemberPtr = std::unique_ptr<MemberModel>;
using MemberFactory = std::function<MemberPtr(const MemberInit&)>;

namespace detail {

inline std::map<std::string, MemberFactory>& member_registry() {
    static std::map<std::string, MemberFactory> registry;
    return registry;
}

}  // namespace detail

inline void register_member_arch(const std::string& arch_id, MemberFactory factory) {
    detail::member_registry()[arch_id] = std::move(factory);
}

// ---- built-in architectures ----

// conv(3->8) / pool / conv(8->16) / pool / fc
class CompactCnn final : public MemberModel {
public:
    explicit CompactCnn(const MemberInit& init) : init_(init) {
        if (init.height % 4 || init.width % 4) throw ConfigError("cnn_small needs dims divisible by 4");
        RngStream rng(init.seed, "cnn_small-init");
        conv1_.init(init.height, init.width, 3, 8, rng);
        pool1_.init(init.height, init.width, 8);
        conv2_.init(init.height / 2, init.width / 2, 8, 16, rng);
        pool2_.init(init.height / 2, init.width / 2, 16);
        head_.init(Eigen::Index(init.height / 4) * (init.width / 4) * 16, init.n_classes, rng,
                   std::sqrt(1.0f / float((init.height / 4) * (init.width / 4) * 16)));
    }

    std::string arch_id() const override { return "cnn_small"; }

    float train_batch(const nn::MatrixF& x, const std::vector<int>& y, float lr,
                      float momentum) override {
        a1_ = conv1_.forward(x);
        nn::relu_forward(a1_, r1_);
        nn::MatrixF p1 = pool1_.forward(r1_);
        a2_ = conv2_.forward(p1);
        nn::relu_forward(a2_, r2_);
        nn::MatrixF p2 = pool2_.forward(r2_);
        nn::MatrixF logits = head_.forward(p2);

        nn::MatrixF dlogits;
        float loss = nn::cross_entropy_loss(logits, y, dlogits);
        nn::ParamList params = collect();
        nn::zero_grads(params);
        nn::MatrixF d = head_.backward(dlogits);
        d = pool2_.backward(d);
        nn::MatrixF da2;
        nn::relu_backward(a2_, d, da2);
        d = conv2_.backward(da2);
        d = pool1_.backward(d);
        nn::MatrixF da1;
        nn::relu_backward(a1_, d, da1);
        conv1_.backward(da1);
        opt(lr, momentum).step(params);
        return loss;
    }

    nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
        nn::MatrixF h = conv1_.infer(x).cwiseMax(0.0f);
        h = pool1_.forward(h);
        h = conv2_.infer(h).cwiseMax(0.0f);
        h = pool2_.forward(h);
        return nn::softmax_rows(head_.infer(h));
    }

    std::vector<float> save_params() override { return nn::serialize_params(collect()); }
    void load_params(const std::vector<float>& flat) override {
        nn::deserialize_params(collect(), flat);
    }

private:
    nn::ParamList collect() {
        nn::ParamList out;
        conv1_.collect(out);
        conv2_.collect(out);
        head_.collect(out);
        return out;
    }

    nn::SgdMomentum& opt(float lr, float momentum) {
        if (!opt_) opt_ = std::make_unique<nn::SgdMomentum>(lr, momentum);
        opt_->lr = lr;
        opt_->momentum = momentum;
        return *opt_;
    }

    MemberInit init_;
    nn::Conv3x3 conv1_, conv2_;
    nn::AvgPool2 pool1_, pool2_;
    nn::Dense head_;
    nn::MatrixF a1_, r1_, a2_, r2_;
    std::unique_ptr<nn::SgdMomentum> opt_;
};

// conv(3->16) / pool / conv(16->24) / pool / fc(64) / fc
class WideCnn final : public MemberModel {
public:
    explicit WideCnn(const MemberInit& init) : init_(init) {
        if (init.height % 4 || init.width % 4) throw ConfigError("cnn_wide needs dims divisible by 4");
        RngStream rng(init.seed, "cnn_wide-init");
        conv1_.init(init.height, init.width, 3, 16, rng);
        pool1_.init(init.height, init.width, 16);
        conv2_.init(init.height / 2, init.width / 2, 16, 24, rng);
        pool2_.init(init.height / 2, init.width / 2, 24);
        Eigen::Index flat = Eigen::Index(init.height / 4) * (init.width / 4) * 24;
        fc1_.init(flat, 64, rng);
        head_.init(64, init.n_classes, rng, std::sqrt(1.0f / 64.0f));
    }

    std::string arch_id() const override { return "cnn_wide"; }

    float train_batch(const nn::MatrixF& x, const std::vector<int>& y, float lr,
                      float momentum) override {
        a1_ = conv1_.forward(x);
        nn::relu_forward(a1_, r1_);
        nn::MatrixF p1 = pool1_.forward(r1_);
        a2_ = conv2_.forward(p1);
        nn::relu_forward(a2_, r2_);
        nn::MatrixF p2 = pool2_.forward(r2_);
        a3_ = fc1_.forward(p2);
        nn::relu_forward(a3_, r3_);
        nn::MatrixF logits = head_.forward(r3_);

        nn::MatrixF dlogits;
        float loss = nn::cross_entropy_loss(logits, y, dlogits);
        nn::ParamList params = collect();
        nn::zero_grads(params);
        nn::MatrixF d = head_.backward(dlogits);
        nn::MatrixF da3;
        nn::relu_backward(a3_, d, da3);
        d = fc1_.backward(da3);
        d = pool2_.backward(d);
        nn::MatrixF da2;
        nn::relu_backward(a2_, d, da2);
        d = conv2_.backward(da2);
        d = pool1_.backward(d);
        nn::MatrixF da1;
        nn::relu_backward(a1_, d, da1);
        conv1_.backward(da1);
        opt(lr, momentum).step(params);
        return loss;
    }

    nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
        nn::MatrixF h = conv1_.infer(x).cwiseMax(0.0f);
        h = pool1_.forward(h);
        h = conv2_.infer(h).cwiseMax(0.0f);
        h = pool2_.forward(h);
        h = fc1_.infer(h).cwiseMax(0.0f);
        return nn::softmax_rows(head_.infer(h));
    }

    std::vector<float> save_params() override { return nn::serialize_params(collect()); }
    void load_params(const std::vector<float>& flat) override {
        nn::deserialize_params(collect(), flat);
    }

private:
    nn::ParamList collect() {
        nn::ParamList out;
        conv1_.collect(out);
        conv2_.collect(out);
        fc1_.collect(out);
        head_.collect(out);
        return out;
    }

    nn::SgdMomentum& opt(float lr, float momentum) {
        if (!opt_) opt_ = std::make_unique<nn::SgdMomentum>(lr, momentum);
        opt_->lr = lr;
        opt_->momentum = momentum;
        return *opt_;
    }

    MemberInit init_;
    nn::Conv3x3 conv1_, conv2_;
    nn::AvgPool2 pool1_, pool2_;
    nn::Dense fc1_, head_;
    nn::MatrixF a1_, r1_, a2_, r2_, a3_, r3_;
    std::unique_ptr<nn::SgdMomentum> opt_;
};

// 4x4 patch tokens, one pre-norm attention block, mean pooling.
class TinyAttention final : public MemberModel {
public:
    static constexpr int patch = 4;
    static constexpr int dim = 32;

    explicit TinyAttention(const MemberInit& init) : init_(init) {
        if (init.height % patch || init.width % patch)
            throw ConfigError("attn_tiny needs dims divisible by 4");
        n_tokens_ = (init.height / patch) * (init.width / patch);
        RngStream rng(init.seed, "attn_tiny-init");
        proj_.init(patch * patch * 3, dim, rng, std::sqrt(1.0f / float(patch * patch * 3)));
        pos_.init_gaussian(n_tokens_, dim, 0.02f, rng);
        ln1_.init(dim);
        attn_.init(dim, rng);
        ln2_.init(dim);
        mlp1_.init(dim, 2 * dim, rng);
        mlp2_.init(2 * dim, dim, rng, std::sqrt(1.0f / float(2 * dim)));
        head_.init(dim, init.n_classes, rng, std::sqrt(1.0f / float(dim)));
    }

    std::string arch_id() const override { return "attn_tiny"; }

    float train_batch(const nn::MatrixF& x, const std::vector<int>& y, float lr,
                      float momentum) override {
        const auto batch = x.rows();
        nn::MatrixF pooled(batch, dim);
        caches_.assign(std::size_t(batch), {});
        for (Eigen::Index b = 0; b < batch; ++b) {
            auto& c = caches_[std::size_t(b)];
            c.tokens = patchify(x.row(b).data());
            c.h0 = proj_.forward(c.tokens);
            c.h0 += pos_.value;
            c.attn_out = attn_.forward(ln1_.forward(c.h0));
            c.h1 = c.h0 + c.attn_out;
            c.mlp_in = ln2_.forward(c.h1);
            c.mlp_a = mlp1_.forward(c.mlp_in);
            nn::relu_forward(c.mlp_a, c.mlp_r);
            c.h2 = c.h1 + mlp2_.forward(c.mlp_r);
            pooled.row(b) = c.h2.colwise().mean();
        }
        nn::MatrixF logits = head_.forward(pooled);

        nn::MatrixF dlogits;
        float loss = nn::cross_entropy_loss(logits, y, dlogits);
        nn::ParamList params = collect();
        nn::zero_grads(params);
        nn::MatrixF dpooled = head_.backward(dlogits);
        for (Eigen::Index b = 0; b < batch; ++b) {
            auto& c = caches_[std::size_t(b)];
            // redo the per-image forward so layer caches match this image
            nn::MatrixF ln1_out = ln1_.forward(c.h0);
            attn_.forward(ln1_out);
            nn::MatrixF ln2_out = ln2_.forward(c.h1);
            mlp1_.forward(ln2_out);
            mlp2_.forward(c.mlp_r);

            nn::MatrixF dh2 = nn::MatrixF::Zero(n_tokens_, dim);
            dh2.rowwise() += dpooled.row(b) / float(n_tokens_);
            nn::MatrixF dmlp_r = mlp2_.backward(dh2);
            nn::MatrixF dmlp_a;
            nn::relu_backward(c.mlp_a, dmlp_r, dmlp_a);
            nn::MatrixF dh1 = dh2 + ln2_.backward(mlp1_.backward(dmlp_a));
            nn::MatrixF dh0 = dh1 + ln1_.backward(attn_.backward(dh1));
            pos_.grad += dh0;
            proj_.backward(dh0);
        }
        opt(lr, momentum).step(params);
        return loss;
    }

    nn::MatrixF predict_batch(const nn::MatrixF& x) const override {
        const auto batch = x.rows();
        nn::MatrixF pooled(batch, dim);
        for (Eigen::Index b = 0; b < batch; ++b) {
            nn::MatrixF h0 = proj_.infer(patchify(x.row(b).data()));
            h0 += pos_.value;
            nn::MatrixF h1 = h0 + attn_.infer(ln1_.infer(h0));
            nn::MatrixF h2 = h1 + mlp2_.infer(mlp1_.infer(ln2_.infer(h1)).cwiseMax(0.0f));
            pooled.row(b) = h2.colwise().mean();
        }
        return nn::softmax_rows(head_.infer(pooled));
    }

    std::vector<float> save_params() override { return nn::serialize_params(collect()); }
    void load_params(const std::vector<float>& flat) override {
        nn::deserialize_params(collect(), flat);
    }

private:
    struct Cache {
        nn::MatrixF tokens, h0, attn_out, h1, mlp_in, mlp_a, mlp_r, h2;
    };

    nn::MatrixF patchify(const float* img) const {
        const int ph = init_.height / patch, pw = init_.width / patch;
        nn::MatrixF tokens(n_tokens_, patch * patch * 3);
        for (int py = 0; py < ph; ++py)
            for (int px = 0; px < pw; ++px) {
                float* dst = tokens.row(py * pw + px).data();
                int k = 0;
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx)
                        for (int c = 0; c < 3; ++c, ++k)
                            dst[k] = img[(std::size_t(py * patch + dy) * init_.width +
                                          (px * patch + dx)) * 3 + c];
            }
        return tokens;
    }

    nn::ParamList collect() {
        nn::ParamList out;
        proj_.collect(out);
        out.push_back(&pos_);
        ln1_.collect(out);
        attn_.collect(out);
        ln2_.collect(out);
        mlp1_.collect(out);
        mlp2_.collect(out);
        head_.collect(out);
        return out;
    }

    nn::SgdMomentum& opt(float lr, float momentum) {
        if (!opt_) opt_ = std::make_unique<nn::SgdMomentum>(lr, momentum);
        opt_->lr = lr;
        opt_->momentum = momentum;
        return *opt_;
    }

    MemberInit init_;
    int n_tokens_ = 0;
    nn::Dense proj_, mlp1_, mlp2_, head_;
    nn::Param pos_;
    nn::LayerNorm ln1_, ln2_;
    nn::SelfAttention attn_;
    std::vector<Cache> caches_;
    std::unique_ptr<nn::SgdMomentum> opt_;
};

inline MemberPtr make_member(const std::string& arch_id, const MemberInit& init) {
    if (arch_id == "cnn_small") return std::make_unique<CompactCnn>(init);
    if (arch_id == "cnn_wide") return std::make_unique<WideCnn>(init);
    if (arch_id == "attn_tiny") return std::make_unique<TinyAttention>(init);
    auto& registry = detail::member_registry();
    auto it = registry.find(arch_id);
    if (it == registry.end()) throw ConfigError("unknown member architecture: '" + arch_id + "'");
    return it->second(init);
}

}  // namespace dermaug
