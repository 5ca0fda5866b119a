#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dermaug/denoiser.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/rng.hpp"

using namespace dermaug;
using nn::MatrixF;

namespace {

MatrixF random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng, float scale = 1.0f) {
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian_f() * scale;
    return m;
}

// Central-difference check of dL/dtheta for L = sum(forward() .* probe).
// Checks every coordinate of the given parameter matrix.
void check_gradient(float* values, const float* analytic, Eigen::Index count,
                    const std::function<float()>& loss, float h = 5e-3f, float tol = 2e-2f) {
    for (Eigen::Index i = 0; i < count; ++i) {
        float saved = values[i];
        values[i] = saved + h;
        float up = loss();
        values[i] = saved - h;
        float down = loss();
        values[i] = saved;
        float numeric = (up - down) / (2 * h);
        float denom = std::max({1e-2f, std::fabs(numeric), std::fabs(analytic[i])});
        EXPECT_NEAR(analytic[i] / denom, numeric / denom, tol)
            << "coordinate " << i << " analytic=" << analytic[i] << " numeric=" << numeric;
    }
}

}  // namespace

TEST(Nn, SoftmaxRowsSumToOne) {
    RngStream rng(1, "softmax");
    MatrixF logits = random_matrix(5, 7, rng, 3.0f);
    MatrixF p = nn::softmax_rows(logits);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        EXPECT_NEAR(p.row(i).sum(), 1.0f, 1e-6f);
        for (Eigen::Index j = 0; j < p.cols(); ++j) EXPECT_GE(p(i, j), 0.0f);
    }
}

TEST(Nn, DenseGradients) {
    RngStream rng(2, "dense");
    nn::Dense layer;
    layer.init(5, 3, rng);
    MatrixF x = random_matrix(4, 5, rng);
    MatrixF probe = random_matrix(4, 3, rng);

    auto loss = [&]() { return (layer.infer(x).array() * probe.array()).sum(); };
    layer.weight.zero_grad();
    layer.bias.zero_grad();
    layer.forward(x);
    MatrixF dx = layer.backward(probe);

    check_gradient(layer.weight.value.data(), layer.weight.grad.data(), layer.weight.value.size(),
                   loss);
    check_gradient(layer.bias.value.data(), layer.bias.grad.data(), layer.bias.value.size(), loss);
    MatrixF x_work = x;
    auto loss_x = [&]() { return (layer.infer(x_work).array() * probe.array()).sum(); };
    check_gradient(x_work.data(), dx.data(), x_work.size(), loss_x);
}

TEST(Nn, ConvGradients) {
    RngStream rng(3, "conv");
    nn::Conv3x3 conv;
    conv.init(4, 4, 2, 3, rng);
    MatrixF x = random_matrix(2, 4 * 4 * 2, rng);
    MatrixF probe = random_matrix(2, 4 * 4 * 3, rng, 0.5f);

    auto loss = [&]() { return (conv.infer(x).array() * probe.array()).sum(); };
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    conv.forward(x);
    MatrixF dx = conv.backward(probe);

    check_gradient(conv.weight.value.data(), conv.weight.grad.data(), conv.weight.value.size(),
                   loss);
    check_gradient(conv.bias.value.data(), conv.bias.grad.data(), conv.bias.value.size(), loss);
    MatrixF x_work = x;
    auto loss_x = [&]() { return (conv.infer(x_work).array() * probe.array()).sum(); };
    check_gradient(x_work.data(), dx.data(), x_work.size(), loss_x);
}

TEST(Nn, AvgPoolAdjoint) {
    RngStream rng(4, "pool");
    nn::AvgPool2 pool;
    pool.init(4, 4, 2);
    MatrixF x = random_matrix(3, 4 * 4 * 2, rng);
    MatrixF probe = random_matrix(3, 2 * 2 * 2, rng);
    MatrixF y = pool.forward(x);
    MatrixF dx = pool.backward(probe);
    // linear map: <probe, P x> must equal <P^T probe, x>
    EXPECT_NEAR((y.array() * probe.array()).sum(), (dx.array() * x.array()).sum(), 1e-4f);
}

TEST(Nn, LayerNormGradients) {
    RngStream rng(5, "ln");
    nn::LayerNorm ln;
    ln.init(8);
    // give gamma non-trivial values
    for (Eigen::Index j = 0; j < 8; ++j) ln.gamma.value(0, j) = 0.5f + 0.1f * float(j);
    MatrixF x = random_matrix(5, 8, rng);
    MatrixF probe = random_matrix(5, 8, rng);

    auto loss = [&]() { return (ln.infer(x).array() * probe.array()).sum(); };
    ln.gamma.zero_grad();
    ln.beta.zero_grad();
    ln.forward(x);
    MatrixF dx = ln.backward(probe);

    check_gradient(ln.gamma.value.data(), ln.gamma.grad.data(), ln.gamma.value.size(), loss);
    check_gradient(ln.beta.value.data(), ln.beta.grad.data(), ln.beta.value.size(), loss);
    MatrixF x_work = x;
    auto loss_x = [&]() { return (ln.infer(x_work).array() * probe.array()).sum(); };
    check_gradient(x_work.data(), dx.data(), x_work.size(), loss_x, 5e-3f, 3e-2f);
}

TEST(Nn, SelfAttentionGradients) {
    RngStream rng(6, "attn");
    nn::SelfAttention attn;
    attn.init(8, rng);
    MatrixF x = random_matrix(6, 8, rng);
    MatrixF probe = random_matrix(6, 8, rng);

    auto loss = [&]() { return (attn.infer(x).array() * probe.array()).sum(); };
    nn::ParamList params;
    attn.collect(params);
    nn::zero_grads(params);
    attn.forward(x);
    MatrixF dx = attn.backward(probe);

    for (auto* p : params)
        check_gradient(p->value.data(), p->grad.data(), p->value.size(), loss, 5e-3f, 3e-2f);
    MatrixF x_work = x;
    auto loss_x = [&]() { return (attn.infer(x_work).array() * probe.array()).sum(); };
    check_gradient(x_work.data(), dx.data(), x_work.size(), loss_x, 5e-3f, 3e-2f);
}

TEST(Nn, CrossEntropyGradients) {
    RngStream rng(7, "ce");
    MatrixF logits = random_matrix(4, 6, rng);
    std::vector<int> labels = {0, 3, 5, 2};
    MatrixF dlogits;
    nn::cross_entropy_loss(logits, labels, dlogits);

    MatrixF work = logits;
    auto loss = [&]() {
        MatrixF d;
        return nn::cross_entropy_loss(work, labels, d);
    };
    check_gradient(work.data(), dlogits.data(), work.size(), loss, 5e-3f, 2e-2f);
}

TEST(Nn, SiluDerivative) {
    MatrixF x(1, 5);
    x << -2.0f, -0.5f, 0.0f, 0.5f, 2.0f;
    MatrixF dy = MatrixF::Ones(1, 5);
    MatrixF dx;
    nn::silu_backward(x, dy, dx);
    for (Eigen::Index j = 0; j < 5; ++j) {
        float h = 1e-3f;
        MatrixF up = x, down = x, yu, yd;
        up(0, j) += h;
        down(0, j) -= h;
        nn::silu_forward(up, yu);
        nn::silu_forward(down, yd);
        float numeric = (yu(0, j) - yd(0, j)) / (2 * h);
        EXPECT_NEAR(dx(0, j), numeric, 1e-3f);
    }
}

TEST(Denoiser, GradientsIncludingConditioning) {
    DenoiserConfig cfg;
    cfg.height = 4;
    cfg.width = 4;
    cfg.hidden = 12;
    cfg.blocks = 2;
    cfg.cond_dim = 6;
    DenoiserModel model = DenoiserModel::init(cfg, 11);
    // the output head is zero-initialized; randomize it so gradients flow
    RngStream rng(12, "head");
    auto params = model.params();
    for (auto* p : params)
        for (Eigen::Index i = 0; i < p->value.size(); ++i)
            if (p->value.data()[i] == 0.0f) p->value.data()[i] = 0.1f * rng.gaussian_f();

    MatrixF x = random_matrix(3, cfg.input_dim(), rng);
    MatrixF cond = random_matrix(3, cfg.cond_dim, rng);
    MatrixF probe = random_matrix(3, cfg.input_dim(), rng, 0.2f);

    auto loss = [&]() { return (model.forward_infer(x, cond).array() * probe.array()).sum(); };
    nn::zero_grads(params);
    model.forward(x, cond);
    MatrixF dcond = model.backward(probe);

    // spot-check each parameter block on a stride of coordinates
    for (auto* p : params) {
        Eigen::Index stride = std::max<Eigen::Index>(1, p->value.size() / 17);
        for (Eigen::Index i = 0; i < p->value.size(); i += stride) {
            float saved = p->value.data()[i];
            float h = 5e-3f;
            p->value.data()[i] = saved + h;
            float up = loss();
            p->value.data()[i] = saved - h;
            float down = loss();
            p->value.data()[i] = saved;
            float numeric = (up - down) / (2 * h);
            float analytic = p->grad.data()[i];
            float denom = std::max({1e-2f, std::fabs(numeric), std::fabs(analytic)});
            EXPECT_NEAR(analytic / denom, numeric / denom, 3e-2f);
        }
    }
    MatrixF cond_work = cond;
    auto loss_c = [&]() {
        return (model.forward_infer(x, cond_work).array() * probe.array()).sum();
    };
    check_gradient(cond_work.data(), dcond.data(), cond_work.size(), loss_c, 5e-3f, 3e-2f);
}

TEST(Denoiser, ForwardInferMatchesForward) {
    DenoiserConfig cfg;
    cfg.height = 4;
    cfg.width = 4;
    cfg.hidden = 16;
    cfg.blocks = 2;
    cfg.cond_dim = 8;
    DenoiserModel model = DenoiserModel::init(cfg, 3);
    RngStream rng(4, "fi");
    MatrixF x = random_matrix(5, cfg.input_dim(), rng);
    MatrixF cond = random_matrix(5, cfg.cond_dim, rng);
    MatrixF a = model.forward(x, cond);
    MatrixF b = model.forward_infer(x, cond);
    EXPECT_TRUE(a.isApprox(b));
}

TEST(Nn, SgdMomentumStep) {
    nn::Param p;
    p.init_zero(1, 1);
    p.value(0, 0) = 1.0f;
    p.grad(0, 0) = 0.5f;
    nn::SgdMomentum opt(0.1f, 0.9f);
    nn::ParamList params = {&p};
    opt.step(params);
    EXPECT_NEAR(p.value(0, 0), 0.95f, 1e-6f);  // v1 = -0.05
    p.grad(0, 0) = 0.5f;
    opt.step(params);
    EXPECT_NEAR(p.value(0, 0), 0.855f, 1e-6f);  // v2 = 0.9*(-0.05) - 0.05 = -0.095
}
