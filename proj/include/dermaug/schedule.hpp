#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dermaug/errors.hpp"

namespace dermaug {

// Forward-process variances beta_t and their cumulative signal products
// alpha_bar_t. Timesteps are 1-indexed: t in [1, T].
struct NoiseSchedule {
    int timesteps = 0;
    std::vector<double> betas;       // beta_1..beta_T
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

    NoiseSchedule() = default;

    explicit NoiseSchedule(std::vector<double> beta_values) : betas(std::move(beta_values)) {
        timesteps = int(betas.size());
        if (timesteps < 1) throw ConfigError("noise schedule needs at least one timestep");
        alphas.resize(betas.size());
        alpha_bars.resize(betas.size());
        double prod = 1.0;
        for (std::size_t i = 0; i < betas.size(); ++i) {
            if (!(betas[i] > 0.0 && betas[i] < 1.0))
                throw ConfigError("beta_" + std::to_string(i + 1) + " = " + std::to_string(betas[i]) +
                                  " outside (0,1)");
            alphas[i] = 1.0 - betas[i];
            prod *= alphas[i];
            alpha_bars[i] = prod;
            if (i > 0 && !(alpha_bars[i] < alpha_bars[i - 1]))
                throw ConfigError("alpha_bar must be strictly decreasing");
        }
    }

    static NoiseSchedule linear(int timesteps, double beta_start = 1e-4, double beta_end = 0.02) {
        if (timesteps < 1) throw ConfigError("noise schedule needs at least one timestep");
        std::vector<double> betas(timesteps);
        for (int t = 0; t < timesteps; ++t) {
            double frac = timesteps == 1 ? 0.0 : double(t) / double(timesteps - 1);
            betas[t] = beta_start + (beta_end - beta_start) * frac;
        }
        return NoiseSchedule(std::move(betas));
    }

    double beta(int t) const { check_t(t); return betas[t - 1]; }
    double alpha(int t) const { check_t(t); return alphas[t - 1]; }
    double alpha_bar(int t) const { check_t(t); return alpha_bars[t - 1]; }

    void check_t(int t) const {
        if (t < 1 || t > timesteps)
            throw ConfigError("timestep " + std::to_string(t) + " out of [1," +
                              std::to_string(timesteps) + "]");
    }
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
inline void forward_noise_into(std::span<const float> x0, int t, std::span<const float> eps,
                               const NoiseSchedule& schedule, std::span<float> out) {
    schedule.check_t(t);
    if (x0.size() != eps.size() || x0.size() != out.size())
        throw ConfigError("forward_noise: shape mismatch");
    double ab = schedule.alpha_bar(t);
    double signal = std::sqrt(ab);
    double noise = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < x0.size(); ++i)
        out[i] = float(signal * double(x0[i]) + noise * double(eps[i]));
}

inline std::vector<float> forward_noise(std::span<const float> x0, int t, std::span<const float> eps,
                                        const NoiseSchedule& schedule) {
    std::vector<float> out(x0.size());
    forward_noise_into(x0, t, eps, schedule, out);
    return out;
}

}  // namespace dermaug
