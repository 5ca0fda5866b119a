#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "dermaug/sha256.hpp"

namespace dermaug {

// All randomness flows from one root seed through named substreams. Seeds are
// derived by hashing (root, stream name, index), so adding a stage or worker
// never shifts the draws of another.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
    Sha256 h;
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(root >> (8 * i));
    h.update(buf, 8);
    h.update(stream);
    for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(index >> (8 * i));
    h.update(buf, 8);
    auto d = h.finish();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

// mt19937_64 engine with hand-rolled distributions. The engine is pinned by
// the standard; std:: distributions are not, and byte-level reproducibility
// of every artifact is part of the contract.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}
    RngStream(std::uint64_t root, std::string_view stream, std::uint64_t index = 0)
        : engine_(derive_seed(root, stream, index)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection-free scaling is fine at 64 bits.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t threshold = -n % n;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    // Marsaglia polar method; caches the spare deviate.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    float gaussian_f() { return float(gaussian()); }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = std::uint64_t(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = uniform_int(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dermaug
