#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbdmp/rng.hpp"

namespace dbdmp {

// Soft maps are channel-major (2, n), channel 0 = foreground. Pseudo labels
// are targets only; nothing here participates in gradient bookkeeping.
struct PseudoLabel {
    std::vector<float> y_mix;
    std::vector<float> y_sharp;
    std::vector<float> y_fused;
    double theta = 0.0;
};

enum class SharpenMode {
    Exponential,  // exp(y/tau) normalization, the printed formula
    Power         // p^(1/tau) normalization, the common alternative
};

// theta * p_main + (1 - theta) * p_aux
template <typename T>
void mix(std::span<const T> p_main, std::span<const T> p_aux, double theta, std::span<T> out) {
    if (theta < 0.0 || theta > 1.0) throw std::invalid_argument("theta must be in [0,1]");
    if (p_main.size() != p_aux.size() || out.size() != p_main.size())
        throw std::invalid_argument("mix shape mismatch");
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = T(theta) * p_main[i] + T(1.0 - theta) * p_aux[i];
}

template <typename T>
void sharpen(std::span<const T> y_mix, double tau, size_t channels, size_t n, std::span<T> out,
             SharpenMode mode = SharpenMode::Exponential) {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (y_mix.size() != channels * n || out.size() != channels * n)
        throw std::invalid_argument("sharpen shape mismatch");
    for (size_t i = 0; i < n; ++i) {
        T denom = 0;
        for (size_t k = 0; k < channels; ++k) {
            T v;
            if (mode == SharpenMode::Exponential) {
                v = std::exp(y_mix[k * n + i] / T(tau));
            } else {
                v = std::pow(std::max(y_mix[k * n + i], T(1e-12)), T(1.0 / tau));
            }
            out[k * n + i] = v;
            denom += v;
        }
        for (size_t k = 0; k < channels; ++k) out[k * n + i] /= denom;
    }
}

// y_hat_fg = y + (1 - y) * y_sharp_fg; background is the complement.
template <typename T>
void fuse(std::span<const T> y_sharp, std::span<const uint8_t> y_partial, std::span<T> out) {
    const size_t n = y_partial.size();
    if (y_sharp.size() != 2 * n || out.size() != 2 * n)
        throw std::invalid_argument("fuse shape mismatch");
    for (size_t i = 0; i < n; ++i) {
        T yi = T(y_partial[i]);
        T fg = yi + (T(1) - yi) * y_sharp[i];
        out[i] = fg;
        out[n + i] = T(1) - fg;
    }
}

// mix -> sharpen -> fuse with a fresh theta ~ U[0,1].
inline PseudoLabel build_pseudo_label(std::span<const float> p_main, std::span<const float> p_aux,
                                      std::span<const uint8_t> y_partial, double tau, Rng& rng,
                                      SharpenMode mode = SharpenMode::Exponential) {
    const size_t n = y_partial.size();
    if (p_main.size() != 2 * n || p_aux.size() != 2 * n)
        throw std::invalid_argument("build_pseudo_label shape mismatch");
    PseudoLabel pl;
    pl.theta = rng.uniform();
    pl.y_mix.resize(2 * n);
    pl.y_sharp.resize(2 * n);
    pl.y_fused.resize(2 * n);
    mix<float>(p_main, p_aux, pl.theta, pl.y_mix);
    sharpen<float>(pl.y_mix, tau, 2, n, pl.y_sharp, mode);
    fuse<float>(pl.y_sharp, y_partial, pl.y_fused);
    return pl;
}

}  // namespace dbdmp
