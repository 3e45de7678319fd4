#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dbdmp {

struct LossConfig {
    double gamma = 0.8;       // SCE forward-CE weight
    double alpha = 0.4;       // Tversky FP weight
    double tau = 0.3;         // sharpening temperature (used by pseudolabel)
    double lambda = 2.0;      // pseudo-loss ceiling
    int t_max = 99;           // ramp-up horizon in epochs
    double eps_prob = 1e-6;   // probability clamp
    double eps_smooth = 1e-5; // Tversky smoothing
    double rce_log_zero = -4.0;

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
        if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
        if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
        if (!(eps_prob > 0.0) || !(eps_smooth > 0.0))
            throw std::invalid_argument("eps values must be > 0");
    }
};

// Term selection for the supervised objective (Table-style ablations).
struct SupervisedMask {
    bool ce = false;
    bool sce = true;
    bool pce = true;
    bool tversky = true;
};

enum class PseudoMode { None, KlCe, Dice };

// Probability maps are channel-major: p[k*n + i] is class k at voxel i.
// Hard labels are uint8 foreground indicators of length n (C == 2).
// Gradient spans, when non-empty, are accumulated into (+=).

namespace detail {
template <typename T>
inline T clampp(T p, T eps) {
    return p < eps ? eps : (p > T(1) ? T(1) : p);
}
template <typename T>
inline bool clamped(T p, T eps) {
    return p < eps || p > T(1);
}
}  // namespace detail

// Eq. 1: MSE(p_main, target) + MSE(p_aux, target), each a voxel mean.
template <typename T>
T mse_reconstruction(std::span<const T> p_main, std::span<const T> p_aux,
                     std::span<const T> target, std::span<T> g_main = {},
                     std::span<T> g_aux = {}) {
    if (p_main.size() != target.size() || p_aux.size() != target.size())
        throw std::invalid_argument("mse_reconstruction shape mismatch");
    const T n = T(target.size());
    T acc = 0;
    for (size_t i = 0; i < target.size(); ++i) {
        T rm = p_main[i] - target[i], ra = p_aux[i] - target[i];
        acc += rm * rm + ra * ra;
        if (!g_main.empty()) g_main[i] += T(2) * rm / n;
        if (!g_aux.empty()) g_aux[i] += T(2) * ra / n;
    }
    return acc / n;
}

// Voxel-mean of -sum_k y_k log p_k over a soft target.
template <typename T>
T cross_entropy_soft(std::span<const T> p, std::span<const T> y, size_t channels, size_t n,
                     T eps, std::span<T> gp = {}) {
    if (p.size() != channels * n || y.size() != channels * n)
        throw std::invalid_argument("cross_entropy shape mismatch");
    T acc = 0;
    for (size_t k = 0; k < channels; ++k)
        for (size_t i = 0; i < n; ++i) {
            T pk = p[k * n + i];
            T pc = detail::clampp(pk, eps);
            acc -= y[k * n + i] * std::log(pc);
            if (!gp.empty() && !detail::clamped(pk, eps))
                gp[k * n + i] -= y[k * n + i] / pc / T(n);
        }
    return acc / T(n);
}

// Hard-label CE for the binary task: y is the foreground indicator.
template <typename T>
T cross_entropy(std::span<const T> p, std::span<const uint8_t> y, T eps, std::span<T> gp = {}) {
    const size_t n = y.size();
    if (p.size() != 2 * n) throw std::invalid_argument("cross_entropy shape mismatch");
    T acc = 0;
    for (size_t i = 0; i < n; ++i) {
        const size_t k = y[i] ? 0 * n + i : 1 * n + i;  // channel 0 = foreground
        T pk = p[k];
        T pc = detail::clampp(pk, eps);
        acc -= std::log(pc);
        if (!gp.empty() && !detail::clamped(pk, eps)) gp[k] -= T(1) / pc / T(n);
    }
    return acc / T(n);
}

// Eq. 2: gamma * CE(p, y) + CE(y, p); the reverse term reads the hard label
// as a prediction with log 0 clamped at rce_log_zero.
template <typename T>
T sce(std::span<const T> p, std::span<const uint8_t> y, const LossConfig& cfg,
      std::span<T> gp = {}) {
    const size_t n = y.size();
    if (p.size() != 2 * n) throw std::invalid_argument("sce shape mismatch");
    const T eps = T(cfg.eps_prob);
    T fwd = cross_entropy(p, y, eps, gp.empty() ? std::span<T>{} : gp);
    if (!gp.empty()) {
        // cross_entropy accumulated an unscaled gradient; correct it to gamma * dCE
        for (size_t i = 0; i < n; ++i) {
            const size_t k = y[i] ? i : n + i;
            T pk = p[k];
            if (!detail::clamped(pk, eps))
                gp[k] += (T(1) - T(cfg.gamma)) / detail::clampp(pk, eps) / T(n);
        }
    }
    T rev = 0;
    for (size_t i = 0; i < n; ++i) {
        // log y: 0 for the labeled class, rce_log_zero for the other
        const T log_fg = y[i] ? T(0) : T(cfg.rce_log_zero);
        const T log_bg = y[i] ? T(cfg.rce_log_zero) : T(0);
        rev -= p[i] * log_fg + p[n + i] * log_bg;
        if (!gp.empty()) {
            gp[i] -= log_fg / T(n);
            gp[n + i] -= log_bg / T(n);
        }
    }
    return T(cfg.gamma) * fwd + rev / T(n);
}

// Eq. 3: mean of -log p_fg over annotated-foreground voxels; 0 when none.
template <typename T>
T pce(std::span<const T> p, std::span<const uint8_t> y, T eps, std::span<T> gp = {}) {
    const size_t n = y.size();
    if (p.size() != 2 * n) throw std::invalid_argument("pce shape mismatch");
    size_t omega = 0;
    for (size_t i = 0; i < n; ++i) omega += y[i] ? 1 : 0;
    if (omega == 0) return T(0);
    T acc = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!y[i]) continue;
        T pk = p[i];
        T pc = detail::clampp(pk, eps);
        acc -= std::log(pc);
        if (!gp.empty() && !detail::clamped(pk, eps)) gp[i] -= T(1) / pc / T(omega);
    }
    return acc / T(omega);
}

// Eq. 4 as a loss: 1 - (TP + eps) / (TP + alpha FP + (1-alpha) FN + eps).
template <typename T>
T tversky(std::span<const T> p_fg, std::span<const uint8_t> y, const LossConfig& cfg,
          std::span<T> gp_fg = {}) {
    const size_t n = y.size();
    if (p_fg.size() != n) throw std::invalid_argument("tversky shape mismatch");
    const T a = T(cfg.alpha), eps = T(cfg.eps_smooth);
    T tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
        T pi = p_fg[i], yi = T(y[i]);
        tp += pi * yi;
        fp += pi * (T(1) - yi);
        fn += (T(1) - pi) * yi;
    }
    const T num = tp + eps;
    const T den = tp + a * fp + (T(1) - a) * fn + eps;
    if (!gp_fg.empty()) {
        for (size_t i = 0; i < n; ++i) {
            T yi = T(y[i]);
            T dnum = yi;
            T dden = yi + a * (T(1) - yi) - (T(1) - a) * yi;
            gp_fg[i] += -(dnum * den - num * dden) / (den * den);
        }
    }
    return T(1) - num / den;
}

// Eq. 5 with a selectable term subset.
template <typename T>
T supervised_loss(std::span<const T> p, std::span<const uint8_t> y, const LossConfig& cfg,
                  const SupervisedMask& mask, std::span<T> gp = {}) {
    const size_t n = y.size();
    T total = 0;
    if (mask.ce) total += cross_entropy(p, y, T(cfg.eps_prob), gp);
    if (mask.sce) total += sce(p, y, cfg, gp);
    if (mask.pce) total += pce(p, y, T(cfg.eps_prob), gp);
    if (mask.tversky)
        total += tversky(p.subspan(0, n), y, cfg, gp.empty() ? std::span<T>{} : gp.subspan(0, n));
    return total;
}

// Per-voxel KL(primary_i, other_i) = sum_k other_k log(other_k / primary_k).
template <typename T>
void kl_divergence_map(std::span<const T> p_primary, std::span<const T> p_other, size_t channels,
                       size_t n, T eps, std::span<T> out) {
    if (p_primary.size() != channels * n || p_other.size() != channels * n ||
        out.size() != n)
        throw std::invalid_argument("kl_divergence_map shape mismatch");
    for (size_t i = 0; i < n; ++i) {
        T acc = 0;
        for (size_t k = 0; k < channels; ++k) {
            T q = detail::clampp(p_other[k * n + i], eps);
            T pr = detail::clampp(p_primary[k * n + i], eps);
            acc += q * std::log(q / pr);
        }
        out[i] = acc;
    }
}

// Mean-of-map wrapper with analytic gradients, for checking and reuse.
template <typename T>
T kl_divergence_mean(std::span<const T> p_primary, std::span<const T> p_other, size_t channels,
                     size_t n, T eps, std::span<T> g_primary = {}, std::span<T> g_other = {}) {
    std::vector<T> map(n);
    kl_divergence_map<T>(p_primary, p_other, channels, n, eps, map);
    T acc = 0;
    for (T v : map) acc += v;
    if (!g_primary.empty() || !g_other.empty()) {
        for (size_t k = 0; k < channels; ++k)
            for (size_t i = 0; i < n; ++i) {
                T q = p_other[k * n + i], pr = p_primary[k * n + i];
                T qc = detail::clampp(q, eps), pc = detail::clampp(pr, eps);
                if (!g_primary.empty() && !detail::clamped(pr, eps))
                    g_primary[k * n + i] -= qc / pc / T(n);
                if (!g_other.empty() && !detail::clamped(q, eps))
                    g_other[k * n + i] += (std::log(qc / pc) + T(1)) / T(n);
            }
    }
    return acc / T(n);
}

// Eq. 8 consensus weights for the primary branch.
template <typename T>
void consensus_weights(std::span<const T> p_primary, std::span<const T> p_other, size_t channels,
                       size_t n, T eps, std::span<T> w) {
    kl_divergence_map<T>(p_primary, p_other, channels, n, eps, w);
    for (size_t i = 0; i < n; ++i) w[i] = std::exp(-w[i]);
}

// Eq. 9 with the weights passed in (they carry no gradient). The inner CE
// uses the full soft y_hat vector; everything sits under the single 1/W sum.
template <typename T>
T consensus_pseudo_loss_given_weights(std::span<const T> p_primary, std::span<const T> p_other,
                                      std::span<const T> y_hat, std::span<const T> w,
                                      size_t channels, size_t n, T eps,
                                      std::span<T> g_primary = {}, std::span<T> g_other = {}) {
    if (p_primary.size() != channels * n || p_other.size() != channels * n ||
        y_hat.size() != channels * n || w.size() != n)
        throw std::invalid_argument("consensus_pseudo_loss shape mismatch");
    T wsum = 0;
    for (T wi : w) wsum += wi;
    if (!(wsum > T(0))) throw std::invalid_argument("consensus weights must be positive");

    T acc = 0;
    for (size_t i = 0; i < n; ++i) {
        T ce = 0, kl = 0;
        for (size_t k = 0; k < channels; ++k) {
            const size_t idx = k * n + i;
            T pr = p_primary[idx], q = p_other[idx];
            T pc = detail::clampp(pr, eps), qc = detail::clampp(q, eps);
            ce -= y_hat[idx] * std::log(pc);
            kl += qc * std::log(qc / pc);
            if (!g_primary.empty() && !detail::clamped(pr, eps))
                g_primary[idx] += (-w[i] * y_hat[idx] / pc - qc / pc) / wsum;
            if (!g_other.empty() && !detail::clamped(q, eps))
                g_other[idx] += (std::log(qc / pc) + T(1)) / wsum;
        }
        acc += w[i] * ce + kl;
    }
    return acc / wsum;
}

template <typename T>
T consensus_pseudo_loss(std::span<const T> p_primary, std::span<const T> p_other,
                        std::span<const T> y_hat, size_t channels, size_t n,
                        const LossConfig& cfg, std::span<T> g_primary = {},
                        std::span<T> g_other = {}) {
    std::vector<T> w(n);
    consensus_weights<T>(p_primary, p_other, channels, n, T(cfg.eps_prob), w);
    return consensus_pseudo_loss_given_weights<T>(p_primary, p_other, y_hat, w, channels, n,
                                                  T(cfg.eps_prob), g_primary, g_other);
}

// Soft-Dice pseudo objective used by the naive ablation rows.
template <typename T>
T dice_pseudo_loss(std::span<const T> p_fg, std::span<const T> y_hat_fg, T eps_smooth,
                   std::span<T> gp_fg = {}) {
    if (p_fg.size() != y_hat_fg.size()) throw std::invalid_argument("dice shape mismatch");
    T inter = 0, psum = 0, ysum = 0;
    for (size_t i = 0; i < p_fg.size(); ++i) {
        inter += p_fg[i] * y_hat_fg[i];
        psum += p_fg[i];
        ysum += y_hat_fg[i];
    }
    const T num = T(2) * inter + eps_smooth;
    const T den = psum + ysum + eps_smooth;
    if (!gp_fg.empty())
        for (size_t i = 0; i < p_fg.size(); ++i)
            gp_fg[i] += -(T(2) * y_hat_fg[i] * den - num) / (den * den);
    return T(1) - num / den;
}

// Eq. 11. lambda * exp(-5 (1 - t/t_max)^2) below the horizon, lambda after.
inline double ramp_up(int t, const LossConfig& cfg) {
    if (t < 0) throw std::invalid_argument("ramp_up epoch must be >= 0");
    if (t >= cfg.t_max) return cfg.lambda;
    const double u = 1.0 - double(t) / double(cfg.t_max);
    return cfg.lambda * std::exp(-5.0 * u * u);
}

struct TotalLossBreakdown {
    double sup_main = 0, sup_aux = 0;
    double pseudo_main = 0, pseudo_aux = 0;
    double lambda_p = 0;
    double total = 0;
};

// Eq. 10. y_hat may be empty when pseudo_mode == None.
template <typename T>
TotalLossBreakdown total_loss(std::span<const T> p_main, std::span<const T> p_aux,
                              std::span<const uint8_t> y_partial, std::span<const T> y_hat,
                              int epoch, const LossConfig& cfg, const SupervisedMask& mask,
                              PseudoMode pseudo_mode, std::span<T> g_main = {},
                              std::span<T> g_aux = {}) {
    const size_t n = y_partial.size();
    TotalLossBreakdown out;
    out.lambda_p = ramp_up(epoch, cfg);

    out.sup_main = double(supervised_loss<T>(p_main, y_partial, cfg, mask, g_main));
    out.sup_aux = double(supervised_loss<T>(p_aux, y_partial, cfg, mask, g_aux));

    if (pseudo_mode != PseudoMode::None && out.lambda_p > 0.0) {
        std::vector<T> gm(g_main.empty() ? 0 : 2 * n, T(0));
        std::vector<T> ga(g_aux.empty() ? 0 : 2 * n, T(0));
        std::span<T> gms = g_main.empty() ? std::span<T>{} : std::span<T>(gm);
        std::span<T> gas = g_aux.empty() ? std::span<T>{} : std::span<T>(ga);
        if (pseudo_mode == PseudoMode::KlCe) {
            out.pseudo_main =
                double(consensus_pseudo_loss<T>(p_main, p_aux, y_hat, 2, n, cfg, gms, gas));
            out.pseudo_aux =
                double(consensus_pseudo_loss<T>(p_aux, p_main, y_hat, 2, n, cfg, gas, gms));
        } else {
            out.pseudo_main = double(dice_pseudo_loss<T>(
                p_main.subspan(0, n), y_hat.subspan(0, n), T(cfg.eps_smooth),
                gms.empty() ? std::span<T>{} : gms.subspan(0, n)));
            out.pseudo_aux = double(dice_pseudo_loss<T>(
                p_aux.subspan(0, n), y_hat.subspan(0, n), T(cfg.eps_smooth),
                gas.empty() ? std::span<T>{} : gas.subspan(0, n)));
        }
        const T lp = T(out.lambda_p);
        for (size_t i = 0; i < gm.size(); ++i) g_main[i] += lp * gm[i];
        for (size_t i = 0; i < ga.size(); ++i) g_aux[i] += lp * ga[i];
    }
    out.total = out.sup_main + out.sup_aux + out.lambda_p * (out.pseudo_main + out.pseudo_aux);
    return out;
}

}  // namespace dbdmp
