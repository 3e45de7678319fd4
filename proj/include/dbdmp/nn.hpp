#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dbdmp/rng.hpp"
#include "dbdmp/tensor.hpp"

namespace dbdmp::nn {

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
struct ParamT {
    std::string name;
    TensorT<T> value;
    TensorT<T> grad;
    TensorT<T> momentum;

    void init_shape(std::vector<int64_t> shape) {
        value = TensorT<T>(shape);
        grad = TensorT<T>(shape);
        momentum = TensorT<T>(std::move(shape));
    }
};

template <typename T>
struct Module {
    virtual ~Module() = default;
    virtual void collect(std::vector<ParamT<T>*>& out) = 0;
};

// --- Conv3d: kernel k, stride s, padding p, NCDHW -------------------------

template <typename T>
struct Conv3d : Module<T> {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    ParamT<T> w, b;
    TensorT<T> x_cache;        // input (train only)
    TensorT<T> cols_cache;     // im2col of last forward (train only)

    Conv3d() = default;
    Conv3d(const std::string& name, int cin_, int cout_, int k_, int stride_, int pad_)
        : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
        w.name = name + ".w";
        b.name = name + ".b";
        w.init_shape({cout, cin, k, k, k});
        b.init_shape({cout});
    }

    void init(Rng& rng) {
        const double fan_in = double(cin) * k * k * k;
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& v : w.value.data) v = T(rng.normal(0.0, sd));
        for (auto& v : b.value.data) v = T(0);
    }

    void collect(std::vector<ParamT<T>*>& out) override {
        out.push_back(&w);
        out.push_back(&b);
    }

    static int64_t out_dim(int64_t in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

    void im2col(const TensorT<T>& x, int64_t bi, TensorT<T>& cols) const {
        const int64_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
        const int64_t oD = out_dim(D, k, stride, pad), oH = out_dim(H, k, stride, pad),
                      oW = out_dim(W, k, stride, pad);
        const int64_t n_out = oD * oH * oW;
        const int64_t rows = int64_t(cin) * k * k * k;
        if (cols.shape != std::vector<int64_t>{rows, n_out}) cols = TensorT<T>({rows, n_out});
        const T* xb = x.ptr() + bi * cin * D * H * W;
        T* cp = cols.ptr();
        for (int c = 0; c < cin; ++c) {
            const T* xc = xb + int64_t(c) * D * H * W;
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        T* row = cp;
                        cp += n_out;
                        int64_t idx = 0;
                        for (int64_t od = 0; od < oD; ++od) {
                            const int64_t iz = od * stride + kz - pad;
                            const bool z_ok = iz >= 0 && iz < D;
                            for (int64_t oh = 0; oh < oH; ++oh) {
                                const int64_t iy = oh * stride + ky - pad;
                                const bool y_ok = iy >= 0 && iy < H;
                                if (!z_ok || !y_ok) {
                                    for (int64_t ow = 0; ow < oW; ++ow) row[idx++] = T(0);
                                    continue;
                                }
                                const T* src = xc + (iz * H + iy) * W;
                                for (int64_t ow = 0; ow < oW; ++ow) {
                                    const int64_t ix = ow * stride + kx - pad;
                                    row[idx++] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                                }
                            }
                        }
                    }
        }
    }

    void col2im_add(const TensorT<T>& cols, TensorT<T>& gx, int64_t bi) const {
        const int64_t D = gx.dim(2), H = gx.dim(3), W = gx.dim(4);
        const int64_t oD = out_dim(D, k, stride, pad), oH = out_dim(H, k, stride, pad),
                      oW = out_dim(W, k, stride, pad);
        const int64_t n_out = oD * oH * oW;
        T* gb = gx.ptr() + bi * cin * D * H * W;
        const T* cp = cols.ptr();
        for (int c = 0; c < cin; ++c) {
            T* gc = gb + int64_t(c) * D * H * W;
            for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        const T* row = cp;
                        cp += n_out;
                        int64_t idx = 0;
                        for (int64_t od = 0; od < oD; ++od) {
                            const int64_t iz = od * stride + kz - pad;
                            const bool z_ok = iz >= 0 && iz < D;
                            for (int64_t oh = 0; oh < oH; ++oh) {
                                const int64_t iy = oh * stride + ky - pad;
                                if (!z_ok || iy < 0 || iy >= H) {
                                    idx += oW;
                                    continue;
                                }
                                T* dst = gc + (iz * H + iy) * W;
                                for (int64_t ow = 0; ow < oW; ++ow) {
                                    const int64_t ix = ow * stride + kx - pad;
                                    if (ix >= 0 && ix < W) dst[ix] += row[idx];
                                    ++idx;
                                }
                            }
                        }
                    }
        }
    }

    TensorT<T> forward(const TensorT<T>& x, bool train) {
        const int64_t B = x.dim(0);
        if (x.dim(1) != cin) throw std::invalid_argument("conv channel mismatch");
        const int64_t oD = out_dim(x.dim(2), k, stride, pad),
                      oH = out_dim(x.dim(3), k, stride, pad),
                      oW = out_dim(x.dim(4), k, stride, pad);
        TensorT<T> y({B, cout, oD, oH, oW});
        const int64_t n_out = oD * oH * oW;
        const int64_t rows = int64_t(cin) * k * k * k;
        TensorT<T> cols;
        if (train) {
            x_cache = x;
            cols_cache = TensorT<T>({B, rows, n_out});
        }
        ConstMatMap<T> wm(w.value.ptr(), cout, rows);
        for (int64_t bi = 0; bi < B; ++bi) {
            im2col(x, bi, cols);
            MatMap<T> ym(y.ptr() + bi * cout * n_out, cout, n_out);
            ConstMatMap<T> cm(cols.ptr(), rows, n_out);
            ym.noalias() = wm * cm;
            for (int c = 0; c < cout; ++c)
                ym.row(c).array() += b.value[c];
            if (train)
                std::copy(cols.data.begin(), cols.data.end(),
                          cols_cache.data.begin() + bi * rows * n_out);
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& gy) {
        const int64_t B = x_cache.dim(0);
        const int64_t n_out = gy.dim(2) * gy.dim(3) * gy.dim(4);
        const int64_t rows = int64_t(cin) * k * k * k;
        TensorT<T> gx(x_cache.shape);
        MatMap<T> gw(w.grad.ptr(), cout, rows);
        TensorT<T> gcols({rows, n_out});
        for (int64_t bi = 0; bi < B; ++bi) {
            ConstMatMap<T> gym(gy.ptr() + bi * cout * n_out, cout, n_out);
            ConstMatMap<T> cm(cols_cache.ptr() + bi * rows * n_out, rows, n_out);
            gw.noalias() += gym * cm.transpose();
            for (int c = 0; c < cout; ++c) b.grad[c] += gym.row(c).sum();
            MatMap<T> gcm(gcols.ptr(), rows, n_out);
            ConstMatMap<T> wm(w.value.ptr(), cout, rows);
            gcm.noalias() = wm.transpose() * gym;
            col2im_add(gcols, gx, bi);
        }
        return gx;
    }
};

// --- ConvTranspose3d: kernel 2, stride 2 (exact doubling, no overlap) -----

template <typename T>
struct ConvT3d : Module<T> {
    int cin = 0, cout = 0;
    static constexpr int k = 2;
    ParamT<T> w, b;  // w: (cin, cout, 2, 2, 2)
    TensorT<T> x_cache;

    ConvT3d() = default;
    ConvT3d(const std::string& name, int cin_, int cout_) : cin(cin_), cout(cout_) {
        w.name = name + ".w";
        b.name = name + ".b";
        w.init_shape({cin, cout, k, k, k});
        b.init_shape({cout});
    }

    void init(Rng& rng) {
        const double sd = std::sqrt(2.0 / double(cin) / (k * k * k));
        for (auto& v : w.value.data) v = T(rng.normal(0.0, sd));
        for (auto& v : b.value.data) v = T(0);
    }

    void collect(std::vector<ParamT<T>*>& out) override {
        out.push_back(&w);
        out.push_back(&b);
    }

    TensorT<T> forward(const TensorT<T>& x, bool train) {
        if (x.dim(1) != cin) throw std::invalid_argument("convT channel mismatch");
        const int64_t B = x.dim(0), D = x.dim(2), H = x.dim(3), W = x.dim(4);
        if (train) x_cache = x;
        TensorT<T> y({B, cout, 2 * D, 2 * H, 2 * W});
        for (int64_t bi = 0; bi < B; ++bi)
            for (int co = 0; co < cout; ++co) {
                T* yc = y.ptr() + ((bi * cout + co) * 2 * D) * 2 * H * 2 * W;
                for (int64_t i = 0; i < 8 * D * H * W; ++i) yc[i] = b.value[co];
                for (int ci = 0; ci < cin; ++ci) {
                    const T* xc = x.ptr() + ((bi * cin + ci) * D) * H * W;
                    for (int kz = 0; kz < 2; ++kz)
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx) {
                                const T wv = w.value[(((int64_t(ci) * cout + co) * 2 + kz) * 2 +
                                                      ky) * 2 + kx];
                                for (int64_t z = 0; z < D; ++z)
                                    for (int64_t yy = 0; yy < H; ++yy) {
                                        const T* src = xc + (z * H + yy) * W;
                                        T* dst = yc + ((2 * z + kz) * 2 * H + 2 * yy + ky) * 2 * W +
                                                 kx;
                                        for (int64_t xx = 0; xx < W; ++xx)
                                            dst[2 * xx] += wv * src[xx];
                                    }
                            }
                }
            }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& gy) {
        const int64_t B = x_cache.dim(0), D = x_cache.dim(2), H = x_cache.dim(3),
                      W = x_cache.dim(4);
        TensorT<T> gx(x_cache.shape);
        for (int64_t bi = 0; bi < B; ++bi)
            for (int co = 0; co < cout; ++co) {
                const T* gyc = gy.ptr() + ((bi * cout + co) * 2 * D) * 2 * H * 2 * W;
                T bsum = 0;
                for (int64_t i = 0; i < 8 * D * H * W; ++i) bsum += gyc[i];
                b.grad[co] += bsum;
                for (int ci = 0; ci < cin; ++ci) {
                    const T* xc = x_cache.ptr() + ((bi * cin + ci) * D) * H * W;
                    T* gxc = gx.ptr() + ((bi * cin + ci) * D) * H * W;
                    for (int kz = 0; kz < 2; ++kz)
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx) {
                                const int64_t widx =
                                    (((int64_t(ci) * cout + co) * 2 + kz) * 2 + ky) * 2 + kx;
                                const T wv = w.value[widx];
                                T gw = 0;
                                for (int64_t z = 0; z < D; ++z)
                                    for (int64_t yy = 0; yy < H; ++yy) {
                                        const T* g = gyc +
                                                     ((2 * z + kz) * 2 * H + 2 * yy + ky) * 2 * W +
                                                     kx;
                                        const T* src = xc + (z * H + yy) * W;
                                        T* gdst = gxc + (z * H + yy) * W;
                                        for (int64_t xx = 0; xx < W; ++xx) {
                                            gw += g[2 * xx] * src[xx];
                                            gdst[xx] += wv * g[2 * xx];
                                        }
                                    }
                                w.grad[widx] += gw;
                            }
                }
            }
        return gx;
    }
};

// --- InstanceNorm3d -------------------------------------------------------

template <typename T>
struct InstanceNorm3d : Module<T> {
    int channels = 0;
    T eps = T(1e-5);
    ParamT<T> gamma, beta;
    TensorT<T> xhat_cache;
    std::vector<T> inv_sd_cache;  // per (b, c)

    InstanceNorm3d() = default;
    InstanceNorm3d(const std::string& name, int c) : channels(c) {
        gamma.name = name + ".g";
        beta.name = name + ".b";
        gamma.init_shape({c});
        beta.init_shape({c});
        for (auto& v : gamma.value.data) v = T(1);
    }

    void collect(std::vector<ParamT<T>*>& out) override {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    TensorT<T> forward(const TensorT<T>& x, bool train) {
        const int64_t B = x.dim(0), C = x.dim(1);
        const int64_t n = x.dim(2) * x.dim(3) * x.dim(4);
        TensorT<T> y(x.shape);
        if (train) {
            xhat_cache = TensorT<T>(x.shape);
            inv_sd_cache.assign(size_t(B * C), T(0));
        }
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* xc = x.ptr() + (b * C + c) * n;
                T* yc = y.ptr() + (b * C + c) * n;
                T mean = 0;
                for (int64_t i = 0; i < n; ++i) mean += xc[i];
                mean /= T(n);
                T var = 0;
                for (int64_t i = 0; i < n; ++i) {
                    T d = xc[i] - mean;
                    var += d * d;
                }
                var /= T(n);
                const T inv_sd = T(1) / std::sqrt(var + eps);
                const T g = gamma.value[c], be = beta.value[c];
                T* xh = train ? xhat_cache.ptr() + (b * C + c) * n : nullptr;
                for (int64_t i = 0; i < n; ++i) {
                    T h = (xc[i] - mean) * inv_sd;
                    if (xh) xh[i] = h;
                    yc[i] = g * h + be;
                }
                if (train) inv_sd_cache[size_t(b * C + c)] = inv_sd;
            }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& gy) {
        const int64_t B = gy.dim(0), C = gy.dim(1);
        const int64_t n = gy.dim(2) * gy.dim(3) * gy.dim(4);
        TensorT<T> gx(gy.shape);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* g = gy.ptr() + (b * C + c) * n;
                const T* xh = xhat_cache.ptr() + (b * C + c) * n;
                T* gx_c = gx.ptr() + (b * C + c) * n;
                const T ga = gamma.value[c];
                T sum_g = 0, sum_gx = 0;
                for (int64_t i = 0; i < n; ++i) {
                    sum_g += g[i];
                    sum_gx += g[i] * xh[i];
                }
                gamma.grad[c] += sum_gx;
                beta.grad[c] += sum_g;
                const T inv_sd = inv_sd_cache[size_t(b * C + c)];
                const T mg = sum_g / T(n), mgx = sum_gx / T(n);
                for (int64_t i = 0; i < n; ++i)
                    gx_c[i] = ga * inv_sd * (g[i] - mg - xh[i] * mgx);
            }
        return gx;
    }
};

// --- pointwise layers -----------------------------------------------------

template <typename T>
struct LeakyReLU {
    T slope = T(0.01);
    TensorT<T> x_cache;
    TensorT<T> forward(const TensorT<T>& x, bool train) {
        if (train) x_cache = x;
        TensorT<T> y(x.shape);
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : slope * x[i];
        return y;
    }
    TensorT<T> backward(const TensorT<T>& gy) {
        TensorT<T> gx(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i)
            gx[i] = x_cache[i] > 0 ? gy[i] : slope * gy[i];
        return gx;
    }
};

// Inverted dropout; identity in eval mode.
template <typename T>
struct Dropout {
    double rate = 0.5;
    std::vector<uint8_t> mask;
    TensorT<T> forward(const TensorT<T>& x, bool train, Rng& rng) {
        if (!train || rate <= 0.0) {
            mask.clear();
            return x;
        }
        TensorT<T> y(x.shape);
        mask.assign(size_t(x.numel()), 0);
        const T scale = T(1.0 / (1.0 - rate));
        for (int64_t i = 0; i < x.numel(); ++i) {
            if (!rng.bernoulli(rate)) {
                mask[size_t(i)] = 1;
                y[i] = x[i] * scale;
            }
        }
        return y;
    }
    TensorT<T> backward(const TensorT<T>& gy) {
        if (mask.empty()) return gy;
        TensorT<T> gx(gy.shape);
        const T scale = T(1.0 / (1.0 - rate));
        for (int64_t i = 0; i < gy.numel(); ++i)
            gx[i] = mask[size_t(i)] ? gy[i] * scale : T(0);
        return gx;
    }
};

// Channel softmax over dim 1 of (B, C, ...). Caches output.
template <typename T>
struct ChannelSoftmax {
    TensorT<T> y_cache;
    TensorT<T> forward(const TensorT<T>& x, bool train) {
        const int64_t B = x.dim(0), C = x.dim(1);
        const int64_t n = x.numel() / (B * C);
        TensorT<T> y(x.shape);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < n; ++i) {
                T mx = x[(b * C) * n + i];
                for (int64_t c = 1; c < C; ++c) mx = std::max(mx, x[(b * C + c) * n + i]);
                T denom = 0;
                for (int64_t c = 0; c < C; ++c) {
                    T e = std::exp(x[(b * C + c) * n + i] - mx);
                    y[(b * C + c) * n + i] = e;
                    denom += e;
                }
                for (int64_t c = 0; c < C; ++c) y[(b * C + c) * n + i] /= denom;
            }
        if (train) y_cache = y;
        return y;
    }
    TensorT<T> backward(const TensorT<T>& gy) {
        const int64_t B = gy.dim(0), C = gy.dim(1);
        const int64_t n = gy.numel() / (B * C);
        TensorT<T> gx(gy.shape);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < n; ++i) {
                T dot = 0;
                for (int64_t c = 0; c < C; ++c)
                    dot += gy[(b * C + c) * n + i] * y_cache[(b * C + c) * n + i];
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t idx = (b * C + c) * n + i;
                    gx[idx] = y_cache[idx] * (gy[idx] - dot);
                }
            }
        return gx;
    }
};

}  // namespace dbdmp::nn
