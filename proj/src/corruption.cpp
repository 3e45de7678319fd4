#include "dbdmp/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dbdmp {

void CorruptionConfig::validate(const Shape3& patch_size) const {
    for (double p : {p_nonlinear, p_shuffle, p_paint, p_inpaint_given_paint})
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("corruption probability not in [0,1]");
    for (int a = 0; a < 3; ++a)
        if (shuffle_window_max[a] < 1 || shuffle_window_max[a] >= patch_size[a])
            throw std::invalid_argument("shuffle window must be smaller than the patch");
    if (paint_block_count_min < 0 || paint_block_count_max < paint_block_count_min)
        throw std::invalid_argument("bad paint block count range");
    if (paint_block_frac[0] <= 0.0 || paint_block_frac[1] > 1.0 ||
        paint_block_frac[1] < paint_block_frac[0])
        throw std::invalid_argument("bad paint block fraction range");
}

// 1024-entry lookup of the monotone interpolation of the sampled curve
// through P0=(0,0|1), P1=(x1,y1), P2=(x2,y2), P3=(1,1|0).
std::vector<float> build_bezier_lut(double x1, double y1, double x2, double y2, bool decreasing) {
    constexpr int kSamples = 4096;
    constexpr int kLut = 1024;
    const double p0y = decreasing ? 1.0 : 0.0;
    const double p3y = decreasing ? 0.0 : 1.0;

    std::vector<std::pair<double, double>> pts(kSamples);
    for (int i = 0; i < kSamples; ++i) {
        double t = double(i) / (kSamples - 1);
        double u = 1.0 - t;
        double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
        pts[i] = {b1 * x1 + b2 * x2 + b3, b0 * p0y + b1 * y1 + b2 * y2 + b3 * p3y};
    }
    std::sort(pts.begin(), pts.end());

    std::vector<float> lut(kLut);
    size_t j = 0;
    for (int i = 0; i < kLut; ++i) {
        double x = double(i) / (kLut - 1);
        while (j + 1 < pts.size() && pts[j + 1].first < x) ++j;
        double y;
        if (j + 1 >= pts.size() || pts[j + 1].first <= pts[j].first) {
            y = pts[j].second;
        } else {
            double w = (x - pts[j].first) / (pts[j + 1].first - pts[j].first);
            w = std::clamp(w, 0.0, 1.0);
            y = pts[j].second * (1 - w) + pts[j + 1].second * w;
        }
        lut[static_cast<size_t>(i)] = static_cast<float>(std::clamp(y, 0.0, 1.0));
    }
    return lut;
}

void apply_lut(std::vector<float>& img, const std::vector<float>& lut) {
    const int n = static_cast<int>(lut.size()) - 1;
    for (float& v : img) {
        float x = std::clamp(v, 0.f, 1.f) * n;
        int i = std::min(static_cast<int>(x), n - 1);
        float w = x - i;
        v = lut[size_t(i)] * (1 - w) + lut[size_t(i) + 1] * w;
    }
}

void nonlinear_transform(std::vector<float>& img, Rng& rng) {
    for (float v : img)
        if (v < -1e-6f || v > 1.f + 1e-6f)
            throw std::invalid_argument("nonlinear_transform expects intensities in [0,1]");
    double x1 = rng.uniform(), y1 = rng.uniform();
    double x2 = rng.uniform(), y2 = rng.uniform();
    bool decreasing = rng.bernoulli(0.5);
    apply_lut(img, build_bezier_lut(x1, y1, x2, y2, decreasing));
}

void local_pixel_shuffle(std::vector<float>& img, const Shape3& shape, Rng& rng,
                         const CorruptionConfig& cfg) {
    cfg.validate(shape);
    const int64_t H = shape[1], W = shape[2];
    std::vector<float> window;
    for (int r = 0; r < cfg.shuffle_repeats; ++r) {
        Shape3 win;
        Index3 off;
        for (int a = 0; a < 3; ++a) {
            win[a] = rng.uniform_int(1, cfg.shuffle_window_max[a]);
            off[a] = rng.uniform_int(0, shape[a] - win[a]);
        }
        window.clear();
        for (int64_t z = 0; z < win[0]; ++z)
            for (int64_t y = 0; y < win[1]; ++y)
                for (int64_t x = 0; x < win[2]; ++x)
                    window.push_back(
                        img[size_t(((off[0] + z) * H + off[1] + y) * W + off[2] + x)]);
        // Fisher-Yates
        for (int64_t i = int64_t(window.size()) - 1; i > 0; --i)
            std::swap(window[size_t(i)], window[size_t(rng.uniform_int(0, i))]);
        size_t k = 0;
        for (int64_t z = 0; z < win[0]; ++z)
            for (int64_t y = 0; y < win[1]; ++y)
                for (int64_t x = 0; x < win[2]; ++x)
                    img[size_t(((off[0] + z) * H + off[1] + y) * W + off[2] + x)] = window[k++];
    }
}

PaintStats paint(std::vector<float>& img, const Shape3& shape, Rng& rng,
                 const CorruptionConfig& cfg, PaintMode mode) {
    cfg.validate(shape);
    const int64_t H = shape[1], W = shape[2];
    const int blocks =
        static_cast<int>(rng.uniform_int(cfg.paint_block_count_min, cfg.paint_block_count_max));
    std::vector<uint8_t> in_block(img.size(), 0);
    for (int b = 0; b < blocks; ++b) {
        Shape3 ext;
        Index3 off;
        for (int a = 0; a < 3; ++a) {
            int64_t lo = std::max<int64_t>(1, int64_t(cfg.paint_block_frac[0] * shape[a]));
            int64_t hi = std::max<int64_t>(lo, int64_t(cfg.paint_block_frac[1] * shape[a]));
            ext[a] = rng.uniform_int(lo, hi);
            off[a] = rng.uniform_int(0, shape[a] - ext[a]);
        }
        for (int64_t z = 0; z < ext[0]; ++z)
            for (int64_t y = 0; y < ext[1]; ++y)
                for (int64_t x = 0; x < ext[2]; ++x)
                    in_block[size_t(((off[0] + z) * H + off[1] + y) * W + off[2] + x)] = 1;
    }
    PaintStats stats;
    stats.blocks = blocks;
    int64_t modified = 0;
    for (size_t i = 0; i < img.size(); ++i) {
        const bool repaint = (mode == PaintMode::In) ? in_block[i] != 0 : in_block[i] == 0;
        if (repaint) {
            img[i] = static_cast<float>(rng.uniform());
            ++modified;
        }
    }
    stats.modified_fraction = img.empty() ? 0.0 : double(modified) / double(img.size());
    return stats;
}

CorruptionPair random_compose(const std::vector<float>& img, const Shape3& shape, Rng& rng,
                              const CorruptionConfig& cfg) {
    cfg.validate(shape);
    CorruptionPair pair;
    pair.clean = img;
    pair.corrupted = img;
    if (rng.bernoulli(cfg.p_nonlinear)) nonlinear_transform(pair.corrupted, rng);
    if (rng.bernoulli(cfg.p_shuffle)) local_pixel_shuffle(pair.corrupted, shape, rng, cfg);
    if (rng.bernoulli(cfg.p_paint)) {
        // exactly one of the two, never both
        PaintMode mode =
            rng.bernoulli(cfg.p_inpaint_given_paint) ? PaintMode::In : PaintMode::Out;
        paint(pair.corrupted, shape, rng, cfg, mode);
    }
    return pair;
}

}  // namespace dbdmp
