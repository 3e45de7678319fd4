#include "dbdmp/inference.hpp"

#include <cmath>

namespace dbdmp {

SlidingWindowPlan build_plan(const Shape3& padded_shape, const Shape3& patch_size,
                             double step_fraction, bool gaussian) {
    SlidingWindowPlan plan;
    plan.patch_size = patch_size;
    plan.gaussian = gaussian;
    std::array<std::vector<int64_t>, 3> starts;
    for (int a = 0; a < 3; ++a) {
        if (padded_shape[a] < patch_size[a])
            throw std::invalid_argument("volume smaller than patch; pad first");
        const int64_t step =
            std::max<int64_t>(1, int64_t(std::llround(patch_size[a] * step_fraction)));
        for (int64_t s = 0;; s += step) {
            if (s + patch_size[a] >= padded_shape[a]) {
                starts[a].push_back(padded_shape[a] - patch_size[a]);
                break;
            }
            starts[a].push_back(s);
        }
    }
    for (int64_t z : starts[0])
        for (int64_t y : starts[1])
            for (int64_t x : starts[2]) plan.offsets.push_back({z, y, x});
    return plan;
}

std::vector<float> window_weights(const Shape3& ps, bool gaussian) {
    std::vector<float> w(size_t(numel(ps)), 1.f);
    if (!gaussian) return w;
    std::array<std::vector<double>, 3> axis;
    for (int a = 0; a < 3; ++a) {
        axis[a].resize(size_t(ps[a]));
        const double c = (ps[a] - 1) / 2.0;
        const double sigma = std::max(1.0, ps[a] / 8.0);
        for (int64_t i = 0; i < ps[a]; ++i)
            axis[a][size_t(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    }
    size_t k = 0;
    for (int64_t z = 0; z < ps[0]; ++z)
        for (int64_t y = 0; y < ps[1]; ++y)
            for (int64_t x = 0; x < ps[2]; ++x, ++k)
                w[k] = float(axis[0][size_t(z)] * axis[1][size_t(y)] * axis[2][size_t(x)]);
    return w;
}

Volume predict(const Volume& v, NetF& net, const Shape3& patch_size,
               const InferenceConfig& icfg) {
    if (net.cfg.head_mode != HeadMode::Segmentation)
        throw std::invalid_argument("predict requires a segmentation-stage network");

    Volume norm = normalize(v).volume;
    Volume padded = pad_to(norm, patch_size);
    const Shape3 pshape = padded.shape;
    SlidingWindowPlan plan =
        build_plan(pshape, patch_size, icfg.step_fraction, icfg.gaussian_weighting);
    const std::vector<float> w = window_weights(patch_size, plan.gaussian);

    std::vector<double> acc(size_t(numel(pshape)), 0.0);
    std::vector<double> wsum(size_t(numel(pshape)), 0.0);
    for (const Index3& off : plan.offsets) {
        Tensor x({1, 1, patch_size[0], patch_size[1], patch_size[2]});
        size_t k = 0;
        for (int64_t z = 0; z < patch_size[0]; ++z)
            for (int64_t y = 0; y < patch_size[1]; ++y)
                for (int64_t xx = 0; xx < patch_size[2]; ++xx, ++k)
                    x[int64_t(k)] = padded.at(z + off[0], y + off[1], xx + off[2]);
        Tensor out = net.forward_main(x);
        const float* fg = out.ptr();  // foreground channel, main decoder only
        k = 0;
        for (int64_t z = 0; z < patch_size[0]; ++z)
            for (int64_t y = 0; y < patch_size[1]; ++y)
                for (int64_t xx = 0; xx < patch_size[2]; ++xx, ++k) {
                    const size_t idx = size_t(
                        ((z + off[0]) * pshape[1] + y + off[1]) * pshape[2] + xx + off[2]);
                    acc[idx] += double(fg[k]) * w[k];
                    wsum[idx] += w[k];
                }
    }

    Volume prob_padded(pshape, v.spacing);
    prob_padded.origin = v.origin;
    for (size_t i = 0; i < acc.size(); ++i)
        prob_padded.data[i] = float(acc[i] / wsum[i]);  // every voxel is covered

    if (pshape == v.shape) return prob_padded;
    // crop the symmetric padding back off
    Index3 before;
    for (int a = 0; a < 3; ++a) before[a] = (pshape[a] - v.shape[a]) / 2;
    Volume prob(v.shape, v.spacing);
    prob.origin = v.origin;
    for (int64_t z = 0; z < v.shape[0]; ++z)
        for (int64_t y = 0; y < v.shape[1]; ++y)
            for (int64_t x = 0; x < v.shape[2]; ++x)
                prob.at(z, y, x) = prob_padded.at(z + before[0], y + before[1], x + before[2]);
    return prob;
}

LabelVolume binarize_and_postprocess(const Volume& prob, const Volume& image,
                                     const InferenceConfig& icfg,
                                     const PostprocessConfig& pcfg) {
    if (prob.shape != image.shape) throw std::invalid_argument("prob/image shape mismatch");
    LabelVolume out(prob.shape, prob.spacing);
    out.origin = prob.origin;
    for (int64_t i = 0; i < prob.size(); ++i)
        out.data[size_t(i)] = prob.data[size_t(i)] > icfg.threshold ? 1 : 0;

    std::vector<int32_t> comp;
    const int n = connected_components(out, comp);
    if (n == 0) return out;

    const int64_t D = out.shape[0], H = out.shape[1], W = out.shape[2];
    std::vector<int64_t> counts(size_t(n) + 1, 0);
    std::vector<double> intensity(size_t(n) + 1, 0.0);
    std::vector<uint8_t> touches_border(size_t(n) + 1, 0);
    for (int64_t i = 0; i < out.size(); ++i) {
        const int c = comp[size_t(i)];
        if (!c) continue;
        counts[size_t(c)]++;
        intensity[size_t(c)] += image.data[size_t(i)];
        const int64_t z = i / (H * W), y = (i / W) % H, x = i % W;
        if (z == 0 || y == 0 || x == 0 || z == D - 1 || y == H - 1 || x == W - 1)
            touches_border[size_t(c)] = 1;
    }

    std::vector<uint8_t> keep(size_t(n) + 1, 1);
    const double vox = prob.voxel_volume_mm3();
    for (int c = 1; c <= n; ++c) {
        if (pcfg.remove_border_components && touches_border[size_t(c)]) keep[size_t(c)] = 0;
        if (double(counts[size_t(c)]) * vox < pcfg.min_volume_mm3) keep[size_t(c)] = 0;
        if (pcfg.intensity_window_enabled) {
            const double mean = intensity[size_t(c)] / double(counts[size_t(c)]);
            if (mean < pcfg.intensity_low || mean > pcfg.intensity_high) keep[size_t(c)] = 0;
        }
    }
    for (int64_t i = 0; i < out.size(); ++i)
        if (comp[size_t(i)] && !keep[size_t(comp[size_t(i)])]) out.data[size_t(i)] = 0;
    return out;
}

}  // namespace dbdmp
