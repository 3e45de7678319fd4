#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dbdmp/inference.hpp"

using namespace dbdmp;

namespace {

NetF make_net(uint64_t seed, int levels = 2, int base = 4) {
    NetworkConfig c;
    c.resolution_levels = levels;
    c.base_features = base;
    NetF net(c);
    Rng rng(seed);
    net.init(rng);
    return net;
}

Volume random_volume(const Shape3& s, const Spacing3& sp, uint64_t seed) {
    Volume v(s, sp);
    Rng rng(seed);
    for (auto& x : v.data) x = float(rng.normal() * 50.0 + 30.0);
    return v;
}

}  // namespace

TEST_CASE("build_plan covers every voxel and flushes to the edge") {
    const Shape3 shape{20, 16, 12};
    const Shape3 patch{8, 8, 8};
    SlidingWindowPlan plan = build_plan(shape, patch, 0.5, true);

    std::vector<int> covered(size_t(numel(shape)), 0);
    for (const Index3& off : plan.offsets) {
        for (int a = 0; a < 3; ++a) {
            CHECK(off[a] >= 0);
            CHECK(off[a] + patch[a] <= shape[a]);
        }
        for (int64_t z = 0; z < patch[0]; ++z)
            for (int64_t y = 0; y < patch[1]; ++y)
                for (int64_t x = 0; x < patch[2]; ++x)
                    covered[size_t(((z + off[0]) * shape[1] + y + off[1]) * shape[2] + x +
                                   off[2])]++;
    }
    CHECK(*std::min_element(covered.begin(), covered.end()) >= 1);

    // flush-to-edge: the last start per axis equals shape - patch
    std::set<int64_t> zs, ys, xs;
    for (const Index3& off : plan.offsets) {
        zs.insert(off[0]);
        ys.insert(off[1]);
        xs.insert(off[2]);
    }
    CHECK(*zs.rbegin() == shape[0] - patch[0]);
    CHECK(*ys.rbegin() == shape[1] - patch[1]);
    CHECK(*xs.rbegin() == shape[2] - patch[2]);
    // step 0.5: interior starts spaced by patch/2 on the long axis
    CHECK(zs == std::set<int64_t>{0, 4, 8, 12});

    // exact fit: a single window
    SlidingWindowPlan one = build_plan(patch, patch, 0.5, false);
    CHECK(one.offsets.size() == 1);
    CHECK(one.offsets[0] == Index3{0, 0, 0});

    CHECK_THROWS(build_plan({4, 8, 8}, patch, 0.5, true));
}

TEST_CASE("window weights") {
    const Shape3 ps{8, 8, 4};
    std::vector<float> uni = window_weights(ps, false);
    for (float w : uni) CHECK(w == 1.f);

    std::vector<float> g = window_weights(ps, true);
    CHECK(g.size() == size_t(numel(ps)));
    for (float w : g) {
        CHECK(w > 0.f);
        CHECK(w <= 1.f);
    }
    // symmetric and maximal at the center; separable product of per-axis
    // gaussians with sigma = max(1, extent/8)
    auto at = [&](int64_t z, int64_t y, int64_t x) {
        return g[size_t((z * ps[1] + y) * ps[2] + x)];
    };
    const float peak = *std::max_element(g.begin(), g.end());
    CHECK(at(3, 3, 1) == doctest::Approx(peak));
    for (int64_t z = 0; z < ps[0]; ++z)
        for (int64_t y = 0; y < ps[1]; ++y)
            for (int64_t x = 0; x < ps[2]; ++x) {
                CHECK(at(z, y, x) ==
                      doctest::Approx(at(ps[0] - 1 - z, ps[1] - 1 - y, ps[2] - 1 - x))
                          .epsilon(1e-6));
            }
    const double sz = std::max(1.0, ps[0] / 8.0);
    // i=3 sits 0.5 from the center (3.5), i=0 sits 3.5 away
    CHECK(at(3, 3, 1) / at(0, 3, 1) ==
          doctest::Approx(std::exp(0.5 * (3.5 * 3.5 - 0.5 * 0.5) / (sz * sz))).epsilon(1e-4));
}

TEST_CASE("patch-sized volume with uniform weights equals a single forward pass") {
    const Shape3 ps{8, 8, 8};
    NetF net = make_net(1);
    Volume v = random_volume(ps, {1.0, 1.0, 1.0}, 2);

    InferenceConfig icfg;
    icfg.gaussian_weighting = false;
    Volume prob = predict(v, net, ps, icfg);
    CHECK(prob.shape == v.shape);

    // reference: z-score, one forward, foreground channel
    Volume norm = normalize(v).volume;
    Tensor x({1, 1, ps[0], ps[1], ps[2]});
    std::copy(norm.data.begin(), norm.data.end(), x.ptr());
    Tensor out = net.forward_main(x);
    for (int64_t i = 0; i < int64_t(prob.data.size()); ++i)
        CHECK(prob.data[size_t(i)] == doctest::Approx(out[i]).epsilon(1e-6));
    // gaussian weighting with one window: identical (weights cancel)
    icfg.gaussian_weighting = true;
    Volume probg = predict(v, net, ps, icfg);
    for (size_t i = 0; i < prob.data.size(); ++i)
        CHECK(probg.data[i] == doctest::Approx(prob.data[i]).epsilon(1e-6));
}

TEST_CASE("probabilities stay in [0,1] over overlapping windows") {
    const Shape3 ps{8, 8, 8};
    NetF net = make_net(3);
    Volume v = random_volume({20, 14, 10}, {1.0, 0.8, 0.8}, 4);
    InferenceConfig icfg;
    Volume prob = predict(v, net, ps, icfg);
    CHECK(prob.shape == v.shape);
    for (float p : prob.data) {
        CHECK(p >= 0.f);
        CHECK(p <= 1.f);
        CHECK(std::isfinite(p));
    }
}

TEST_CASE("identical per-window outputs blend to the same value") {
    // zero the segmentation heads: softmax of all-zero logits is exactly 0.5
    // everywhere, so any weighted average must also be exactly 0.5
    const Shape3 ps{8, 8, 8};
    NetF net = make_net(5);
    std::fill(net.dec_main.head.w.value.data.begin(), net.dec_main.head.w.value.data.end(), 0.f);
    std::fill(net.dec_main.head.b.value.data.begin(), net.dec_main.head.b.value.data.end(), 0.f);

    Volume v = random_volume({18, 12, 10}, {1.0, 1.0, 1.0}, 6);
    InferenceConfig icfg;  // gaussian, overlapping
    Volume prob = predict(v, net, ps, icfg);
    for (float p : prob.data) CHECK(p == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("predict rejects a reconstruction-head network") {
    NetworkConfig c;
    c.resolution_levels = 2;
    c.base_features = 4;
    c.head_mode = HeadMode::Reconstruction;
    NetF net(c);
    Rng rng(7);
    net.init(rng);
    Volume v = random_volume({8, 8, 8}, {1.0, 1.0, 1.0}, 8);
    InferenceConfig icfg;
    CHECK_THROWS(predict(v, net, {8, 8, 8}, icfg));
}

TEST_CASE("binarize and postprocess") {
    const Shape3 s{10, 10, 10};
    const Spacing3 sp{3.0, 0.8, 0.8};  // voxel volume 1.92 mm^3
    InferenceConfig icfg;
    PostprocessConfig pcfg;

    Volume prob(s, sp);
    Volume img(s, sp, 40.f);

    // empty probability map stays empty
    LabelVolume empty = binarize_and_postprocess(prob, img, icfg, pcfg);
    CHECK(std::count(empty.data.begin(), empty.data.end(), 1) == 0);

    // two components: a 10-voxel interior bar (19.2 mm^3) and a 3-voxel
    // corner blob touching the border (5.76 mm^3)
    for (int64_t x = 0; x < 10; ++x) prob.at(5, 5, x) = 0.9f;  // touches x borders
    prob.at(5, 5, 0) = 0.f;
    prob.at(5, 5, 9) = 0.f;  // now 8 voxels, interior: 15.36 mm^3
    prob.at(2, 2, 4) = 0.9f;
    prob.at(2, 2, 5) = 0.9f;  // interior 2-voxel blob: 3.84 mm^3
    prob.at(0, 0, 0) = 0.9f;  // border singleton

    LabelVolume lab = binarize_and_postprocess(prob, img, icfg, pcfg);
    CHECK(std::count(lab.data.begin(), lab.data.end(), 1) == 11);  // no filters: all kept

    // threshold is strict: a voxel exactly at the threshold stays background
    Volume tied = prob;
    tied.at(9, 9, 9) = float(icfg.threshold);
    LabelVolume labt = binarize_and_postprocess(tied, img, icfg, pcfg);
    CHECK(labt.at(9, 9, 9) == 0);

    // min-volume filter: 19.2 mm^3 keeps only components with >= 10 voxels
    PostprocessConfig pv;
    pv.min_volume_mm3 = 19.2;
    LabelVolume labv = binarize_and_postprocess(prob, img, icfg, pv);
    CHECK(std::count(labv.data.begin(), labv.data.end(), 1) == 0);
    pv.min_volume_mm3 = 15.0;  // the 8-voxel bar (15.36) survives
    labv = binarize_and_postprocess(prob, img, icfg, pv);
    CHECK(std::count(labv.data.begin(), labv.data.end(), 1) == 8);
    CHECK(labv.at(5, 5, 4) == 1);

    // border filter drops only the corner singleton
    PostprocessConfig pb;
    pb.remove_border_components = true;
    LabelVolume labb = binarize_and_postprocess(prob, img, icfg, pb);
    CHECK(std::count(labb.data.begin(), labb.data.end(), 1) == 10);
    CHECK(labb.at(0, 0, 0) == 0);

    // intensity window on the mean image value of each component
    Volume img2 = img;
    img2.at(2, 2, 4) = 500.f;
    img2.at(2, 2, 5) = 500.f;  // 2-voxel blob mean 500
    PostprocessConfig pi;
    pi.intensity_window_enabled = true;
    pi.intensity_low = 0.0;
    pi.intensity_high = 100.0;
    LabelVolume labi = binarize_and_postprocess(prob, img2, icfg, pi);
    CHECK(labi.at(2, 2, 4) == 0);
    CHECK(labi.at(2, 2, 5) == 0);
    CHECK(labi.at(5, 5, 4) == 1);

    // postprocess is monotone-destructive: output subset of the thresholded map
    PostprocessConfig all;
    all.remove_border_components = true;
    all.min_volume_mm3 = 10.0;
    all.intensity_window_enabled = true;
    all.intensity_low = 0.0;
    all.intensity_high = 100.0;
    LabelVolume laba = binarize_and_postprocess(prob, img2, icfg, all);
    for (int64_t i = 0; i < laba.size(); ++i) {
        if (laba.data[size_t(i)]) CHECK(prob.data[size_t(i)] > icfg.threshold);
    }

    Volume wrong({4, 4, 4}, sp);
    CHECK_THROWS(binarize_and_postprocess(wrong, img, icfg, pcfg));
}
