#pragma once

#include "dbdmp/checkpoint.hpp"
#include "dbdmp/config.hpp"
#include "dbdmp/volume.hpp"

namespace dbdmp {

struct SlidingWindowPlan {
    Shape3 patch_size{0, 0, 0};
    std::vector<Index3> offsets;  // within the padded volume
    bool gaussian = true;
};

// Window offsets with ~step_fraction overlap steps; the last window on each
// axis is flush with the padded edge so every voxel is covered.
SlidingWindowPlan build_plan(const Shape3& padded_shape, const Shape3& patch_size,
                             double step_fraction, bool gaussian);

// Separable Gaussian window weights (sigma = patch/8), or all-ones.
std::vector<float> window_weights(const Shape3& patch_size, bool gaussian);

// Sliding-window foreground probability from the main decoder only.
// The input is z-scored and edge-padded internally; the result is cropped
// back to the input geometry.
Volume predict(const Volume& v, NetF& net, const Shape3& patch_size,
               const InferenceConfig& icfg);

// Threshold at icfg.threshold, 26-connected components, then drop border /
// small / intensity-outlier components per the postprocess config.
LabelVolume binarize_and_postprocess(const Volume& prob, const Volume& image,
                                     const InferenceConfig& icfg, const PostprocessConfig& pcfg);

}  // namespace dbdmp
