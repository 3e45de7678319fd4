#pragma once

#include <array>

#include "dbdmp/rng.hpp"
#include "dbdmp/volume.hpp"

namespace dbdmp {

// Randomly composed restoration corruptions. All transforms map [0,1]
// intensities to [0,1] and are pure in (input, rng state).
struct CorruptionConfig {
    double p_nonlinear = 0.9;
    double p_shuffle = 0.5;
    double p_paint = 0.9;
    double p_inpaint_given_paint = 0.8;
    Shape3 shuffle_window_max{8, 8, 4};
    int shuffle_repeats = 1000;
    int paint_block_count_min = 1;
    int paint_block_count_max = 5;
    // per-axis block extents as fractions of the patch size
    std::array<double, 2> paint_block_frac{0.1, 0.35};

    void validate(const Shape3& patch_size) const;
};

struct PaintStats {
    int blocks = 0;
    double modified_fraction = 0.0;
};

// Monotone cubic Bezier intensity remap, decreasing variant with prob 0.5.
// Input must already be scaled to [0,1] (asserted within 1e-6).
void nonlinear_transform(std::vector<float>& img, Rng& rng);

// Exposed pieces of the Bezier map so fixed control points can be driven.
std::vector<float> build_bezier_lut(double x1, double y1, double x2, double y2, bool decreasing);
void apply_lut(std::vector<float>& img, const std::vector<float>& lut);

// Permutes voxels inside `shuffle_repeats` random windows. Preserves the
// global intensity multiset exactly.
void local_pixel_shuffle(std::vector<float>& img, const Shape3& shape, Rng& rng,
                         const CorruptionConfig& cfg);

enum class PaintMode { In, Out };
PaintStats paint(std::vector<float>& img, const Shape3& shape, Rng& rng,
                 const CorruptionConfig& cfg, PaintMode mode);

struct CorruptionPair {
    std::vector<float> corrupted;
    std::vector<float> clean;
};
// nonlinear w.p. p_nonlinear, shuffle w.p. p_shuffle, then exactly one of
// in-/out-painting w.p. p_paint.
CorruptionPair random_compose(const std::vector<float>& img, const Shape3& shape, Rng& rng,
                              const CorruptionConfig& cfg);

}  // namespace dbdmp
