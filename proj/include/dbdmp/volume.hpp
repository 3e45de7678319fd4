#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dbdmp/rng.hpp"

namespace dbdmp {

using Shape3 = std::array<int64_t, 3>;   // (D, H, W) = (z, y, x)
using Spacing3 = std::array<double, 3>;  // (sz, sy, sx) in mm
using Index3 = std::array<int64_t, 3>;

inline int64_t numel(const Shape3& s) { return s[0] * s[1] * s[2]; }

// Dense 3D scalar image with geometry. Storage order: x fastest,
// index = z*(H*W) + y*W + x.
struct Volume {
    Shape3 shape{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<float> data;

    Volume() = default;
    Volume(Shape3 s, Spacing3 sp, float fill = 0.f) : shape(s), spacing(sp) {
        data.assign(static_cast<size_t>(numel(s)), fill);
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t index(int64_t z, int64_t y, int64_t x) const {
        return (z * shape[1] + y) * shape[2] + x;
    }
    float& at(int64_t z, int64_t y, int64_t x) { return data[static_cast<size_t>(index(z, y, x))]; }
    float at(int64_t z, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(index(z, y, x))];
    }
    double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }

    void validate() const;  // throws on empty dims, non-positive spacing, NaN/Inf
};

// Binary label image, geometry identical to its paired Volume.
struct LabelVolume {
    Shape3 shape{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<uint8_t> data;

    LabelVolume() = default;
    LabelVolume(Shape3 s, Spacing3 sp, uint8_t fill = 0) : shape(s), spacing(sp) {
        data.assign(static_cast<size_t>(numel(s)), fill);
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t index(int64_t z, int64_t y, int64_t x) const {
        return (z * shape[1] + y) * shape[2] + x;
    }
    uint8_t& at(int64_t z, int64_t y, int64_t x) {
        return data[static_cast<size_t>(index(z, y, x))];
    }
    uint8_t at(int64_t z, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(index(z, y, x))];
    }
    int64_t foreground_count() const;

    void validate() const;  // values in {0,1}, dims >= 1
};

struct Instance {
    int id = 0;
    std::vector<int64_t> voxels;  // flat indices
    double mean_intensity = 0.0;
    double volume_mm3 = 0.0;
};

struct InstanceSet {
    std::vector<Instance> instances;
};

struct Patch {
    Shape3 shape{0, 0, 0};
    Index3 source_offset{0, 0, 0};
    std::vector<float> image;
    std::vector<uint8_t> label;  // empty when no label was cut
    bool has_label() const { return !label.empty(); }
};

// --- preprocessing ----------------------------------------------------------

// Trilinear resampling to the target spacing; output shape
// round(in_shape * in_spacing / target), min 1 per axis.
Volume resample(const Volume& v, const Spacing3& target_spacing);
// Nearest-neighbor variant for labels.
LabelVolume resample_label(const LabelVolume& v, const Spacing3& target_spacing);

struct NormalizeResult {
    Volume volume;
    bool degenerate = false;  // constant input, std clamped
    double mean = 0.0;
    double stddev = 0.0;
};
// Zero-mean unit-variance; constant inputs map to all zeros (std clamp 1e-8).
NormalizeResult normalize(const Volume& v);

// Threshold-and-bounding-box crop around voxels above `threshold`.
// Returns the input untouched when nothing exceeds the threshold.
struct CropResult {
    Volume volume;
    Index3 offset{0, 0, 0};  // of the crop within the input
};
CropResult crop_above_threshold(const Volume& v, float threshold = -300.f);

// Edge-replicate padding so each dim reaches at least `min_shape`.
Volume pad_to(const Volume& v, const Shape3& min_shape);
LabelVolume pad_to(const LabelVolume& v, const Shape3& min_shape);

// Random patch cut. With probability oversample_fg the patch center lands on
// a labeled foreground voxel when one exists; uniform offset otherwise.
// The caller passes volumes already padded to at least patch_size.
Patch sample_patch(const Volume& v, const LabelVolume* y, Rng& rng, const Shape3& patch_size,
                   double oversample_fg);

// Min-max rescale to [0,1]; constant input maps to all zeros.
void rescale_unit(std::vector<float>& data);

// 26-connected components of the foreground; labels output 1..n, returns n.
int connected_components(const LabelVolume& mask, std::vector<int32_t>& comp);

// --- synthetic benchmark data ----------------------------------------------

struct SyntheticSpec {
    Shape3 shape{48, 48, 32};
    Spacing3 spacing{1.0, 1.0, 1.0};
    int min_instances = 3;
    int max_instances = 6;
    double min_radius_mm = 2.0;
    double max_radius_mm = 6.0;
    double fg_intensity = 1.0;
    double bg_intensity = 0.0;
    double noise_sigma = 0.08;
    double texture_sigma = 0.15;  // amplitude of the smooth background texture
    double annotated_fraction = 1.0;
    bool largest_first = false;  // mimic size-biased labeling
    int max_placement_attempts = 200;
};

struct SyntheticCase {
    Volume image;
    LabelVolume label_full;
    LabelVolume label_partial;
    InstanceSet instances;
};

// Ellipsoidal instances on a textured background. Deterministic in
// (seed, spec); throws when instances cannot be placed without overlap.
SyntheticCase generate_synthetic_case(uint64_t seed, const SyntheticSpec& spec);

}  // namespace dbdmp
