#include "dbdmp/volume.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace dbdmp {

void Volume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1) throw std::invalid_argument("volume dim < 1");
        if (!(spacing[a] > 0.0)) throw std::invalid_argument("non-positive spacing");
    }
    if (static_cast<int64_t>(data.size()) != numel(shape))
        throw std::invalid_argument("volume data size mismatch");
    for (float v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("volume contains NaN/Inf");
}

void LabelVolume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (shape[a] < 1) throw std::invalid_argument("label dim < 1");
        if (!(spacing[a] > 0.0)) throw std::invalid_argument("non-positive spacing");
    }
    if (static_cast<int64_t>(data.size()) != numel(shape))
        throw std::invalid_argument("label data size mismatch");
    for (uint8_t v : data)
        if (v > 1) throw std::invalid_argument("label values must be 0/1");
}

int64_t LabelVolume::foreground_count() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
}

static Shape3 resampled_shape(const Shape3& in, const Spacing3& sp, const Spacing3& target) {
    Shape3 out;
    for (int a = 0; a < 3; ++a) {
        out[a] = std::max<int64_t>(
            1, static_cast<int64_t>(std::llround(double(in[a]) * sp[a] / target[a])));
    }
    return out;
}

Volume resample(const Volume& v, const Spacing3& target) {
    for (double t : target)
        if (!(t > 0.0)) throw std::invalid_argument("target spacing must be positive");
    const Shape3 out_shape = resampled_shape(v.shape, v.spacing, target);
    if (out_shape == v.shape && target == v.spacing) return v;

    Volume out(out_shape, target);
    out.origin = v.origin;
    // map output voxel centers into input voxel coordinates
    std::array<double, 3> scale;
    for (int a = 0; a < 3; ++a) scale[a] = target[a] / v.spacing[a];

    const int64_t D = v.shape[0], H = v.shape[1], W = v.shape[2];
    for (int64_t z = 0; z < out_shape[0]; ++z) {
        double fz = std::clamp(z * scale[0], 0.0, double(D - 1));
        int64_t z0 = static_cast<int64_t>(fz);
        int64_t z1 = std::min(z0 + 1, D - 1);
        double wz = fz - z0;
        for (int64_t y = 0; y < out_shape[1]; ++y) {
            double fy = std::clamp(y * scale[1], 0.0, double(H - 1));
            int64_t y0 = static_cast<int64_t>(fy);
            int64_t y1 = std::min(y0 + 1, H - 1);
            double wy = fy - y0;
            for (int64_t x = 0; x < out_shape[2]; ++x) {
                double fx = std::clamp(x * scale[2], 0.0, double(W - 1));
                int64_t x0 = static_cast<int64_t>(fx);
                int64_t x1 = std::min(x0 + 1, W - 1);
                double wx = fx - x0;
                double c00 = v.at(z0, y0, x0) * (1 - wx) + v.at(z0, y0, x1) * wx;
                double c01 = v.at(z0, y1, x0) * (1 - wx) + v.at(z0, y1, x1) * wx;
                double c10 = v.at(z1, y0, x0) * (1 - wx) + v.at(z1, y0, x1) * wx;
                double c11 = v.at(z1, y1, x0) * (1 - wx) + v.at(z1, y1, x1) * wx;
                double c0 = c00 * (1 - wy) + c01 * wy;
                double c1 = c10 * (1 - wy) + c11 * wy;
                out.at(z, y, x) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
            }
        }
    }
    return out;
}

LabelVolume resample_label(const LabelVolume& v, const Spacing3& target) {
    for (double t : target)
        if (!(t > 0.0)) throw std::invalid_argument("target spacing must be positive");
    const Shape3 out_shape = resampled_shape(v.shape, v.spacing, target);
    LabelVolume out(out_shape, target);
    out.origin = v.origin;
    std::array<double, 3> scale;
    for (int a = 0; a < 3; ++a) scale[a] = target[a] / v.spacing[a];
    for (int64_t z = 0; z < out_shape[0]; ++z) {
        int64_t sz = std::clamp<int64_t>(std::llround(z * scale[0]), 0, v.shape[0] - 1);
        for (int64_t y = 0; y < out_shape[1]; ++y) {
            int64_t sy = std::clamp<int64_t>(std::llround(y * scale[1]), 0, v.shape[1] - 1);
            for (int64_t x = 0; x < out_shape[2]; ++x) {
                int64_t sx = std::clamp<int64_t>(std::llround(x * scale[2]), 0, v.shape[2] - 1);
                out.at(z, y, x) = v.at(sz, sy, sx);
            }
        }
    }
    return out;
}

NormalizeResult normalize(const Volume& v) {
    if (v.size() <= 1) throw std::invalid_argument("normalize needs > 1 voxel");
    constexpr double kEps = 1e-8;
    double sum = 0.0, sq = 0.0;
    for (float x : v.data) {
        sum += x;
        sq += double(x) * x;
    }
    const double n = double(v.size());
    const double mean = sum / n;
    const double var = std::max(0.0, sq / n - mean * mean);
    const double sd = std::sqrt(var);

    NormalizeResult r;
    r.mean = mean;
    r.stddev = sd;
    r.degenerate = sd < kEps;
    r.volume = v;
    const double denom = r.degenerate ? kEps : sd;
    for (float& x : r.volume.data) x = static_cast<float>((x - mean) / denom);
    if (r.degenerate)
        for (float& x : r.volume.data) x = 0.f;
    return r;
}

CropResult crop_above_threshold(const Volume& v, float threshold) {
    Index3 lo{v.shape[0], v.shape[1], v.shape[2]}, hi{-1, -1, -1};
    for (int64_t z = 0; z < v.shape[0]; ++z)
        for (int64_t y = 0; y < v.shape[1]; ++y)
            for (int64_t x = 0; x < v.shape[2]; ++x)
                if (v.at(z, y, x) > threshold) {
                    lo[0] = std::min(lo[0], z);
                    lo[1] = std::min(lo[1], y);
                    lo[2] = std::min(lo[2], x);
                    hi[0] = std::max(hi[0], z);
                    hi[1] = std::max(hi[1], y);
                    hi[2] = std::max(hi[2], x);
                }
    CropResult r;
    if (hi[0] < 0) {  // nothing above threshold, keep as-is
        r.volume = v;
        return r;
    }
    Shape3 cs{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    r.volume = Volume(cs, v.spacing);
    for (int a = 0; a < 3; ++a) r.volume.origin[a] = v.origin[a] + lo[a] * v.spacing[a];
    r.offset = lo;
    for (int64_t z = 0; z < cs[0]; ++z)
        for (int64_t y = 0; y < cs[1]; ++y)
            for (int64_t x = 0; x < cs[2]; ++x)
                r.volume.at(z, y, x) = v.at(z + lo[0], y + lo[1], x + lo[2]);
    return r;
}

template <typename V>
static V pad_impl(const V& v, const Shape3& min_shape) {
    Shape3 out_shape;
    bool needed = false;
    for (int a = 0; a < 3; ++a) {
        out_shape[a] = std::max(v.shape[a], min_shape[a]);
        needed |= out_shape[a] != v.shape[a];
    }
    if (!needed) return v;
    V out(out_shape, v.spacing);
    out.origin = v.origin;
    // pad symmetrically, edge replicate
    Index3 before;
    for (int a = 0; a < 3; ++a) before[a] = (out_shape[a] - v.shape[a]) / 2;
    for (int64_t z = 0; z < out_shape[0]; ++z) {
        int64_t sz = std::clamp<int64_t>(z - before[0], 0, v.shape[0] - 1);
        for (int64_t y = 0; y < out_shape[1]; ++y) {
            int64_t sy = std::clamp<int64_t>(y - before[1], 0, v.shape[1] - 1);
            for (int64_t x = 0; x < out_shape[2]; ++x) {
                int64_t sx = std::clamp<int64_t>(x - before[2], 0, v.shape[2] - 1);
                out.at(z, y, x) = v.at(sz, sy, sx);
            }
        }
    }
    return out;
}

Volume pad_to(const Volume& v, const Shape3& min_shape) { return pad_impl(v, min_shape); }
LabelVolume pad_to(const LabelVolume& v, const Shape3& min_shape) {
    return pad_impl(v, min_shape);
}

Patch sample_patch(const Volume& v, const LabelVolume* y, Rng& rng, const Shape3& patch_size,
                   double oversample_fg) {
    for (int a = 0; a < 3; ++a)
        if (v.shape[a] < patch_size[a])
            throw std::invalid_argument("volume smaller than patch; pad first");
    if (y && y->shape != v.shape) throw std::invalid_argument("label/volume shape mismatch");

    Index3 offset{0, 0, 0};
    bool centered = false;
    if (y && oversample_fg > 0.0 && rng.uniform() < oversample_fg) {
        // pick a random foreground voxel as patch center
        std::vector<int64_t> fg;
        for (int64_t i = 0; i < y->size(); ++i)
            if (y->data[static_cast<size_t>(i)]) fg.push_back(i);
        if (!fg.empty()) {
            int64_t idx = fg[static_cast<size_t>(rng.uniform_int(0, int64_t(fg.size()) - 1))];
            Index3 c{idx / (v.shape[1] * v.shape[2]), (idx / v.shape[2]) % v.shape[1],
                     idx % v.shape[2]};
            for (int a = 0; a < 3; ++a)
                offset[a] = std::clamp<int64_t>(c[a] - patch_size[a] / 2, 0,
                                                v.shape[a] - patch_size[a]);
            centered = true;
        }
    }
    if (!centered) {
        for (int a = 0; a < 3; ++a) offset[a] = rng.uniform_int(0, v.shape[a] - patch_size[a]);
    }

    Patch p;
    p.shape = patch_size;
    p.source_offset = offset;
    p.image.resize(static_cast<size_t>(numel(patch_size)));
    if (y) p.label.resize(p.image.size());
    size_t k = 0;
    for (int64_t z = 0; z < patch_size[0]; ++z)
        for (int64_t yy = 0; yy < patch_size[1]; ++yy)
            for (int64_t x = 0; x < patch_size[2]; ++x, ++k) {
                p.image[k] = v.at(z + offset[0], yy + offset[1], x + offset[2]);
                if (y) p.label[k] = y->at(z + offset[0], yy + offset[1], x + offset[2]);
            }
    return p;
}

void rescale_unit(std::vector<float>& data) {
    if (data.empty()) return;
    auto [mn, mx] = std::minmax_element(data.begin(), data.end());
    float lo = *mn, hi = *mx;
    if (hi - lo < 1e-8f) {
        std::fill(data.begin(), data.end(), 0.f);
        return;
    }
    for (float& x : data) x = (x - lo) / (hi - lo);
}

int connected_components(const LabelVolume& mask, std::vector<int32_t>& comp) {
    const int64_t D = mask.shape[0], H = mask.shape[1], W = mask.shape[2];
    comp.assign(static_cast<size_t>(mask.size()), 0);
    int next = 0;
    std::deque<int64_t> queue;
    for (int64_t start = 0; start < mask.size(); ++start) {
        if (!mask.data[static_cast<size_t>(start)] || comp[static_cast<size_t>(start)]) continue;
        ++next;
        comp[static_cast<size_t>(start)] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            int64_t i = queue.front();
            queue.pop_front();
            int64_t z = i / (H * W), y = (i / W) % H, x = i % W;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dz && !dy && !dx) continue;
                        int64_t nz = z + dz, ny = y + dy, nx = x + dx;
                        if (nz < 0 || ny < 0 || nx < 0 || nz >= D || ny >= H || nx >= W) continue;
                        int64_t j = (nz * H + ny) * W + nx;
                        if (mask.data[static_cast<size_t>(j)] && !comp[static_cast<size_t>(j)]) {
                            comp[static_cast<size_t>(j)] = next;
                            queue.push_back(j);
                        }
                    }
        }
    }
    return next;
}

// --- synthetic cases --------------------------------------------------------

SyntheticCase generate_synthetic_case(uint64_t seed, const SyntheticSpec& spec) {
    if (!(spec.annotated_fraction > 0.0) || spec.annotated_fraction > 1.0)
        throw std::invalid_argument("annotated_fraction must be in (0, 1]");
    if (spec.min_instances < 1 || spec.max_instances < spec.min_instances)
        throw std::invalid_argument("bad instance count range");

    Rng rng(seed);
    SyntheticCase c;
    c.image = Volume(spec.shape, spec.spacing, static_cast<float>(spec.bg_intensity));
    c.label_full = LabelVolume(spec.shape, spec.spacing);
    c.label_partial = LabelVolume(spec.shape, spec.spacing);

    const int64_t D = spec.shape[0], H = spec.shape[1], W = spec.shape[2];

    // smooth background texture: a few random low-frequency cosine modes
    struct Mode {
        double kz, ky, kx, phase, amp;
    };
    std::vector<Mode> modes;
    for (int m = 0; m < 4; ++m) {
        modes.push_back({rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                         rng.uniform(0.0, 6.283185307179586),
                         rng.uniform(0.3, 1.0) * spec.texture_sigma});
    }
    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double t = 0.0;
                for (const auto& m : modes)
                    t += m.amp * std::cos(2 * 3.14159265358979 *
                                              (m.kz * z / D + m.ky * y / H + m.kx * x / W) +
                                          m.phase);
                c.image.at(z, y, x) += static_cast<float>(t);
            }

    // place non-overlapping ellipsoids
    const int count = static_cast<int>(rng.uniform_int(spec.min_instances, spec.max_instances));
    struct Ell {
        double cz, cy, cx;      // voxel coords
        double rz, ry, rx;      // voxel radii
    };
    std::vector<Ell> placed;
    for (int i = 0; i < count; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < spec.max_placement_attempts && !ok; ++attempt) {
            Ell e;
            e.rz = rng.uniform(spec.min_radius_mm, spec.max_radius_mm) / spec.spacing[0];
            e.ry = rng.uniform(spec.min_radius_mm, spec.max_radius_mm) / spec.spacing[1];
            e.rx = rng.uniform(spec.min_radius_mm, spec.max_radius_mm) / spec.spacing[2];
            e.cz = rng.uniform(e.rz + 1, D - e.rz - 2);
            e.cy = rng.uniform(e.ry + 1, H - e.ry - 2);
            e.cx = rng.uniform(e.rx + 1, W - e.rx - 2);
            if (e.cz < e.rz || e.cy < e.ry || e.cx < e.rx) continue;
            bool overlap = false;
            for (const auto& o : placed) {
                // conservative: compare against the sum of max radii plus margin
                double dz = (e.cz - o.cz) * spec.spacing[0];
                double dy = (e.cy - o.cy) * spec.spacing[1];
                double dx = (e.cx - o.cx) * spec.spacing[2];
                double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
                double ra = std::max({e.rz * spec.spacing[0], e.ry * spec.spacing[1],
                                      e.rx * spec.spacing[2]});
                double rb = std::max({o.rz * spec.spacing[0], o.ry * spec.spacing[1],
                                      o.rx * spec.spacing[2]});
                if (dist < ra + rb + 1.0) {
                    overlap = true;
                    break;
                }
            }
            if (!overlap) {
                placed.push_back(e);
                ok = true;
            }
        }
        if (!ok)
            throw std::runtime_error(
                "generate_synthetic_case: could not place instance without overlap");
    }

    // rasterize, collect instance voxel sets
    for (size_t i = 0; i < placed.size(); ++i) {
        const Ell& e = placed[i];
        Instance inst;
        inst.id = static_cast<int>(i + 1);
        double inten_sum = 0.0;
        int64_t z0 = std::max<int64_t>(0, int64_t(e.cz - e.rz) - 1);
        int64_t z1 = std::min<int64_t>(D - 1, int64_t(e.cz + e.rz) + 1);
        int64_t y0 = std::max<int64_t>(0, int64_t(e.cy - e.ry) - 1);
        int64_t y1 = std::min<int64_t>(H - 1, int64_t(e.cy + e.ry) + 1);
        int64_t x0 = std::max<int64_t>(0, int64_t(e.cx - e.rx) - 1);
        int64_t x1 = std::min<int64_t>(W - 1, int64_t(e.cx + e.rx) + 1);
        for (int64_t z = z0; z <= z1; ++z)
            for (int64_t y = y0; y <= y1; ++y)
                for (int64_t x = x0; x <= x1; ++x) {
                    double qz = (z - e.cz) / e.rz, qy = (y - e.cy) / e.ry, qx = (x - e.cx) / e.rx;
                    if (qz * qz + qy * qy + qx * qx <= 1.0) {
                        c.label_full.at(z, y, x) = 1;
                        float val = static_cast<float>(spec.fg_intensity);
                        c.image.at(z, y, x) = val;
                        inst.voxels.push_back(c.image.index(z, y, x));
                        inten_sum += val;
                    }
                }
        if (inst.voxels.empty()) continue;  // degenerate sub-voxel ellipsoid
        inst.mean_intensity = inten_sum / double(inst.voxels.size());
        inst.volume_mm3 = double(inst.voxels.size()) * c.image.voxel_volume_mm3();
        c.instances.instances.push_back(std::move(inst));
    }

    // voxel noise on everything
    for (float& v : c.image.data) v += static_cast<float>(rng.normal(0.0, spec.noise_sigma));

    // partial annotation: keep a seeded subset of instances, at least one
    const int total = static_cast<int>(c.instances.instances.size());
    if (total == 0) throw std::runtime_error("generate_synthetic_case: no instances rasterized");
    int keep = std::max(1, static_cast<int>(std::floor(spec.annotated_fraction * total)));
    std::vector<int> order(total);
    for (int i = 0; i < total; ++i) order[i] = i;
    if (spec.largest_first) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return c.instances.instances[size_t(a)].volume_mm3 >
                   c.instances.instances[size_t(b)].volume_mm3;
        });
    } else {
        for (int i = total - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(rng.uniform_int(0, i))]);
    }
    for (int k = 0; k < keep; ++k)
        for (int64_t idx : c.instances.instances[size_t(order[size_t(k)])].voxels)
            c.label_partial.data[static_cast<size_t>(idx)] = 1;

    return c;
}

}  // namespace dbdmp
