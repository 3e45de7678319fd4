#include "dbdmp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

namespace dbdmp {

double dsc(const LabelVolume& pred, const LabelVolume& gt) {
    if (pred.shape != gt.shape) throw std::invalid_argument("dsc shape mismatch");
    int64_t p = 0, g = 0, inter = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        p += pred.data[i];
        g += gt.data[i];
        inter += pred.data[i] & gt.data[i];
    }
    if (p == 0 && g == 0) return 100.0;
    if (p == 0 || g == 0) return 0.0;
    return 200.0 * double(inter) / double(p + g);
}

std::vector<Index3> surface_voxels(const LabelVolume& mask) {
    const int64_t D = mask.shape[0], H = mask.shape[1], W = mask.shape[2];
    std::vector<Index3> out;
    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                if (!mask.at(z, y, x)) continue;
                bool border = z == 0 || y == 0 || x == 0 || z == D - 1 || y == H - 1 ||
                              x == W - 1;
                if (!border) {
                    border = !mask.at(z - 1, y, x) || !mask.at(z + 1, y, x) ||
                             !mask.at(z, y - 1, x) || !mask.at(z, y + 1, x) ||
                             !mask.at(z, y, x - 1) || !mask.at(z, y, x + 1);
                }
                if (border) out.push_back({z, y, x});
            }
    return out;
}

namespace {

struct Point3 {
    double z, y, x;
};

// Small median-split kd-tree for nearest-surface queries.
class KdTree {
public:
    explicit KdTree(std::vector<Point3> pts) : pts_(std::move(pts)) {
        idx_.resize(pts_.size());
        for (size_t i = 0; i < idx_.size(); ++i) idx_[i] = i;
        build(0, idx_.size(), 0);
    }

    double nearest_sq(const Point3& q) const {
        double best = std::numeric_limits<double>::max();
        search(q, 0, idx_.size(), 0, best);
        return best;
    }

private:
    static double coord(const Point3& p, int axis) {
        return axis == 0 ? p.z : axis == 1 ? p.y : p.x;
    }
    void build(size_t lo, size_t hi, int axis) {
        if (hi - lo <= 1) return;
        size_t mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + long(lo), idx_.begin() + long(mid),
                         idx_.begin() + long(hi), [&](size_t a, size_t b) {
                             return coord(pts_[a], axis) < coord(pts_[b], axis);
                         });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }
    void search(const Point3& q, size_t lo, size_t hi, int axis, double& best) const {
        if (lo >= hi) return;
        size_t mid = (lo + hi) / 2;
        const Point3& p = pts_[idx_[mid]];
        double dz = q.z - p.z, dy = q.y - p.y, dx = q.x - p.x;
        best = std::min(best, dz * dz + dy * dy + dx * dx);
        double diff = coord(q, axis) - coord(p, axis);
        const int next = (axis + 1) % 3;
        if (diff < 0) {
            search(q, lo, mid, next, best);
            if (diff * diff < best) search(q, mid + 1, hi, next, best);
        } else {
            search(q, mid + 1, hi, next, best);
            if (diff * diff < best) search(q, lo, mid, next, best);
        }
    }
    std::vector<Point3> pts_;
    std::vector<size_t> idx_;
};

std::vector<Point3> to_mm(const std::vector<Index3>& vox, const Spacing3& sp) {
    std::vector<Point3> pts;
    pts.reserve(vox.size());
    for (const auto& v : vox)
        pts.push_back({v[0] * sp[0], v[1] * sp[1], v[2] * sp[2]});
    return pts;
}

}  // namespace

std::optional<double> assd(const LabelVolume& pred, const LabelVolume& gt) {
    if (pred.shape != gt.shape) throw std::invalid_argument("assd shape mismatch");
    auto sp = surface_voxels(pred);
    auto sg = surface_voxels(gt);
    if (sp.empty() || sg.empty()) return std::nullopt;
    auto pp = to_mm(sp, pred.spacing);
    auto pg = to_mm(sg, gt.spacing);
    KdTree tp(pp), tg(pg);
    double sum = 0.0;
    for (const auto& q : pp) sum += std::sqrt(tg.nearest_sq(q));
    for (const auto& q : pg) sum += std::sqrt(tp.nearest_sq(q));
    return sum / double(pp.size() + pg.size());
}

CaseResult evaluate_case(const std::string& case_id, const LabelVolume& pred,
                         const LabelVolume& gt) {
    CaseResult r;
    r.case_id = case_id;
    r.dsc = dsc(pred, gt);
    r.assd_mm = assd(pred, gt);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        r.tp += pred.data[i] & gt.data[i];
        r.fp += pred.data[i] & uint8_t(1 - gt.data[i]);
        r.fn += uint8_t(1 - pred.data[i]) & gt.data[i];
    }
    return r;
}

static void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    sd = std::sqrt(var / double(xs.size()));
}

MetricsSummary aggregate(std::vector<CaseResult>& results) {
    if (results.empty()) throw std::invalid_argument("aggregate needs at least one result");
    MetricsSummary s;
    s.case_count = int(results.size());
    std::vector<double> dscs;
    for (const auto& r : results) dscs.push_back(r.dsc);
    mean_std(dscs, s.dsc_mean, s.dsc_std);

    double max_assd = -1.0;
    for (const auto& r : results)
        if (r.assd_mm) max_assd = std::max(max_assd, *r.assd_mm);
    if (max_assd < 0.0) return s;  // every ASSD missing: summary stays undefined

    std::vector<double> assds;
    for (auto& r : results) {
        if (r.assd_mm) {
            assds.push_back(*r.assd_mm);
        } else {
            r.fill_applied = true;
            r.assd_mm = max_assd;
            assds.push_back(max_assd);
            s.fill_count++;
        }
    }
    double m, sd;
    mean_std(assds, m, sd);
    s.assd_mean = m;
    s.assd_std = sd;
    return s;
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<CaseResult>& results) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "case_id,dsc,assd_mm,tp,fp,fn,fill_applied\n";
    for (const auto& r : results) {
        f << r.case_id << "," << r.dsc << ",";
        if (r.assd_mm) f << *r.assd_mm;
        f << "," << r.tp << "," << r.fp << "," << r.fn << "," << (r.fill_applied ? 1 : 0)
          << "\n";
    }
}

void write_summary_json(const std::filesystem::path& path, const MetricsSummary& s,
                        const std::string& config_hash) {
    nlohmann::json j{{"dsc_mean", s.dsc_mean},
                     {"dsc_std", s.dsc_std},
                     {"fill_count", s.fill_count},
                     {"case_count", s.case_count}};
    if (s.assd_mean) {
        j["assd_mean"] = *s.assd_mean;
        j["assd_std"] = *s.assd_std;
    } else {
        j["assd_undefined"] = true;
    }
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

}  // namespace dbdmp
