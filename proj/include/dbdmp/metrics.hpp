#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbdmp/volume.hpp"

namespace dbdmp {

struct CaseResult {
    std::string case_id;
    double dsc = 0.0;                // percent
    std::optional<double> assd_mm;   // missing when either structure is empty
    int64_t tp = 0, fp = 0, fn = 0;
    bool fill_applied = false;

    double recall() const { return tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn); }
};

struct MetricsSummary {
    double dsc_mean = 0.0, dsc_std = 0.0;
    std::optional<double> assd_mean, assd_std;
    int fill_count = 0;  // missing ASSDs replaced by the max
    int case_count = 0;
};

// 2|P n G| / (|P| + |G|) * 100; 100 when both empty, 0 when exactly one is.
double dsc(const LabelVolume& pred, const LabelVolume& gt);

// Border voxels (6-neighbor background or volume edge), voxel-center
// distances scaled by spacing, symmetric mean. Missing when either empty.
std::optional<double> assd(const LabelVolume& pred, const LabelVolume& gt);

std::vector<Index3> surface_voxels(const LabelVolume& mask);

CaseResult evaluate_case(const std::string& case_id, const LabelVolume& pred,
                         const LabelVolume& gt);

// Missing ASSDs are filled with the max of the computed ones before
// averaging; an all-missing column leaves the summary ASSD undefined.
MetricsSummary aggregate(std::vector<CaseResult>& results);

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<CaseResult>& results);
void write_summary_json(const std::filesystem::path& path, const MetricsSummary& s,
                        const std::string& config_hash = "");

}  // namespace dbdmp
