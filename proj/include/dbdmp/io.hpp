#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbdmp/volume.hpp"

namespace dbdmp::io {

namespace fs = std::filesystem;

// Native case directory:
//   image.raw          float32 little-endian, x fastest
//   label_full.raw     uint8 (optional)
//   label_partial.raw  uint8 (optional)
//   meta.json          shape, spacing, origin, dtype, generation spec
struct CaseData {
    std::string case_id;
    Volume image;
    std::optional<LabelVolume> label_full;
    std::optional<LabelVolume> label_partial;
};

void write_case(const fs::path& dir, const CaseData& c,
                const std::string& spec_json = "");
CaseData read_case(const fs::path& dir);

// Stand-alone raw volume pair, used for predictions (pred_prob.raw etc.).
void write_raw_volume(const fs::path& dir, const std::string& stem, const Volume& v);
void write_raw_label(const fs::path& dir, const std::string& stem, const LabelVolume& v);
Volume read_raw_volume(const fs::path& dir, const std::string& stem);
LabelVolume read_raw_label(const fs::path& dir, const std::string& stem);

// dataset.json: case ids plus split membership
struct DatasetManifest {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};
void write_manifest(const fs::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const fs::path& path);

// Read-only ingestion of .nii / .nii.gz (NIfTI-1), intensities to float,
// geometry mapped into Volume fields.
Volume read_nifti(const fs::path& path);

}  // namespace dbdmp::io
