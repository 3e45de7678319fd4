#pragma once

#include <filesystem>
#include <string>

#include "dbdmp/config.hpp"
#include "dbdmp/network.hpp"

namespace dbdmp {

// Parameter blob + config + stage tag + epoch counter + optimizer and
// generator state. A checkpoint.json sidecar records provenance.
struct Checkpoint {
    ExperimentConfig config;
    Stage stage = Stage::Segment;
    int epoch = 0;  // epochs completed
    std::string rng_state;
    // parallel arrays, one entry per parameter
    std::vector<std::string> names;
    std::vector<std::vector<int64_t>> shapes;
    std::vector<std::vector<float>> values;
    std::vector<std::vector<float>> momenta;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(NetF& net, const ExperimentConfig& cfg, int epoch,
                    const std::string& rng_state);

// Restores parameters (and momenta when restore_optimizer) into `net`.
// Throws with a field diff when the trunk configuration does not match.
void restore_into(NetF& net, const Checkpoint& ck, bool restore_optimizer);

// Stage-transfer load: copies every trunk parameter by name, leaves the
// heads at their fresh initialization.
void load_trunk(NetF& net, const Checkpoint& ck);

}  // namespace dbdmp
