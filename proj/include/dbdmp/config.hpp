#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dbdmp/corruption.hpp"
#include "dbdmp/losses.hpp"
#include "dbdmp/network.hpp"
#include "dbdmp/pseudolabel.hpp"
#include "dbdmp/volume.hpp"

namespace dbdmp {

enum class Stage { Pretrain, Segment };

struct TrainConfig {
    Stage stage = Stage::Segment;
    int epochs = 300;               // pretrain default is 1000
    int iterations_per_epoch = 250;
    int batch_size = 2;
    Shape3 patch_size{224, 128, 64};
    double initial_lr = 0.01;
    double momentum = 0.9;          // pretrain uses 0.99
    double weight_decay = 3e-5;
    double poly_lr_exponent = 0.9;
    double oversample_fg = 0.5;
    uint64_t seed = 0;
    int checkpoint_every = 0;       // 0: only at the end
    std::string init_checkpoint;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (iterations_per_epoch < 1)
            throw std::invalid_argument("iterations_per_epoch must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be > 0");
        if (oversample_fg < 0.0 || oversample_fg > 1.0)
            throw std::invalid_argument("oversample_fg must be in [0,1]");
        for (int64_t p : patch_size)
            if (p < 4) throw std::invalid_argument("patch_size too small");
    }

    double lr_at_epoch(int epoch) const {
        return initial_lr * std::pow(1.0 - double(epoch) / double(epochs), poly_lr_exponent);
    }
};

struct InferenceConfig {
    double step_fraction = 0.5;
    bool gaussian_weighting = true;
    double threshold = 0.5;
};

struct PostprocessConfig {
    bool remove_border_components = false;
    double min_volume_mm3 = 0.0;
    bool intensity_window_enabled = false;
    double intensity_low = 0.0;
    double intensity_high = 0.0;

    void validate() const {
        if (min_volume_mm3 < 0.0) throw std::invalid_argument("min_volume_mm3 must be >= 0");
        if (intensity_window_enabled && !(intensity_low < intensity_high))
            throw std::invalid_argument("intensity window low must be < high");
    }
};

// Table-style loss configurations, plus the single-decoder baseline.
enum class Ablation { Baseline, A, B, C, D, E, F, G, Custom };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct ExperimentConfig {
    std::string experiment_id = "default";
    NetworkConfig network;
    LossConfig loss;
    CorruptionConfig corruption;
    TrainConfig train;
    InferenceConfig inference;
    PostprocessConfig postprocess;
    SupervisedMask sup_mask;
    PseudoMode pseudo_mode = PseudoMode::KlCe;
    SharpenMode sharpen_mode = SharpenMode::Exponential;
    SyntheticSpec synthetic;

    void validate() const;
    void apply_ablation(Ablation a);

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // FNV-1a over the canonical serialization; embedded in reports.
    std::string hash() const;

    // Paper-scale knobs for the given stage.
    static ExperimentConfig paper_profile(Stage stage);
    // Desk-scale profile: patch 32x32x16, 2 levels, 8 base features,
    // 20 epochs x 20 iterations, every schedule scaled down.
    static ExperimentConfig toy_profile(Stage stage);
};

}  // namespace dbdmp
