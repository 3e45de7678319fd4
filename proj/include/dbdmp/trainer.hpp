#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "dbdmp/checkpoint.hpp"
#include "dbdmp/config.hpp"
#include "dbdmp/io.hpp"

namespace dbdmp {

struct TrainCase {
    std::string id;
    Volume image;                        // padded to >= patch size
    std::optional<LabelVolume> partial;  // padded alongside
};

struct TrainDataset {
    std::vector<TrainCase> cases;
};

// Reads the manifest split and preprocesses for the stage: z-scoring for
// segmentation, raw intensities for pretraining (rescaled per patch).
TrainDataset load_train_dataset(const std::filesystem::path& data_dir, Stage stage,
                                const Shape3& patch_size, const std::string& split = "train");

struct IterationRecord {
    int epoch = 0;
    int iter = 0;
    double lr = 0;
    double lambda_p = 0;
    double sup_main = 0, sup_aux = 0;
    double pseudo_main = 0, pseudo_aux = 0;
    double recon = 0;
    double total = 0;
};

// One coordinator owns parameters and optimizer state for a full stage run.
class Trainer {
public:
    Trainer(const ExperimentConfig& cfg, std::filesystem::path out_dir);

    // Runs the configured stage to completion, resuming from the latest
    // checkpoint under out_dir when one exists. Returns the final checkpoint.
    Checkpoint run(const TrainDataset& ds);

    // Explicit resume entry point with a stage check.
    Checkpoint resume(const std::filesystem::path& checkpoint_path, const TrainDataset& ds);

    const std::vector<IterationRecord>& history() const { return history_; }
    const std::vector<double>& epoch_mean_loss() const { return epoch_mean_loss_; }
    NetF& net() { return *net_; }

private:
    void init_fresh();
    void train_to_end(const TrainDataset& ds);
    IterationRecord pretrain_iteration(const TrainDataset& ds, int epoch, int iter, double lr);
    IterationRecord segment_iteration(const TrainDataset& ds, int epoch, int iter, double lr);
    void sgd_step(double lr);
    void write_checkpoint(int epoch);
    void log_record(const IterationRecord& r);

    ExperimentConfig cfg_;
    std::filesystem::path out_dir_;
    std::unique_ptr<NetF> net_;
    Rng rng_;
    int start_epoch_ = 0;
    std::vector<IterationRecord> history_;
    std::vector<double> epoch_mean_loss_;
};

}  // namespace dbdmp
