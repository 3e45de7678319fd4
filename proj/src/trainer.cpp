#include "dbdmp/trainer.hpp"

#include <fstream>
#include <json.hpp>

#include "dbdmp/losses.hpp"
#include "dbdmp/pseudolabel.hpp"

namespace dbdmp {

namespace fs = std::filesystem;

TrainDataset load_train_dataset(const fs::path& data_dir, Stage stage, const Shape3& patch_size,
                                const std::string& split) {
    io::DatasetManifest m = io::read_manifest(data_dir / "dataset.json");
    const std::vector<std::string>* ids = &m.train;
    if (split == "val") ids = &m.val;
    if (split == "test") ids = &m.test;
    if (ids->empty()) throw std::runtime_error("dataset split '" + split + "' is empty");

    TrainDataset ds;
    for (const auto& id : *ids) {
        io::CaseData c = io::read_case(data_dir / id);
        TrainCase tc;
        tc.id = id;
        if (stage == Stage::Segment) {
            if (!c.label_partial)
                throw std::runtime_error("case " + id + " has no partial label");
            tc.image = pad_to(normalize(c.image).volume, patch_size);
            tc.partial = pad_to(*c.label_partial, patch_size);
        } else {
            tc.image = pad_to(c.image, patch_size);
        }
        ds.cases.push_back(std::move(tc));
    }
    return ds;
}

Trainer::Trainer(const ExperimentConfig& cfg, fs::path out_dir)
    : cfg_(cfg), out_dir_(std::move(out_dir)), rng_(cfg.train.seed) {
    cfg_.validate();
    if (cfg_.train.stage == Stage::Pretrain &&
        cfg_.network.head_mode != HeadMode::Reconstruction)
        throw std::invalid_argument("pretrain stage requires the reconstruction head");
    if (cfg_.train.stage == Stage::Segment &&
        cfg_.network.head_mode != HeadMode::Segmentation)
        throw std::invalid_argument("segment stage requires the segmentation head");
    net_ = std::make_unique<NetF>(cfg_.network);
    fs::create_directories(out_dir_ / "checkpoints");
}

void Trainer::init_fresh() {
    Rng init_rng(cfg_.train.seed ^ 0x9e3779b97f4a7c15ull);
    net_->init(init_rng);
    if (!cfg_.train.init_checkpoint.empty()) {
        if (cfg_.train.stage != Stage::Segment)
            throw std::invalid_argument("init_checkpoint only applies to the segment stage");
        Checkpoint ck = load_checkpoint(cfg_.train.init_checkpoint);
        if (ck.stage != Stage::Pretrain)
            throw std::runtime_error("init_checkpoint must come from the pretrain stage");
        load_trunk(*net_, ck);  // heads stay freshly initialized
    }
    start_epoch_ = 0;
}

Checkpoint Trainer::run(const TrainDataset& ds) {
    const fs::path latest = out_dir_ / "checkpoints" / "latest";
    if (fs::exists(latest)) {
        std::ifstream lf(latest);
        std::string name;
        std::getline(lf, name);
        return resume(out_dir_ / "checkpoints" / name, ds);
    }
    init_fresh();
    train_to_end(ds);
    return snapshot(*net_, cfg_, cfg_.train.epochs, rng_.serialize());
}

Checkpoint Trainer::resume(const fs::path& checkpoint_path, const TrainDataset& ds) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.stage != cfg_.train.stage)
        throw std::runtime_error("resume stage mismatch: checkpoint stage differs from config");
    restore_into(*net_, ck, /*restore_optimizer=*/true);
    rng_.deserialize(ck.rng_state);
    start_epoch_ = ck.epoch;
    if (start_epoch_ >= cfg_.train.epochs)  // final checkpoint: nothing to do
        return ck;
    train_to_end(ds);
    return snapshot(*net_, cfg_, cfg_.train.epochs, rng_.serialize());
}

void Trainer::train_to_end(const TrainDataset& ds) {
    if (ds.cases.empty()) throw std::runtime_error("training dataset is empty");
    for (int epoch = start_epoch_; epoch < cfg_.train.epochs; ++epoch) {
        const double lr = cfg_.train.lr_at_epoch(epoch);
        double epoch_sum = 0.0;
        for (int iter = 0; iter < cfg_.train.iterations_per_epoch; ++iter) {
            IterationRecord r = cfg_.train.stage == Stage::Pretrain
                                    ? pretrain_iteration(ds, epoch, iter, lr)
                                    : segment_iteration(ds, epoch, iter, lr);
            epoch_sum += r.total;
            log_record(r);
        }
        epoch_mean_loss_.push_back(epoch_sum / cfg_.train.iterations_per_epoch);
        const bool cadence = cfg_.train.checkpoint_every > 0 &&
                             (epoch + 1) % cfg_.train.checkpoint_every == 0;
        if (cadence || epoch + 1 == cfg_.train.epochs) write_checkpoint(epoch + 1);
    }
}

static Tensor stack_batch(const std::vector<std::vector<float>>& patches, const Shape3& ps) {
    const int64_t B = int64_t(patches.size());
    const int64_t n = numel(ps);
    Tensor x({B, 1, ps[0], ps[1], ps[2]});
    for (int64_t b = 0; b < B; ++b)
        std::copy(patches[size_t(b)].begin(), patches[size_t(b)].end(), x.ptr() + b * n);
    return x;
}

IterationRecord Trainer::pretrain_iteration(const TrainDataset& ds, int epoch, int iter,
                                            double lr) {
    const Shape3& ps = cfg_.train.patch_size;
    const int64_t n = numel(ps);
    const int B = cfg_.train.batch_size;
    std::vector<std::vector<float>> corrupted, clean;
    for (int b = 0; b < B; ++b) {
        const TrainCase& tc =
            ds.cases[size_t(rng_.uniform_int(0, int64_t(ds.cases.size()) - 1))];
        Patch p = sample_patch(tc.image, nullptr, rng_, ps, 0.0);
        rescale_unit(p.image);
        CorruptionPair pair = random_compose(p.image, ps, rng_, cfg_.corruption);
        // z-score the network input so the trunk sees the same intensity
        // distribution during restoration as during segmentation; the
        // restoration target stays in [0,1]
        double mean = 0.0;
        for (float v : pair.corrupted) mean += v;
        mean /= double(pair.corrupted.size());
        double var = 0.0;
        for (float v : pair.corrupted) var += (v - mean) * (v - mean);
        const double sd = std::max(std::sqrt(var / double(pair.corrupted.size())), 1e-8);
        for (float& v : pair.corrupted) v = float((v - mean) / sd);
        corrupted.push_back(std::move(pair.corrupted));
        clean.push_back(std::move(pair.clean));
    }
    Tensor x = stack_batch(corrupted, ps);
    Tensor target = stack_batch(clean, ps);

    net_->zero_grad();
    auto out = net_->forward(x, /*train=*/true, rng_);
    Tensor g_main(out.main.shape), g_aux(out.aux.shape);
    const float loss = mse_reconstruction<float>(
        {out.main.ptr(), size_t(out.main.numel())}, {out.aux.ptr(), size_t(out.aux.numel())},
        {target.ptr(), size_t(target.numel())}, {g_main.ptr(), size_t(g_main.numel())},
        {g_aux.ptr(), size_t(g_aux.numel())});
    net_->backward(g_main, g_aux);
    sgd_step(lr);

    IterationRecord r;
    r.epoch = epoch;
    r.iter = iter;
    r.lr = lr;
    r.recon = loss;
    r.total = loss;
    (void)n;
    return r;
}

IterationRecord Trainer::segment_iteration(const TrainDataset& ds, int epoch, int iter,
                                           double lr) {
    const Shape3& ps = cfg_.train.patch_size;
    const size_t n = size_t(numel(ps));
    const int B = cfg_.train.batch_size;

    std::vector<std::vector<float>> images;
    std::vector<std::vector<uint8_t>> labels;
    for (int b = 0; b < B; ++b) {
        const TrainCase& tc =
            ds.cases[size_t(rng_.uniform_int(0, int64_t(ds.cases.size()) - 1))];
        Patch p = sample_patch(tc.image, &*tc.partial, rng_, ps, cfg_.train.oversample_fg);
        images.push_back(std::move(p.image));
        labels.push_back(std::move(p.label));
    }
    Tensor x = stack_batch(images, ps);

    net_->zero_grad();
    auto out = net_->forward(x, /*train=*/true, rng_);
    const bool dual = cfg_.network.dual_branch;
    Tensor g_main(out.main.shape);
    Tensor g_aux(dual ? out.aux.shape : std::vector<int64_t>{0});

    // one mixing draw per iteration, shared across the batch
    const double theta = dual && cfg_.pseudo_mode != PseudoMode::None ? rng_.uniform() : 0.0;

    IterationRecord r;
    r.epoch = epoch;
    r.iter = iter;
    r.lr = lr;
    r.lambda_p = ramp_up(epoch, cfg_.loss);

    for (int b = 0; b < B; ++b) {
        std::span<const float> pm{out.main.ptr() + int64_t(b) * 2 * int64_t(n), 2 * n};
        std::span<float> gm{g_main.ptr() + int64_t(b) * 2 * int64_t(n), 2 * n};
        std::span<const uint8_t> y{labels[size_t(b)].data(), n};
        if (!dual) {
            r.sup_main += supervised_loss<float>(pm, y, cfg_.loss, cfg_.sup_mask, gm);
            continue;
        }
        std::span<const float> pa{out.aux.ptr() + int64_t(b) * 2 * int64_t(n), 2 * n};
        std::span<float> ga{g_aux.ptr() + int64_t(b) * 2 * int64_t(n), 2 * n};

        std::vector<float> y_hat;
        if (cfg_.pseudo_mode != PseudoMode::None) {
            std::vector<float> y_mix(2 * n), y_sharp(2 * n);
            y_hat.resize(2 * n);
            mix<float>(pm, pa, theta, y_mix);
            sharpen<float>(y_mix, cfg_.loss.tau, 2, n, y_sharp, cfg_.sharpen_mode);
            fuse<float>(y_sharp, y, y_hat);
        }
        TotalLossBreakdown tb = total_loss<float>(pm, pa, y, y_hat, epoch, cfg_.loss,
                                                  cfg_.sup_mask, cfg_.pseudo_mode, gm, ga);
        r.sup_main += tb.sup_main;
        r.sup_aux += tb.sup_aux;
        r.pseudo_main += tb.pseudo_main;
        r.pseudo_aux += tb.pseudo_aux;
    }
    // batch mean
    const double inv_b = 1.0 / B;
    r.sup_main *= inv_b;
    r.sup_aux *= inv_b;
    r.pseudo_main *= inv_b;
    r.pseudo_aux *= inv_b;
    for (auto& g : g_main.data) g = float(g * inv_b);
    for (auto& g : g_aux.data) g = float(g * inv_b);
    r.total = r.sup_main + r.sup_aux + r.lambda_p * (r.pseudo_main + r.pseudo_aux);

    net_->backward(g_main, g_aux);
    sgd_step(lr);
    return r;
}

void Trainer::sgd_step(double lr) {
    const float m = float(cfg_.train.momentum);
    const float wd = float(cfg_.train.weight_decay);
    for (auto* p : net_->params()) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            float g = p->grad[i] + wd * p->value[i];
            p->momentum[i] = m * p->momentum[i] + g;
            p->value[i] -= float(lr) * p->momentum[i];
        }
    }
}

void Trainer::write_checkpoint(int epoch) {
    Checkpoint ck = snapshot(*net_, cfg_, epoch, rng_.serialize());
    const std::string name = "ckpt_epoch_" + std::to_string(epoch) + ".bin";
    save_checkpoint(out_dir_ / "checkpoints" / name, ck);
    std::ofstream latest(out_dir_ / "checkpoints" / "latest");
    latest << name << "\n";
}

void Trainer::log_record(const IterationRecord& r) {
    history_.push_back(r);
    nlohmann::json j{{"epoch", r.epoch},       {"iter", r.iter},
                     {"lr", r.lr},             {"lambda_p", r.lambda_p},
                     {"sup_main", r.sup_main}, {"sup_aux", r.sup_aux},
                     {"pseudo_main", r.pseudo_main}, {"pseudo_aux", r.pseudo_aux},
                     {"recon", r.recon},       {"total", r.total}};
    std::ofstream f(out_dir_ / "metrics.jsonl", std::ios::app);
    f << j.dump() << "\n";
}

}  // namespace dbdmp
