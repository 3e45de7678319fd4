#include "dbdmp/config.hpp"

#include <fstream>
#include <json.hpp>

namespace dbdmp {

using nlohmann::json;

Ablation ablation_from_string(const std::string& s) {
    if (s == "baseline") return Ablation::Baseline;
    if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'g')
        return static_cast<Ablation>(int(Ablation::A) + (s[0] - 'a'));
    throw std::invalid_argument("unknown ablation preset: " + s);
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Baseline: return "baseline";
        case Ablation::Custom: return "custom";
        default: return std::string(1, char('a' + int(a) - int(Ablation::A)));
    }
}

void ExperimentConfig::validate() const {
    network.validate();
    loss.validate();
    train.validate();
    postprocess.validate();
    corruption.validate(train.patch_size);
    if (inference.step_fraction <= 0.0 || inference.step_fraction > 1.0)
        throw std::invalid_argument("step_fraction must be in (0,1]");
    if (inference.threshold <= 0.0 || inference.threshold >= 1.0)
        throw std::invalid_argument("threshold must be in (0,1)");
    const int64_t div = int64_t(1) << (network.resolution_levels - 1);
    for (int64_t p : train.patch_size)
        if (p % div != 0)
            throw std::invalid_argument("patch_size must be divisible by 2^(levels-1)");
}

void ExperimentConfig::apply_ablation(Ablation a) {
    network.dual_branch = a != Ablation::Baseline;
    sup_mask = SupervisedMask{false, false, false, false};
    switch (a) {
        case Ablation::Baseline:
            sup_mask.ce = true;
            pseudo_mode = PseudoMode::None;
            train.init_checkpoint.clear();
            break;
        case Ablation::A:
            sup_mask.ce = true;
            pseudo_mode = PseudoMode::Dice;
            train.init_checkpoint.clear();
            break;
        case Ablation::B:
            sup_mask.ce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::Dice;
            train.init_checkpoint.clear();
            break;
        case Ablation::C:
            sup_mask.ce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::KlCe;
            train.init_checkpoint.clear();
            break;
        case Ablation::D:
            sup_mask.sce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::KlCe;
            train.init_checkpoint.clear();
            break;
        case Ablation::E:
            sup_mask.pce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::KlCe;
            train.init_checkpoint.clear();
            break;
        case Ablation::F:
            sup_mask.pce = sup_mask.sce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::KlCe;
            train.init_checkpoint.clear();
            break;
        case Ablation::G:
            // same losses as (f) plus restoration-pretrained initialization,
            // which the caller wires via train.init_checkpoint
            sup_mask.pce = sup_mask.sce = sup_mask.tversky = true;
            pseudo_mode = PseudoMode::KlCe;
            break;
        case Ablation::Custom: break;
    }
}

static json shape_json(const Shape3& s) { return json{s[0], s[1], s[2]}; }
static Shape3 shape_from(const json& j) {
    return Shape3{j.at(0).get<int64_t>(), j.at(1).get<int64_t>(), j.at(2).get<int64_t>()};
}
static json spacing_json(const Spacing3& s) { return json{s[0], s[1], s[2]}; }
static Spacing3 spacing_from(const json& j) {
    return Spacing3{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["experiment_id"] = experiment_id;
    j["network"] = {
        {"in_channels", network.in_channels},
        {"class_count", network.class_count},
        {"resolution_levels", network.resolution_levels},
        {"base_features", network.base_features},
        {"max_features", network.max_features},
        {"dropout_rate", network.dropout_rate},
        {"head_mode", network.head_mode == HeadMode::Segmentation ? "segmentation"
                                                                  : "reconstruction"},
        {"aux_dropout_scope", network.aux_dropout_scope == AuxDropoutScope::Both
                                  ? "both"
                                  : (network.aux_dropout_scope == AuxDropoutScope::Skips
                                         ? "skips"
                                         : "bottleneck")},
        {"dual_branch", network.dual_branch}};
    j["loss"] = {{"gamma", loss.gamma},
                 {"alpha", loss.alpha},
                 {"tau", loss.tau},
                 {"lambda", loss.lambda},
                 {"t_max", loss.t_max},
                 {"eps_prob", loss.eps_prob},
                 {"eps_smooth", loss.eps_smooth},
                 {"rce_log_zero", loss.rce_log_zero}};
    j["corruption"] = {{"p_nonlinear", corruption.p_nonlinear},
                       {"p_shuffle", corruption.p_shuffle},
                       {"p_paint", corruption.p_paint},
                       {"p_inpaint_given_paint", corruption.p_inpaint_given_paint},
                       {"shuffle_window_max", shape_json(corruption.shuffle_window_max)},
                       {"shuffle_repeats", corruption.shuffle_repeats},
                       {"paint_block_count_min", corruption.paint_block_count_min},
                       {"paint_block_count_max", corruption.paint_block_count_max},
                       {"paint_block_frac",
                        {corruption.paint_block_frac[0], corruption.paint_block_frac[1]}}};
    j["train"] = {{"stage", train.stage == Stage::Pretrain ? "pretrain" : "segment"},
                  {"epochs", train.epochs},
                  {"iterations_per_epoch", train.iterations_per_epoch},
                  {"batch_size", train.batch_size},
                  {"patch_size", shape_json(train.patch_size)},
                  {"initial_lr", train.initial_lr},
                  {"momentum", train.momentum},
                  {"weight_decay", train.weight_decay},
                  {"poly_lr_exponent", train.poly_lr_exponent},
                  {"oversample_fg", train.oversample_fg},
                  {"seed", train.seed},
                  {"checkpoint_every", train.checkpoint_every},
                  {"init_checkpoint", train.init_checkpoint}};
    j["inference"] = {{"step_fraction", inference.step_fraction},
                      {"gaussian_weighting", inference.gaussian_weighting},
                      {"threshold", inference.threshold}};
    j["postprocess"] = {{"remove_border_components", postprocess.remove_border_components},
                        {"min_volume_mm3", postprocess.min_volume_mm3},
                        {"intensity_window_enabled", postprocess.intensity_window_enabled},
                        {"intensity_low", postprocess.intensity_low},
                        {"intensity_high", postprocess.intensity_high}};
    j["losses_enabled"] = {{"ce", sup_mask.ce},
                           {"sce", sup_mask.sce},
                           {"pce", sup_mask.pce},
                           {"tversky", sup_mask.tversky}};
    j["pseudo_mode"] = pseudo_mode == PseudoMode::None
                           ? "none"
                           : (pseudo_mode == PseudoMode::KlCe ? "klce" : "dice");
    j["sharpen_mode"] = sharpen_mode == SharpenMode::Exponential ? "exponential" : "power";
    j["synthetic"] = {{"shape", shape_json(synthetic.shape)},
                      {"spacing", spacing_json(synthetic.spacing)},
                      {"min_instances", synthetic.min_instances},
                      {"max_instances", synthetic.max_instances},
                      {"min_radius_mm", synthetic.min_radius_mm},
                      {"max_radius_mm", synthetic.max_radius_mm},
                      {"fg_intensity", synthetic.fg_intensity},
                      {"bg_intensity", synthetic.bg_intensity},
                      {"noise_sigma", synthetic.noise_sigma},
                      {"texture_sigma", synthetic.texture_sigma},
                      {"annotated_fraction", synthetic.annotated_fraction},
                      {"largest_first", synthetic.largest_first},
                      {"max_placement_attempts", synthetic.max_placement_attempts}};
    return j.dump(2);
}

template <typename T>
static void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig c;
    get_to(j, "experiment_id", c.experiment_id);
    if (j.contains("network")) {
        const json& n = j["network"];
        get_to(n, "in_channels", c.network.in_channels);
        get_to(n, "class_count", c.network.class_count);
        get_to(n, "resolution_levels", c.network.resolution_levels);
        get_to(n, "base_features", c.network.base_features);
        get_to(n, "max_features", c.network.max_features);
        get_to(n, "dropout_rate", c.network.dropout_rate);
        get_to(n, "dual_branch", c.network.dual_branch);
        if (n.contains("head_mode"))
            c.network.head_mode = n["head_mode"] == "reconstruction" ? HeadMode::Reconstruction
                                                                     : HeadMode::Segmentation;
        if (n.contains("aux_dropout_scope")) {
            std::string s = n["aux_dropout_scope"];
            c.network.aux_dropout_scope = s == "skips" ? AuxDropoutScope::Skips
                                          : s == "bottleneck" ? AuxDropoutScope::Bottleneck
                                                              : AuxDropoutScope::Both;
        }
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        get_to(l, "gamma", c.loss.gamma);
        get_to(l, "alpha", c.loss.alpha);
        get_to(l, "tau", c.loss.tau);
        get_to(l, "lambda", c.loss.lambda);
        get_to(l, "t_max", c.loss.t_max);
        get_to(l, "eps_prob", c.loss.eps_prob);
        get_to(l, "eps_smooth", c.loss.eps_smooth);
        get_to(l, "rce_log_zero", c.loss.rce_log_zero);
    }
    if (j.contains("corruption")) {
        const json& k = j["corruption"];
        get_to(k, "p_nonlinear", c.corruption.p_nonlinear);
        get_to(k, "p_shuffle", c.corruption.p_shuffle);
        get_to(k, "p_paint", c.corruption.p_paint);
        get_to(k, "p_inpaint_given_paint", c.corruption.p_inpaint_given_paint);
        if (k.contains("shuffle_window_max"))
            c.corruption.shuffle_window_max = shape_from(k["shuffle_window_max"]);
        get_to(k, "shuffle_repeats", c.corruption.shuffle_repeats);
        get_to(k, "paint_block_count_min", c.corruption.paint_block_count_min);
        get_to(k, "paint_block_count_max", c.corruption.paint_block_count_max);
        if (k.contains("paint_block_frac")) {
            c.corruption.paint_block_frac[0] = k["paint_block_frac"].at(0).get<double>();
            c.corruption.paint_block_frac[1] = k["paint_block_frac"].at(1).get<double>();
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        if (t.contains("stage"))
            c.train.stage = t["stage"] == "pretrain" ? Stage::Pretrain : Stage::Segment;
        get_to(t, "epochs", c.train.epochs);
        get_to(t, "iterations_per_epoch", c.train.iterations_per_epoch);
        get_to(t, "batch_size", c.train.batch_size);
        if (t.contains("patch_size")) c.train.patch_size = shape_from(t["patch_size"]);
        get_to(t, "initial_lr", c.train.initial_lr);
        get_to(t, "momentum", c.train.momentum);
        get_to(t, "weight_decay", c.train.weight_decay);
        get_to(t, "poly_lr_exponent", c.train.poly_lr_exponent);
        get_to(t, "oversample_fg", c.train.oversample_fg);
        get_to(t, "seed", c.train.seed);
        get_to(t, "checkpoint_every", c.train.checkpoint_every);
        get_to(t, "init_checkpoint", c.train.init_checkpoint);
    }
    if (j.contains("inference")) {
        const json& i = j["inference"];
        get_to(i, "step_fraction", c.inference.step_fraction);
        get_to(i, "gaussian_weighting", c.inference.gaussian_weighting);
        get_to(i, "threshold", c.inference.threshold);
    }
    if (j.contains("postprocess")) {
        const json& p = j["postprocess"];
        get_to(p, "remove_border_components", c.postprocess.remove_border_components);
        get_to(p, "min_volume_mm3", c.postprocess.min_volume_mm3);
        get_to(p, "intensity_window_enabled", c.postprocess.intensity_window_enabled);
        get_to(p, "intensity_low", c.postprocess.intensity_low);
        get_to(p, "intensity_high", c.postprocess.intensity_high);
    }
    if (j.contains("losses_enabled")) {
        const json& m = j["losses_enabled"];
        get_to(m, "ce", c.sup_mask.ce);
        get_to(m, "sce", c.sup_mask.sce);
        get_to(m, "pce", c.sup_mask.pce);
        get_to(m, "tversky", c.sup_mask.tversky);
    }
    if (j.contains("pseudo_mode")) {
        std::string s = j["pseudo_mode"];
        c.pseudo_mode =
            s == "none" ? PseudoMode::None : (s == "dice" ? PseudoMode::Dice : PseudoMode::KlCe);
    }
    if (j.contains("sharpen_mode"))
        c.sharpen_mode =
            j["sharpen_mode"] == "power" ? SharpenMode::Power : SharpenMode::Exponential;
    if (j.contains("synthetic")) {
        const json& s = j["synthetic"];
        if (s.contains("shape")) c.synthetic.shape = shape_from(s["shape"]);
        if (s.contains("spacing")) c.synthetic.spacing = spacing_from(s["spacing"]);
        get_to(s, "min_instances", c.synthetic.min_instances);
        get_to(s, "max_instances", c.synthetic.max_instances);
        get_to(s, "min_radius_mm", c.synthetic.min_radius_mm);
        get_to(s, "max_radius_mm", c.synthetic.max_radius_mm);
        get_to(s, "fg_intensity", c.synthetic.fg_intensity);
        get_to(s, "bg_intensity", c.synthetic.bg_intensity);
        get_to(s, "noise_sigma", c.synthetic.noise_sigma);
        get_to(s, "texture_sigma", c.synthetic.texture_sigma);
        get_to(s, "annotated_fraction", c.synthetic.annotated_fraction);
        get_to(s, "largest_first", c.synthetic.largest_first);
        get_to(s, "max_placement_attempts", c.synthetic.max_placement_attempts);
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config: " + path.string());
    f << to_json() << "\n";
}

std::string ExperimentConfig::hash() const {
    // FNV-1a 64
    uint64_t h = 1469598103934665603ull;
    for (char ch : to_json()) {
        h ^= static_cast<uint8_t>(ch);
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig ExperimentConfig::paper_profile(Stage stage) {
    ExperimentConfig c;
    c.experiment_id = stage == Stage::Pretrain ? "paper-pretrain" : "paper-segment";
    c.train.stage = stage;
    c.train.patch_size = {224, 128, 64};
    c.train.batch_size = 2;
    c.train.iterations_per_epoch = 250;
    c.train.initial_lr = 0.01;
    c.train.weight_decay = 3e-5;
    if (stage == Stage::Pretrain) {
        c.train.epochs = 1000;
        c.train.momentum = 0.99;
        c.network.head_mode = HeadMode::Reconstruction;
    } else {
        c.train.epochs = 300;
        c.train.momentum = 0.9;
        c.network.head_mode = HeadMode::Segmentation;
    }
    return c;
}

ExperimentConfig ExperimentConfig::toy_profile(Stage stage) {
    ExperimentConfig c = paper_profile(stage);
    c.experiment_id = stage == Stage::Pretrain ? "toy-pretrain" : "toy-segment";
    c.network.resolution_levels = 2;
    c.network.base_features = 8;
    c.train.patch_size = {32, 32, 16};
    c.train.epochs = 20;
    c.train.iterations_per_epoch = 20;
    c.loss.t_max = 9;  // ramp-up horizon scaled with the epoch budget
    c.corruption.shuffle_window_max = {6, 6, 4};
    c.corruption.shuffle_repeats = 200;
    c.synthetic.shape = {48, 48, 32};
    c.synthetic.spacing = {1.0, 1.0, 1.0};
    return c;
}

}  // namespace dbdmp
