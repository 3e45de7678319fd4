// dbdmp: data generation, two-stage training, inference, evaluation, reports.
#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "dbdmp/inference.hpp"
#include "dbdmp/io.hpp"
#include "dbdmp/metrics.hpp"
#include "dbdmp/report.hpp"
#include "dbdmp/trainer.hpp"

namespace fs = std::filesystem;
using namespace dbdmp;

namespace {

fs::path resolve_data(const std::string& p) {
    const char* root = std::getenv("DBDMP_DATA_ROOT");
    fs::path path(p);
    if (root && path.is_relative()) return fs::path(root) / path;
    return path;
}

ExperimentConfig load_config(const std::string& path, const std::string& ablation) {
    ExperimentConfig cfg = ExperimentConfig::load(path);
    if (!ablation.empty()) cfg.apply_ablation(ablation_from_string(ablation));
    cfg.validate();
    return cfg;
}

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 uint64_t seed, int n_train, int n_val, int n_test) {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig::toy_profile(Stage::Segment)
                                               : ExperimentConfig::load(config_path);
    cfg.validate();
    const fs::path out_dir = resolve_data(out);
    fs::create_directories(out_dir);

    io::DatasetManifest m;
    uint64_t case_seed = seed;
    auto emit = [&](const std::string& prefix, int count, std::vector<std::string>& split) {
        for (int i = 0; i < count; ++i) {
            const std::string id = prefix + "_" + std::to_string(i);
            SyntheticCase sc = generate_synthetic_case(case_seed++, cfg.synthetic);
            io::CaseData c;
            c.case_id = id;
            c.image = std::move(sc.image);
            c.label_full = std::move(sc.label_full);
            c.label_partial = std::move(sc.label_partial);
            io::write_case(out_dir / id, c, cfg.to_json());
            split.push_back(id);
        }
    };
    emit("train", n_train, m.train);
    emit("val", n_val, m.val);
    emit("test", n_test, m.test);
    io::write_manifest(out_dir / "dataset.json", m);
    std::cout << "wrote " << n_train + n_val + n_test << " cases to " << out_dir.string()
              << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out, const std::string& init,
              const std::string& ablation, Stage stage) {
    ExperimentConfig cfg = load_config(config_path, ablation);
    if (cfg.train.stage != stage)
        throw std::runtime_error("config stage does not match command");
    if (!init.empty()) cfg.train.init_checkpoint = init;
    const fs::path data_dir = resolve_data(data);
    TrainDataset ds = load_train_dataset(data_dir, stage, cfg.train.patch_size);
    Trainer trainer(cfg, out);
    Checkpoint ck = trainer.run(ds);
    std::cout << "finished at epoch " << ck.epoch << "; checkpoints under " << out
              << "/checkpoints\n";
    return 0;
}

int cmd_predict(const std::string& config_path, const std::string& ckpt_path,
                const std::string& data, const std::string& split,
                const std::string& out) {
    ExperimentConfig cfg = load_config(config_path, "");
    if (cfg.network.head_mode != HeadMode::Segmentation)
        throw std::runtime_error("predict requires a segmentation config");
    Checkpoint ck = load_checkpoint(ckpt_path);
    // the checkpoint knows whether it holds one decoder or two; the config
    // passed here only steers patching, inference, and postprocessing
    NetF net(ck.config.network);
    restore_into(net, ck, /*restore_optimizer=*/false);

    const fs::path data_dir = resolve_data(data);
    io::DatasetManifest m = io::read_manifest(data_dir / "dataset.json");
    const std::vector<std::string>& ids =
        split == "train" ? m.train : split == "test" ? m.test : m.val;
    if (ids.empty()) throw std::runtime_error("dataset split '" + split + "' is empty");

    const fs::path out_dir = resolve_data(out);
    fs::create_directories(out_dir);
    for (const auto& id : ids) {
        io::CaseData c = io::read_case(data_dir / id);
        Volume prob = predict(c.image, net, cfg.train.patch_size, cfg.inference);
        LabelVolume pred =
            binarize_and_postprocess(prob, c.image, cfg.inference, cfg.postprocess);
        fs::create_directories(out_dir / id);
        io::write_raw_volume(out_dir / id, "pred_prob", prob);
        io::write_raw_label(out_dir / id, "pred_label", pred);
        std::cout << id << " done\n";
    }
    return 0;
}

int cmd_eval(const std::string& pred, const std::string& data, const std::string& split,
             const std::string& out, const std::string& config_path) {
    const fs::path pred_dir = resolve_data(pred);
    const fs::path data_dir = resolve_data(data);
    io::DatasetManifest m = io::read_manifest(data_dir / "dataset.json");
    const std::vector<std::string>& ids =
        split == "train" ? m.train : split == "test" ? m.test : m.val;
    if (ids.empty()) throw std::runtime_error("dataset split '" + split + "' is empty");

    std::vector<CaseResult> results;
    for (const auto& id : ids) {
        io::CaseData c = io::read_case(data_dir / id);
        if (!c.label_full) throw std::runtime_error("case " + id + " has no full label");
        LabelVolume p = io::read_raw_label(pred_dir / id, "pred_label");
        results.push_back(evaluate_case(id, p, *c.label_full));
    }
    MetricsSummary s = aggregate(results);

    const fs::path out_dir = resolve_data(out);
    fs::create_directories(out_dir);
    write_results_csv(out_dir / "results.csv", results);
    std::string hash;
    if (!config_path.empty()) hash = ExperimentConfig::load(config_path).hash();
    write_summary_json(out_dir / "summary.json", s, hash);
    std::cout << "dsc " << s.dsc_mean << " +- " << s.dsc_std;
    if (s.assd_mean) std::cout << "  assd " << *s.assd_mean << " +- " << *s.assd_std;
    std::cout << "  (" << s.case_count << " cases)\n";
    return 0;
}

report::RunResult parse_run_arg(const std::string& arg) {
    // name=summary.json[,metrics.jsonl]
    const auto eq = arg.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("run must be name=summary.json[,metrics.jsonl]");
    report::RunResult r;
    r.name = arg.substr(0, eq);
    std::string rest = arg.substr(eq + 1);
    const auto comma = rest.find(',');
    std::string summary_path = rest.substr(0, comma);
    if (comma != std::string::npos) r.metrics_jsonl = rest.substr(comma + 1);

    std::ifstream f(summary_path);
    if (!f) throw std::runtime_error("cannot read " + summary_path);
    nlohmann::json j = nlohmann::json::parse(f);
    r.summary.dsc_mean = j.value("dsc_mean", 0.0);
    r.summary.dsc_std = j.value("dsc_std", 0.0);
    if (j.contains("assd_mean")) {
        r.summary.assd_mean = j["assd_mean"].get<double>();
        r.summary.assd_std = j.value("assd_std", 0.0);
    }
    r.summary.fill_count = j.value("fill_count", 0);
    r.summary.case_count = j.value("case_count", 0);
    return r;
}

int cmd_report(const std::vector<std::string>& run_args, const std::string& out,
               const std::string& config_path) {
    if (run_args.empty()) throw std::runtime_error("no results");
    std::vector<report::RunResult> runs;
    for (const auto& a : run_args) runs.push_back(parse_run_arg(a));
    std::string hash = "unspecified";
    if (!config_path.empty()) hash = ExperimentConfig::load(config_path).hash();
    report::write_report(resolve_data(out), hash, runs);
    std::cout << "report written to " << out << "/report.md\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-branch partial-label segmentation pipeline"};
    app.require_subcommand(1);

    std::string config, data, out, init, ablation, ckpt, pred, split = "val";
    uint64_t seed = 0;
    int n_train = 40, n_val = 10, n_test = 0;
    std::vector<std::string> run_args;

    std::string profile = "toy", stage_name = "segment";
    auto* pf = app.add_subcommand("profile", "write a built-in config profile");
    pf->add_option("--name", profile, "toy|paper (default toy)");
    pf->add_option("--stage", stage_name, "segment|pretrain (default segment)");
    pf->add_option("--out", out, "config json path")->required();

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config, "experiment config json (synthetic block)");
    gen->add_option("--out", out, "output dataset directory")->required();
    gen->add_option("--seed", seed, "base seed");
    gen->add_option("--train", n_train, "train cases");
    gen->add_option("--val", n_val, "val cases");
    gen->add_option("--test", n_test, "test cases");

    auto* pre = app.add_subcommand("pretrain", "self-supervised restoration pretraining");
    pre->add_option("--config", config)->required();
    pre->add_option("--data", data)->required();
    pre->add_option("--out", out)->required();

    auto* tr = app.add_subcommand("train", "segmentation training");
    tr->add_option("--config", config)->required();
    tr->add_option("--data", data)->required();
    tr->add_option("--out", out)->required();
    tr->add_option("--init", init, "pretrain checkpoint for trunk initialization");
    tr->add_option("--ablation", ablation, "baseline or a..g");

    auto* pr = app.add_subcommand("predict", "sliding-window inference");
    pr->add_option("--config", config)->required();
    pr->add_option("--ckpt", ckpt)->required();
    pr->add_option("--data", data)->required();
    pr->add_option("--split", split, "train|val|test (default val)");
    pr->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("eval", "per-case metrics and summary");
    ev->add_option("--pred", pred)->required();
    ev->add_option("--data", data)->required();
    ev->add_option("--split", split, "train|val|test (default val)");
    ev->add_option("--out", out)->required();
    ev->add_option("--config", config, "config whose hash is embedded in summary.json");

    auto* rp = app.add_subcommand("report", "markdown report with plots");
    rp->add_option("--run", run_args, "name=summary.json[,metrics.jsonl] (repeatable)");
    rp->add_option("--out", out)->required();
    rp->add_option("--config", config, "config whose hash is embedded in the report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pf->parsed()) {
            const Stage st = stage_name == "pretrain" ? Stage::Pretrain : Stage::Segment;
            ExperimentConfig cfg = profile == "paper" ? ExperimentConfig::paper_profile(st)
                                                      : ExperimentConfig::toy_profile(st);
            cfg.save(out);
            std::cout << "wrote " << out << " (hash " << cfg.hash() << ")\n";
            return 0;
        }
        if (gen->parsed()) return cmd_gen_data(config, out, seed, n_train, n_val, n_test);
        if (pre->parsed()) return cmd_train(config, data, out, "", "", Stage::Pretrain);
        if (tr->parsed()) return cmd_train(config, data, out, init, ablation, Stage::Segment);
        if (pr->parsed()) return cmd_predict(config, ckpt, data, split, out);
        if (ev->parsed()) return cmd_eval(pred, data, split, out, config);
        if (rp->parsed()) return cmd_report(run_args, out, config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
