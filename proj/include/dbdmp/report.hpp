#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dbdmp/metrics.hpp"
#include "dbdmp/trainer.hpp"

namespace dbdmp::report {

struct Series {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
};

struct LineChart {
    std::string title, x_label, y_label;
    std::vector<Series> series;
};

struct BarChart {
    std::string title, y_label;
    std::vector<std::string> labels;
    std::vector<double> values;
};

std::string svg_line_chart(const LineChart& c, int width = 720, int height = 420);
std::string svg_bar_chart(const BarChart& c, int width = 720, int height = 420);

std::vector<IterationRecord> read_metrics_jsonl(const std::filesystem::path& path);

struct RunResult {
    std::string name;  // e.g. "baseline", "a", ..., "g"
    MetricsSummary summary;
    std::filesystem::path metrics_jsonl;  // optional; empty to skip loss curve
};

// Writes report.md plus plots/*.svg under out_dir: per-run loss curves,
// DSC/ASSD bars across runs, and sweep curves when provided.
void write_report(const std::filesystem::path& out_dir, const std::string& config_hash,
                  const std::vector<RunResult>& runs,
                  const std::vector<LineChart>& sweeps = {});

}  // namespace dbdmp::report
