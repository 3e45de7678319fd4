#include "dbdmp/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace dbdmp::report {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
    double lo = 0.0, hi = 1.0;
    void include(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span() const { return hi - lo > 1e-12 ? hi - lo : 1.0; }
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string svg_line_chart(const LineChart& c, int width, int height) {
    const double ml = 64, mr = 16, mt = 40, mb = 48;
    const double pw = width - ml - mr, ph = height - mt - mb;

    Range rx{1e300, -1e300}, ry{1e300, -1e300};
    bool any = false;
    for (const auto& s : c.series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            rx.include(s.xs[i]);
            ry.include(s.ys[i]);
            any = true;
        }
    if (!any) { rx = {0, 1}; ry = {0, 1}; }
    if (rx.hi - rx.lo < 1e-12) { rx.lo -= 0.5; rx.hi += 0.5; }
    if (ry.hi - ry.lo < 1e-12) { ry.lo -= 0.5; ry.hi += 0.5; }

    auto px = [&](double x) { return ml + (x - rx.lo) / rx.span() * pw; };
    auto py = [&](double y) { return mt + ph - (y - ry.lo) / ry.span() * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << esc(c.title) << "</text>\n";

    // grid + ticks
    for (int i = 0; i <= 4; ++i) {
        const double ty = ry.lo + ry.span() * i / 4.0;
        const double yy = py(ty);
        svg << "<line x1=\"" << ml << "\" y1=\"" << yy << "\" x2=\"" << ml + pw
            << "\" y2=\"" << yy << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << ml - 6 << "\" y=\"" << yy + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(ty) << "</text>\n";
        const double tx = rx.lo + rx.span() * i / 4.0;
        svg << "<text x=\"" << px(tx) << "\" y=\"" << mt + ph + 16
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(tx) << "</text>\n";
    }
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
        << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(c.x_label) << "</text>\n";
    svg << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << mt + ph / 2 << ")\">" << esc(c.y_label) << "</text>\n";

    for (size_t si = 0; si < c.series.size(); ++si) {
        const auto& s = c.series[si];
        const char* col = kPalette[si % 8];
        svg << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.6\" points=\"";
        for (size_t i = 0; i < s.xs.size(); ++i)
            svg << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
        svg << "\"/>\n";
        svg << "<text x=\"" << ml + pw - 6 << "\" y=\"" << mt + 16 + 16 * double(si)
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << col << "\">"
            << esc(s.name) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string svg_bar_chart(const BarChart& c, int width, int height) {
    const double ml = 64, mr = 16, mt = 40, mb = 56;
    const double pw = width - ml - mr, ph = height - mt - mb;
    Range ry{0.0, 1e-300};
    for (double v : c.values) ry.include(v);
    if (ry.hi <= 0) ry.hi = 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << esc(c.title) << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double ty = ry.hi * i / 4.0;
        const double yy = mt + ph - ty / ry.hi * ph;
        svg << "<line x1=\"" << ml << "\" y1=\"" << yy << "\" x2=\"" << ml + pw
            << "\" y2=\"" << yy << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << ml - 6 << "\" y=\"" << yy + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(ty) << "</text>\n";
    }
    const size_t n = c.values.size();
    const double slot = pw / double(std::max<size_t>(n, 1));
    for (size_t i = 0; i < n; ++i) {
        const double h = c.values[i] / ry.hi * ph;
        const double x = ml + slot * double(i) + slot * 0.15;
        svg << "<rect x=\"" << x << "\" y=\"" << mt + ph - h << "\" width=\"" << slot * 0.7
            << "\" height=\"" << h << "\" fill=\"" << kPalette[i % 8] << "\"/>\n";
        svg << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << mt + ph + 16
            << "\" text-anchor=\"middle\" font-size=\"11\">" << esc(c.labels[i]) << "</text>\n";
        svg << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << mt + ph - h - 4
            << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(c.values[i]) << "</text>\n";
    }
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\""
        << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << mt + ph / 2 << ")\">" << esc(c.y_label) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::vector<IterationRecord> read_metrics_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::vector<IterationRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        IterationRecord r;
        r.epoch = j.value("epoch", 0);
        r.iter = j.value("iter", 0);
        r.lr = j.value("lr", 0.0);
        r.lambda_p = j.value("lambda_p", 0.0);
        r.sup_main = j.value("sup_main", 0.0);
        r.sup_aux = j.value("sup_aux", 0.0);
        r.pseudo_main = j.value("pseudo_main", 0.0);
        r.pseudo_aux = j.value("pseudo_aux", 0.0);
        r.recon = j.value("recon", 0.0);
        r.total = j.value("total", 0.0);
        out.push_back(r);
    }
    return out;
}

void write_report(const std::filesystem::path& out_dir, const std::string& config_hash,
                  const std::vector<RunResult>& runs,
                  const std::vector<LineChart>& sweeps) {
    if (runs.empty()) throw std::invalid_argument("no results");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "plots");

    std::ostringstream md;
    md << "# Experiment report\n\nConfig hash: `" << config_hash << "`\n\n";
    md << "## Results\n\n| run | DSC mean | DSC std | ASSD mean (mm) | ASSD std | filled | cases |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : runs) {
        md << "| " << r.name << " | " << fmt(r.summary.dsc_mean) << " | "
           << fmt(r.summary.dsc_std) << " | ";
        if (r.summary.assd_mean)
            md << fmt(*r.summary.assd_mean) << " | " << fmt(*r.summary.assd_std);
        else
            md << "undefined | undefined";
        md << " | " << r.summary.fill_count << " | " << r.summary.case_count << " |\n";
    }

    BarChart dsc_bars{"Validation DSC by run", "DSC (%)", {}, {}};
    BarChart assd_bars{"Validation ASSD by run", "ASSD (mm)", {}, {}};
    for (const auto& r : runs) {
        dsc_bars.labels.push_back(r.name);
        dsc_bars.values.push_back(r.summary.dsc_mean);
        if (r.summary.assd_mean) {
            assd_bars.labels.push_back(r.name);
            assd_bars.values.push_back(*r.summary.assd_mean);
        }
    }
    { std::ofstream f(out_dir / "plots" / "dsc_bars.svg"); f << svg_bar_chart(dsc_bars); }
    md << "\n![DSC](plots/dsc_bars.svg)\n";
    if (!assd_bars.values.empty()) {
        std::ofstream f(out_dir / "plots" / "assd_bars.svg");
        f << svg_bar_chart(assd_bars);
        md << "\n![ASSD](plots/assd_bars.svg)\n";
    }

    md << "\n## Training loss\n";
    for (const auto& r : runs) {
        if (r.metrics_jsonl.empty() || !fs::exists(r.metrics_jsonl)) continue;
        auto recs = read_metrics_jsonl(r.metrics_jsonl);
        if (recs.empty()) continue;
        LineChart lc{"Loss: " + r.name, "iteration", "loss", {}};
        Series total{"total", {}, {}}, sup{"supervised", {}, {}}, pseudo{"pseudo", {}, {}};
        for (size_t i = 0; i < recs.size(); ++i) {
            const double x = double(i);
            total.xs.push_back(x);
            total.ys.push_back(recs[i].total);
            sup.xs.push_back(x);
            sup.ys.push_back(recs[i].sup_main + recs[i].sup_aux);
            pseudo.xs.push_back(x);
            pseudo.ys.push_back(recs[i].pseudo_main + recs[i].pseudo_aux);
        }
        lc.series = {total, sup, pseudo};
        const std::string fname = "loss_" + r.name + ".svg";
        std::ofstream f(out_dir / "plots" / fname);
        f << svg_line_chart(lc);
        md << "\n![loss " << r.name << "](plots/" << fname << ")\n";
    }

    if (!sweeps.empty()) {
        md << "\n## Hyper-parameter sweeps\n";
        int k = 0;
        for (const auto& sw : sweeps) {
            const std::string fname = "sweep_" + std::to_string(k++) + ".svg";
            std::ofstream f(out_dir / "plots" / fname);
            f << svg_line_chart(sw);
            md << "\n![" << sw.title << "](plots/" << fname << ")\n";
        }
    }

    std::ofstream f(out_dir / "report.md");
    f << md.str();
}

}  // namespace dbdmp::report
