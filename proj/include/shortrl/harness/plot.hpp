// SPDX-License-Identifier: Apache-2.0
#pragma once

// Standalone SVG charts for run and sweep directories. Output depends only on
// the input numbers (fixed two-decimal coordinates), so identical inputs give
// byte-identical files.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shortrl/harness/format.hpp"
#include "shortrl/harness/runs.hpp"

namespace shortrl::harness {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Series {
    std::string name;
    std::vector<Point> points;
};

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;
};

inline constexpr std::array<const char*, 8> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22"};

inline constexpr const char* kClosedColor = "#d62728";

namespace svg {

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '&': o += "&amp;"; break;
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

class Chart {
public:
    static constexpr double kWidth = 720;
    static constexpr double kHeight = 420;
    static constexpr double kLeft = 70;
    static constexpr double kRight = 170;
    static constexpr double kTop = 40;
    static constexpr double kBottom = 55;

    Chart(AxisRange x, AxisRange y) : x_(widen(x)), y_(widen(y)) {}

    [[nodiscard]] double px(double x) const {
        return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight);
    }
    [[nodiscard]] double py(double y) const {
        return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
    }

    std::string frame(const std::string& title, const std::string& xlabel,
                      const std::string& ylabel) const {
        std::ostringstream o;
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
          << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
          << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
          << "<text x=\"" << format_fixed(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" "
             "font-family=\"sans-serif\" font-size=\"15\">" << escape(title) << "</text>\n";
        const double x0 = px(x_.lo), x1 = px(x_.hi), y0 = py(y_.lo), y1 = py(y_.hi);
        o << "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n"
          << "<line x1=\"" << format_fixed(x0) << "\" y1=\"" << format_fixed(y0) << "\" x2=\""
          << format_fixed(x1) << "\" y2=\"" << format_fixed(y0) << "\"/>\n"
          << "<line x1=\"" << format_fixed(x0) << "\" y1=\"" << format_fixed(y0) << "\" x2=\""
          << format_fixed(x0) << "\" y2=\"" << format_fixed(y1) << "\"/>\n</g>\n";
        o << "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
        for (int i = 0; i <= 5; ++i) {
            const double xv = x_.lo + (x_.hi - x_.lo) * i / 5.0;
            const double yv = y_.lo + (y_.hi - y_.lo) * i / 5.0;
            o << "<text x=\"" << format_fixed(px(xv)) << "\" y=\"" << format_fixed(y0 + 16)
              << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n"
              << "<text x=\"" << format_fixed(x0 - 6) << "\" y=\"" << format_fixed(py(yv) + 4)
              << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
        }
        o << "</g>\n"
          << "<text class=\"xlabel\" x=\"" << format_fixed((x0 + x1) / 2) << "\" y=\""
          << format_fixed(kHeight - 14) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"13\">" << escape(xlabel) << "</text>\n"
          << "<text class=\"ylabel\" x=\"18\" y=\"" << format_fixed((y0 + y1) / 2)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
             "transform=\"rotate(-90 18 " << format_fixed((y0 + y1) / 2) << ")\">" << escape(ylabel)
          << "</text>\n";
        return o.str();
    }

    std::string polyline(const std::vector<Point>& pts, const char* color,
                         const char* extra = "") const {
        std::ostringstream o;
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << extra
          << " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            o << (i ? " " : "") << format_fixed(px(pts[i].x)) << ',' << format_fixed(py(pts[i].y));
        }
        o << "\"/>\n";
        return o.str();
    }

    std::string marker(const Point& p, const char* color) const {
        return "<circle cx=\"" + format_fixed(px(p.x)) + "\" cy=\"" + format_fixed(py(p.y)) +
               "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }

    static std::string legend(const std::vector<std::pair<std::string, std::string>>& entries,
                              const std::vector<std::string>& dashed = {}) {
        std::ostringstream o;
        o << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
        double y = kTop + 10;
        const double x = kWidth - kRight + 20;
        for (const auto& [label, color] : entries) {
            const bool dash = std::find(dashed.begin(), dashed.end(), label) != dashed.end();
            o << "<line x1=\"" << format_fixed(x) << "\" y1=\"" << format_fixed(y) << "\" x2=\""
              << format_fixed(x + 22) << "\" y2=\"" << format_fixed(y) << "\" stroke=\"" << color
              << "\" stroke-width=\"2\"" << (dash ? " stroke-dasharray=\"4 3\"" : "") << "/>\n"
              << "<text x=\"" << format_fixed(x + 28) << "\" y=\"" << format_fixed(y + 4) << "\">"
              << escape(label) << "</text>\n";
            y += 18;
        }
        o << "</g>\n";
        return o.str();
    }

private:
    static AxisRange widen(AxisRange r) {
        if (!(r.hi > r.lo)) {
            const double pad = std::max(1.0, std::abs(r.lo) * 0.1);
            return {r.lo - pad, r.lo + pad};
        }
        return r;
    }

    static std::string tick(double v) {
        return format_fixed(v, std::abs(v) >= 100 ? 0 : 2);
    }

    AxisRange x_;
    AxisRange y_;
};

inline AxisRange range_of(const std::vector<Series>& series, bool use_x) {
    AxisRange r{0, 0};
    bool first = true;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            const double v = use_x ? p.x : p.y;
            if (first) {
                r = {v, v};
                first = false;
            }
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
    }
    return r;
}

}  // namespace svg

/// Plain multi-series line chart.
inline std::string line_chart(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, const std::vector<Series>& series,
                              std::optional<AxisRange> yrange = std::nullopt) {
    auto yr = yrange.value_or(svg::range_of(series, false));
    svg::Chart c(svg::range_of(series, true), yr);
    std::string out = c.frame(title, xlabel, ylabel);
    std::vector<std::pair<std::string, std::string>> legend;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPalette.size()];
        out += "<g class=\"series\">\n" + c.polyline(series[i].points, color) + "</g>\n";
        legend.emplace_back(series[i].name, color);
    }
    out += svg::Chart::legend(legend) + "</svg>\n";
    return out;
}

/// Length control rate chart. Steps with gamma == -1 (gate closed) are drawn
/// as dashed red segments on the -1 line; open stretches are solid.
inline std::string gamma_chart(const std::string& title, const std::vector<Series>& series) {
    svg::Chart c(svg::range_of(series, true), {-1.1, 1.05});
    std::string out = c.frame(title, "step", "length control rate");
    std::vector<std::pair<std::string, std::string>> legend;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPalette.size()];
        out += "<g class=\"series\">\n";
        std::vector<Point> run;
        bool closed = false;
        const auto flush = [&] {
            if (run.empty()) return;
            if (closed) {
                out += "<g class=\"gate-closed\">\n";
                out += run.size() == 1 ? c.marker(run.front(), kClosedColor)
                                       : c.polyline(run, kClosedColor, " stroke-dasharray=\"4 3\"");
                out += "</g>\n";
            } else {
                out += run.size() == 1 ? c.marker(run.front(), color) : c.polyline(run, color);
            }
            run.clear();
        };
        for (const auto& p : series[i].points) {
            const bool is_closed = p.y < 0.0;
            if (is_closed != closed) flush();
            closed = is_closed;
            run.push_back(p);
        }
        flush();
        out += "</g>\n";
        legend.emplace_back(series[i].name, color);
    }
    legend.emplace_back("gate closed (-1)", kClosedColor);
    out += svg::Chart::legend(legend, {"gate closed (-1)"}) + "</svg>\n";
    return out;
}

/// Per-seed points with the per-value mean joined by a line.
inline std::string scatter_chart(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel, const std::vector<Point>& points) {
    const std::vector<Series> all{{"", points}};
    svg::Chart c(svg::range_of(all, true), svg::range_of(all, false));
    std::string out = c.frame(title, xlabel, ylabel);
    std::map<double, std::pair<double, int>> by_x;
    out += "<g class=\"points\">\n";
    for (const auto& p : points) {
        out += c.marker(p, kPalette[0]);
        auto& [sum, n] = by_x[p.x];
        sum += p.y;
        ++n;
    }
    out += "</g>\n";
    std::vector<Point> means;
    for (const auto& [x, sn] : by_x) means.push_back({x, sn.first / sn.second});
    out += "<g class=\"mean\">\n" + c.polyline(means, kPalette[1]) + "</g>\n";
    out += svg::Chart::legend({{"seed", kPalette[0]}, {"mean over seeds", kPalette[1]}}) + "</svg>\n";
    return out;
}

// ---------------------------------------------------------------------------
// Directory rendering

struct LoadedRun {
    std::string label;
    std::vector<StepMetrics> metrics;
};

/// Runs found directly in `dir` (metrics.jsonl) or in its seed_* subdirectories.
inline std::vector<LoadedRun> find_runs(const fs::path& dir) {
    std::vector<LoadedRun> runs;
    if (fs::exists(dir / "metrics.jsonl")) {
        runs.push_back({dir.filename().string(), read_metrics(dir / "metrics.jsonl")});
        return runs;
    }
    std::vector<fs::path> subs;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_directory() && fs::exists(e.path() / "metrics.jsonl")) subs.push_back(e.path());
        }
    }
    std::sort(subs.begin(), subs.end());
    for (const auto& p : subs) runs.push_back({p.filename().string(), read_metrics(p / "metrics.jsonl")});
    return runs;
}

struct SweepPoint {
    double value;
    double step_avg_length;
    double final_acc;
};

inline std::pair<std::string, std::vector<SweepPoint>> read_sweep_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);  // header
    std::string axis;
    std::vector<SweepPoint> pts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 5) throw InputError(path.string() + ": malformed row '" + line + "'");
        axis = f[0];
        const auto v = detail::to_double(f[1]);
        const auto sal = detail::to_double(f[3]);
        const auto acc = detail::to_double(f[4]);
        if (!v || !acc) throw InputError(path.string() + ": malformed row '" + line + "'");
        pts.push_back({*v, sal.value_or(0.0), *acc});
    }
    return {axis, pts};
}

/// Renders every chart the directory supports into `out`. Returns the files written.
inline std::vector<fs::path> plot_directory(const fs::path& dir, const fs::path& out) {
    std::vector<fs::path> written;
    const auto emit = [&](const std::string& name, const std::string& svgtext) {
        fs::create_directories(out);
        write_text(out / name, svgtext);
        written.push_back(out / name);
    };

    if (fs::exists(dir / "sweep.csv")) {
        const auto [axis, pts] = read_sweep_csv(dir / "sweep.csv");
        if (pts.empty()) throw InputError("no sweep rows in '" + (dir / "sweep.csv").string() + "'");
        std::vector<Point> len;
        std::vector<Point> acc;
        for (const auto& p : pts) {
            len.push_back({p.value, p.step_avg_length});
            acc.push_back({p.value, p.final_acc});
        }
        emit("sweep_length.svg", scatter_chart("Step-avg length vs " + axis, axis, "step-avg length (tokens)", len));
        emit("sweep_accuracy.svg", scatter_chart("Final accuracy vs " + axis, axis, "final accuracy", acc));
        return written;
    }

    const auto runs = find_runs(dir);
    if (runs.empty()) throw InputError("no metrics found in '" + dir.string() + "'");
    std::vector<Series> len;
    std::vector<Series> acc;
    std::vector<Series> gam;
    for (const auto& r : runs) {
        Series l{r.label, {}}, a{r.label, {}}, g{r.label, {}};
        for (const auto& m : r.metrics) {
            const auto x = static_cast<double>(m.step);
            l.points.push_back({x, m.mean_length});
            a.points.push_back({x, m.acc});
            g.points.push_back({x, m.gamma});
        }
        len.push_back(std::move(l));
        acc.push_back(std::move(a));
        gam.push_back(std::move(g));
    }
    if (len.front().points.empty()) throw InputError("metrics in '" + dir.string() + "' are empty");
    emit("length.svg", line_chart("Mean rollout length", "step", "mean length (tokens)", len));
    emit("accuracy.svg", line_chart("Batch accuracy", "step", "accuracy", acc, AxisRange{0.0, 1.0}));
    emit("gamma.svg", gamma_chart("Length control rate", gam));
    return written;
}

}  // namespace shortrl::harness
