// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run and sweep directories.
//
//   <out>/seed_<s>/config.ini      resolved snapshot (seeds = s)
//   <out>/seed_<s>/metrics.jsonl   one StepMetrics object per line
//   <out>/seed_<s>/summary.json
//   <out>/seed_<s>/run.json        version and wall clock
//   <out>/aggregate.json           mean/std of summaries across seeds
//
// A sweep writes one run directory per axis value plus sweep.csv.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "shortrl/harness/config.hpp"
#include "shortrl/harness/format.hpp"
#include "shortrl/policy_trainer.hpp"

namespace shortrl::harness {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "0.1.0";

inline ojson to_json(const StepMetrics& m) {
    ojson j;
    j["step"] = m.step;
    j["acc"] = m.acc;
    j["acc_max"] = m.acc_max;
    j["gate_open"] = m.gate_open;
    j["gamma"] = m.gamma;
    j["mean_length"] = m.mean_length;
    j["mean_final_reward"] = m.mean_final_reward;
    return j;
}

inline StepMetrics metrics_from_json(const ojson& j) {
    StepMetrics m;
    m.step = j.at("step").get<std::int64_t>();
    m.acc = j.at("acc").get<double>();
    m.acc_max = j.at("acc_max").get<double>();
    m.gate_open = j.at("gate_open").get<bool>();
    m.gamma = j.at("gamma").get<double>();
    m.mean_length = j.at("mean_length").get<double>();
    m.mean_final_reward = j.at("mean_final_reward").get<double>();
    return m;
}

inline ojson to_json(const RunSummary& s) {
    ojson j;
    j["step_avg_length"] = s.step_avg_length ? ojson(*s.step_avg_length) : ojson(nullptr);
    j["final_length"] = s.final_length;
    j["final_acc"] = s.final_acc;
    j["seed"] = s.seed;
    return j;
}

inline RunSummary summary_from_json(const ojson& j) {
    RunSummary s;
    if (!j.at("step_avg_length").is_null()) s.step_avg_length = j.at("step_avg_length").get<double>();
    s.final_length = j.at("final_length").get<double>();
    s.final_acc = j.at("final_acc").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline std::string metrics_jsonl(const std::vector<StepMetrics>& ms) {
    std::string out;
    for (const auto& m : ms) {
        out += to_json(m).dump();
        out += '\n';
    }
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << text;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::vector<StepMetrics> read_metrics(const fs::path& path) {
    std::vector<StepMetrics> out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(metrics_from_json(ojson::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

struct SeedRun {
    std::uint64_t seed = 0;
    fs::path dir;
    TrainingRun run;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Sample mean and (n-1) standard deviation; std is 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    if (xs.empty()) return r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return r;
}

inline ojson aggregate_json(const std::vector<RunSummary>& sums) {
    std::vector<double> sal;
    std::vector<double> fl;
    std::vector<double> fa;
    bool have_sal = true;
    ojson seeds = ojson::array();
    for (const auto& s : sums) {
        seeds.push_back(s.seed);
        if (s.step_avg_length) sal.push_back(*s.step_avg_length);
        else have_sal = false;
        fl.push_back(s.final_length);
        fa.push_back(s.final_acc);
    }
    const auto ms = [](const MeanStd& m) {
        ojson j;
        j["mean"] = m.mean;
        j["std"] = m.std;
        return j;
    };
    ojson j;
    j["runs"] = sums.size();
    j["seeds"] = seeds;
    j["step_avg_length"] = have_sal ? ms(mean_std(sal)) : ojson(nullptr);
    j["final_length"] = ms(mean_std(fl));
    j["final_acc"] = ms(mean_std(fa));
    return j;
}

inline ExperimentConfig for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    auto c = cfg;
    c.seeds = {seed};
    c.trainer.seed = seed;
    return c;
}

/// Trains one run per seed (seeds in parallel) and writes the run directory.
inline std::vector<SeedRun> simulate(const ExperimentConfig& cfg, const fs::path& out,
                                     unsigned threads = worker_threads()) {
    if (const auto p = cfg.problems(); !p.empty()) throw ConfigError(detail::join_lines(p));
    fs::create_directories(out);
    std::vector<SeedRun> runs(cfg.seeds.size());
    std::vector<double> wall(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), threads, [&](std::size_t i) {
        const auto c = for_seed(cfg, cfg.seeds[i]);
        const auto t0 = std::chrono::steady_clock::now();
        runs[i].run = run_training(c.env, c.trainer, c.shaper);
        wall[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        runs[i].seed = c.seeds.front();
    });

    std::vector<RunSummary> sums;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto& r = runs[i];
        r.dir = out / ("seed_" + std::to_string(r.seed));
        fs::create_directories(r.dir);
        write_text(r.dir / "config.ini", to_ini(for_seed(cfg, r.seed)));
        write_text(r.dir / "metrics.jsonl", metrics_jsonl(r.run.metrics));
        write_text(r.dir / "summary.json", to_json(r.run.summary).dump() + "\n");
        ojson rec;
        rec["version"] = kVersion;
        rec["seed"] = r.seed;
        rec["preset"] = cfg.preset ? ojson(*cfg.preset) : ojson(nullptr);
        rec["steps"] = r.run.metrics.size();
        rec["wall_clock_seconds"] = wall[i];
        write_text(r.dir / "run.json", rec.dump() + "\n");
        sums.push_back(r.run.summary);
    }
    write_text(out / "aggregate.json", aggregate_json(sums).dump() + "\n");
    return runs;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { tau_len, tau_acc, alpha };

inline std::optional<SweepAxis> parse_axis(std::string_view s) {
    if (s == "tau_len") return SweepAxis::tau_len;
    if (s == "tau_acc") return SweepAxis::tau_acc;
    if (s == "alpha") return SweepAxis::alpha;
    return std::nullopt;
}

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::tau_len: return "tau_len";
        case SweepAxis::tau_acc: return "tau_acc";
        case SweepAxis::alpha: return "alpha";
    }
    return "";
}

inline ExperimentConfig with_axis_value(const ExperimentConfig& cfg, SweepAxis axis, double v) {
    auto c = cfg;
    switch (axis) {
        case SweepAxis::tau_len:
            if (v != std::floor(v)) throw ConfigError("tau_len sweep values must be integers");
            c.shaper.tau_len = static_cast<std::int64_t>(v);
            break;
        case SweepAxis::tau_acc: c.shaper.tau_acc = v; break;
        case SweepAxis::alpha: c.shaper.alpha = v; break;
    }
    if (const auto p = c.problems(); !p.empty()) throw ConfigError(detail::join_lines(p));
    return c;
}

struct SweepRow {
    double value = 0.0;
    RunSummary summary;
};

inline std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
    std::string out = "axis,value,seed,step_avg_length,final_acc\n";
    for (const auto& r : rows) {
        out += std::string(to_string(axis)) + "," + format_double(r.value) + "," +
               std::to_string(r.summary.seed) + "," +
               (r.summary.step_avg_length ? format_double(*r.summary.step_avg_length) : "") + "," +
               format_double(r.summary.final_acc) + "\n";
    }
    return out;
}

inline std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                   const std::vector<double>& values, const fs::path& out,
                                   unsigned threads = worker_threads()) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::vector<ExperimentConfig> cfgs;
    for (double v : values) cfgs.push_back(with_axis_value(cfg, axis, v));
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto dir = out / (std::string(to_string(axis)) + "_" + format_double(values[i]));
        for (const auto& r : simulate(cfgs[i], dir, threads)) rows.push_back({values[i], r.run.summary});
    }
    write_text(out / "sweep.csv", sweep_csv(axis, rows));
    return rows;
}

}  // namespace shortrl::harness
