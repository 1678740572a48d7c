// SPDX-License-Identifier: Apache-2.0
//
// shortrl: command-line front door for scoring, simulation, sweeps, plots
// and the reward sidecar.
//
// Exit codes: 0 ok, 2 config error, 3 input data error, 4 invariant violation.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "shortrl/harness/config.hpp"
#include "shortrl/harness/plot.hpp"
#include "shortrl/harness/runs.hpp"
#include "shortrl/harness/scoring.hpp"
#include "shortrl/sidecar.hpp"

namespace fs = std::filesystem;
using namespace shortrl;

namespace {

struct Globals {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string preset;
    std::string ablation;

    harness::Overrides overrides() const {
        harness::Overrides ov;
        if (!preset.empty()) ov.preset = preset;
        if (seed) ov.seed = *seed;
        if (!out.empty()) ov.output_dir = out;
        if (!ablation.empty()) ov.ablation = ablation;
        return ov;
    }

    harness::ExperimentConfig load() const {
        return config.empty() ? harness::parse_config("", overrides())
                              : harness::load_config(config, overrides());
    }
};

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    for (const auto& tok : harness::detail::split(text, ',')) {
        if (tok.empty()) continue;
        const auto v = harness::detail::to_double(tok);
        if (!v) throw ConfigError("--values: '" + tok + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

int cmd_score(const Globals& g, const std::string& input, const std::string& state) {
    // Only the out-file override matters here; output_dir is unused.
    auto ov = g.overrides();
    ov.output_dir.reset();
    const auto cfg = g.config.empty() ? harness::parse_config("", ov) : harness::load_config(g.config, ov);
    const auto groups = harness::parse_batch(harness::read_text(input));

    AccuracyTracker tracker;
    if (!state.empty() && fs::exists(state)) {
        const auto text = harness::read_text(state);
        try {
            tracker = harness::tracker_from_json(harness::ojson::parse(text));
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(state + ": invalid JSON (" + e.what() + ")");
        }
    }
    const auto outcome = harness::score_batch(groups, cfg.shaper, tracker);
    const auto text = outcome.payload.dump() + "\n";
    if (g.out.empty() || g.out == "-") std::cout << text;
    else harness::write_text(g.out, text);
    if (!state.empty()) harness::write_text(state, harness::tracker_to_json(outcome.tracker).dump() + "\n");
    return 0;
}

int cmd_simulate(const Globals& g) {
    const auto cfg = g.load();
    const auto runs = harness::simulate(cfg, cfg.output_dir);
    for (const auto& r : runs) {
        std::cout << r.dir.string() << ": " << harness::to_json(r.run.summary).dump() << '\n';
    }
    return 0;
}

int cmd_sweep(const Globals& g, const std::string& axis_name, const std::string& values) {
    const auto axis = harness::parse_axis(axis_name);
    if (!axis) throw ConfigError("--axis must be one of: tau_len, tau_acc, alpha");
    const auto cfg = g.load();
    const auto rows = harness::sweep(cfg, *axis, parse_values(values), cfg.output_dir);
    std::cout << harness::sweep_csv(*axis, rows);
    return 0;
}

int cmd_plot(const Globals& g, const std::string& dir) {
    const fs::path out = g.out.empty() ? fs::path(dir) : fs::path(g.out);
    for (const auto& p : harness::plot_directory(dir, out)) std::cout << p.string() << '\n';
    return 0;
}

sidecar::TcpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const std::string& listen, bool stdio, std::size_t max_sessions) {
    sidecar::Service svc(max_sessions);
    if (stdio) {
        sidecar::serve_stream(svc, std::cin, std::cout);
        return 0;
    }
    sidecar::TcpServer server(svc, sidecar::parse_listen(listen));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on port " << server.port() << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Length-reward shaping harness"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(harness::kVersion));

    Globals g;
    app.add_option("--config", g.config, "experiment config file");
    app.add_option("--out", g.out, "output directory (score: output file)");
    app.add_option("--seed", g.seed, "run a single seed");
    app.add_option("--preset", g.preset, "logic_rl | deepscaler | open_reasoner_zero | simplerl");
    app.add_option("--ablation", g.ablation, "d1_only | d1_d2 | d1_d3 | full");

    std::string input;
    std::string state;
    auto* score = app.add_subcommand("score", "score a JSON-lines batch offline");
    score->add_option("input", input, "batch file")->required();
    score->add_option("--state", state, "tracker state file, read if present and rewritten");

    app.add_subcommand("simulate", "train one run per seed and write a run directory");

    std::string axis;
    std::string values;
    auto* sweep = app.add_subcommand("sweep", "sweep one shaper parameter");
    sweep->add_option("--axis", axis, "tau_len | tau_acc | alpha")->required();
    sweep->add_option("--values", values, "comma-separated values")->required();

    std::string plot_dir;
    auto* plot = app.add_subcommand("plot", "render SVG charts for a run or sweep directory");
    plot->add_option("dir", plot_dir)->required();

    std::string listen = "127.0.0.1:7878";
    bool stdio = false;
    std::size_t max_sessions = 1024;
    auto* serve = app.add_subcommand("serve", "run the reward sidecar");
    auto* listen_opt = serve->add_option("--listen", listen, "HOST:PORT (loopback by default)");
    serve->add_flag("--stdio", stdio, "serve on standard input/output")->excludes(listen_opt);
    serve->add_option("--max-sessions", max_sessions)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*score) return cmd_score(g, input, state);
        if (app.got_subcommand("simulate")) return cmd_simulate(g);
        if (*sweep) return cmd_sweep(g, axis, values);
        if (*plot) return cmd_plot(g, plot_dir);
        if (*serve) return cmd_serve(listen, stdio, max_sessions);
    } catch (const ConfigError& e) {
        std::cerr << "config error:\n" << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 3;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
