// SPDX-License-Identifier: Apache-2.0
#pragma once

/*
    Experiment configuration: a plain INI file with sections [env],
    [trainer], [shaper] and [run].

    Resolution order is: built-in defaults, then the named preset (from
    [run] preset or --preset), then keys written in the file, then CLI
    overrides. Any number of problems are collected and reported together.

        [env]
        max_steps = 12
        difficulties = 2:1, 4:1, 6:1      ; m:weight pairs
        [shaper]
        variant = short_rl
        ablation = d1_d2                  ; optional gate-toggle shortcut
        [run]
        preset = logic_rl
        seeds = 1, 2, 3
*/

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "shortrl/harness/format.hpp"
#include "shortrl/policy_trainer.hpp"
#include "shortrl/shaping.hpp"
#include "shortrl/slackchain_env.hpp"

namespace shortrl::harness {

struct Preset {
    std::string_view name;
    std::int64_t tau_len;
    double tau_acc;
    double alpha;
    std::int64_t rollouts_per_prompt;
};

/// Length tolerance, accuracy tolerance, alpha and rollout_n of the four training setups.
inline constexpr std::array<Preset, 4> kPresets = {{
    {"logic_rl", 200, 0.05, 1.0, 8},
    {"deepscaler", 100, 0.05, 1.0, 8},
    {"open_reasoner_zero", 100, 0.02, 1.0, 8},
    {"simplerl", 50, 0.05, 1.0, 8},
}};

inline const Preset* find_preset(std::string_view name) {
    for (const auto& p : kPresets) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

enum class Ablation { d1_only, d1_d2, d1_d3, full };

inline std::optional<Ablation> parse_ablation(std::string_view s) {
    if (s == "d1_only" || s == "d1") return Ablation::d1_only;
    if (s == "d1_d2") return Ablation::d1_d2;
    if (s == "d1_d3") return Ablation::d1_d3;
    if (s == "full") return Ablation::full;
    return std::nullopt;
}

inline GateToggles gates_for(Ablation a) {
    switch (a) {
        case Ablation::d1_only: return {true, false, false};
        case Ablation::d1_d2: return {true, true, false};
        case Ablation::d1_d3: return {true, false, true};
        case Ablation::full: return {true, true, true};
    }
    return {};
}

struct ExperimentConfig {
    EnvConfig env{};
    TrainConfig trainer{};
    ShaperConfig shaper{};
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "runs";
    std::optional<std::string> preset;

    [[nodiscard]] std::vector<std::string> problems() const {
        std::vector<std::string> out;
        for (auto& p : env.problems()) out.push_back("[env] " + p);
        for (auto& p : trainer.problems()) out.push_back("[trainer] " + p);
        for (auto& p : shaper.problems()) out.push_back("[shaper] " + p);
        if (seeds.empty()) out.emplace_back("[run] seeds must not be empty");
        return out;
    }
};

struct Overrides {
    std::optional<std::string> preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<std::string> ablation;
};

inline void apply_preset(ExperimentConfig& cfg, const Preset& p) {
    cfg.shaper.tau_len = p.tau_len;
    cfg.shaper.tau_acc = p.tau_acc;
    cfg.shaper.alpha = p.alpha;
    cfg.trainer.rollouts_per_prompt = p.rollouts_per_prompt;
    cfg.preset = std::string(p.name);
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
    Int v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<double> to_double(std::string_view s) {
    double v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<bool> to_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    return std::nullopt;
}

/// Walks one section, consuming known keys and recording bad values.
class SectionReader {
public:
    SectionReader(const boost::property_tree::ptree* tree, std::string section,
                  std::vector<std::string>& errors)
        : tree_(tree), section_(std::move(section)), errors_(errors) {}

    std::optional<std::string> raw(const std::string& key) {
        seen_.push_back(key);
        if (!tree_) return std::nullopt;
        const auto v = tree_->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (auto v = raw(key)) {
            if (auto p = to_int<Int>(*v)) out = *p;
            else bad(key, "expected an integer", *v);
        }
    }

    void real(const std::string& key, double& out) {
        if (auto v = raw(key)) {
            if (auto p = to_double(*v)) out = *p;
            else bad(key, "expected a number", *v);
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (auto v = raw(key)) {
            if (auto p = to_bool(*v)) out = *p;
            else bad(key, "expected true or false", *v);
        }
    }

    void bad(const std::string& key, const std::string& what, const std::string& got) {
        errors_.push_back("[" + section_ + "] " + key + ": " + what + ", got '" + got + "'");
    }

    void reject_unknown() {
        if (!tree_) return;
        for (const auto& [key, _] : *tree_) {
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
                errors_.push_back("[" + section_ + "] unknown key '" + key + "'");
            }
        }
    }

private:
    const boost::property_tree::ptree* tree_;
    std::string section_;
    std::vector<std::string>& errors_;
    std::vector<std::string> seen_;
};

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string msg;
    for (const auto& l : lines) {
        if (!msg.empty()) msg += '\n';
        msg += l;
    }
    return msg;
}

}  // namespace detail

/// Parses INI text into a resolved config. Throws ConfigError listing every problem.
inline ExperimentConfig parse_config(const std::string& text, const Overrides& ov = {}) {
    namespace pt = boost::property_tree;
    pt::ptree root;
    try {
        std::istringstream in(text);
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    std::vector<std::string> errors;
    const auto section = [&](const char* name) -> const pt::ptree* {
        auto it = root.find(name);
        return it == root.not_found() ? nullptr : &it->second;
    };
    for (const auto& [name, node] : root) {
        if (name != "env" && name != "trainer" && name != "shaper" && name != "run") {
            errors.push_back("unknown section [" + name + "]");
        } else if (node.empty() && !node.data().empty()) {
            errors.push_back("key '" + name + "' outside a section");
        }
    }

    ExperimentConfig cfg;

    // Preset first so explicit keys win.
    detail::SectionReader run(section("run"), "run", errors);
    const auto file_preset = run.raw("preset");
    const auto preset_name = ov.preset ? ov.preset : file_preset;
    if (preset_name) {
        if (const auto* p = find_preset(*preset_name)) {
            apply_preset(cfg, *p);
        } else {
            std::string allowed;
            for (const auto& p2 : kPresets) allowed += (allowed.empty() ? "" : ", ") + std::string(p2.name);
            errors.push_back("[run] preset: unknown preset '" + *preset_name + "' (allowed: " + allowed + ")");
        }
    }

    {
        detail::SectionReader env(section("env"), "env", errors);
        env.integer("max_steps", cfg.env.max_steps);
        if (auto v = env.raw("difficulties")) {
            std::vector<DifficultyBucket> buckets;
            bool ok = true;
            for (const auto& item : detail::split(*v, ',')) {
                const auto parts = detail::split(item, ':');
                const auto m = detail::to_int<std::int64_t>(parts[0]);
                const auto w = parts.size() == 2 ? detail::to_double(parts[1])
                                                 : (parts.size() == 1 ? std::optional<double>(1.0)
                                                                      : std::nullopt);
                if (!m || !w) {
                    ok = false;
                    break;
                }
                buckets.push_back({*m, *w});
            }
            if (ok) cfg.env.difficulties = std::move(buckets);
            else env.bad("difficulties", "expected a list of m:weight pairs", *v);
        }
        env.real("q_hi", cfg.env.q_hi);
        env.real("q_slope", cfg.env.q_slope);
        env.integer("tokens_per_step", cfg.env.tokens_per_step);
        env.boolean("observe_difficulty", cfg.env.observe_difficulty);
        if (auto v = env.raw("reward_rule")) {
            if (*v == "binary") cfg.env.reward_rule = RewardRule::binary;
            else if (*v == "math") cfg.env.reward_rule = RewardRule::math;
            else env.bad("reward_rule", "expected binary or math", *v);
        }
        env.reject_unknown();
    }

    {
        detail::SectionReader tr(section("trainer"), "trainer", errors);
        tr.integer("prompts_per_batch", cfg.trainer.prompts_per_batch);
        tr.integer("rollouts_per_prompt", cfg.trainer.rollouts_per_prompt);
        tr.integer("steps", cfg.trainer.steps);
        tr.real("learning_rate", cfg.trainer.learning_rate);
        if (auto v = tr.raw("advantage_mode")) {
            if (*v == "group_mean") cfg.trainer.advantage_mode = AdvantageMode::group_mean;
            else if (*v == "group_mean_std") cfg.trainer.advantage_mode = AdvantageMode::group_mean_std;
            else tr.bad("advantage_mode", "expected group_mean or group_mean_std", *v);
        }
        tr.real("entropy_bonus", cfg.trainer.entropy_bonus);
        tr.real("init_length_bias", cfg.trainer.init_length_bias);
        tr.integer("eval_rollouts_per_bucket", cfg.trainer.eval_rollouts_per_bucket);
        tr.reject_unknown();
    }

    {
        detail::SectionReader sh(section("shaper"), "shaper", errors);
        if (auto v = sh.raw("variant")) {
            if (auto p = parse_variant(*v)) cfg.shaper.variant = *p;
            else sh.bad("variant", "expected one of " + allowed_variants(), *v);
        }
        sh.real("alpha", cfg.shaper.alpha);
        sh.integer("tau_len", cfg.shaper.tau_len);
        sh.real("tau_acc", cfg.shaper.tau_acc);
        sh.boolean("gate_right", cfg.shaper.gates.right);
        sh.boolean("gate_slack", cfg.shaper.gates.slack);
        sh.boolean("gate_stable", cfg.shaper.gates.stable);
        const auto file_ablation = sh.raw("ablation");
        const auto ablation = ov.ablation ? ov.ablation : file_ablation;
        if (ablation) {
            if (auto a = parse_ablation(*ablation)) cfg.shaper.gates = gates_for(*a);
            else sh.bad("ablation", "expected d1_only, d1_d2, d1_d3 or full", *ablation);
        }
        sh.real("efficient_sigma", cfg.shaper.efficient_sigma);
        sh.boolean("efficient_apply_to_incorrect", cfg.shaper.efficient_apply_to_incorrect);
        sh.integer("thinkprune_limit", cfg.shaper.thinkprune_limit);
        if (auto v = sh.raw("thinkprune_mode")) {
            if (auto p = parse_thinkprune_mode(*v)) cfg.shaper.thinkprune_mode = *p;
            else sh.bad("thinkprune_mode", "expected hard or cosine", *v);
        }
        sh.integer("thinkprune_ramp", cfg.shaper.thinkprune_ramp);
        sh.reject_unknown();
    }

    if (auto v = run.raw("seeds")) {
        std::vector<std::uint64_t> seeds;
        bool ok = true;
        for (const auto& item : detail::split(*v, ',')) {
            if (auto s = detail::to_int<std::uint64_t>(item)) seeds.push_back(*s);
            else ok = false;
        }
        if (ok) cfg.seeds = std::move(seeds);
        else run.bad("seeds", "expected a list of unsigned integers", *v);
    }
    if (auto v = run.raw("output_dir")) cfg.output_dir = *v;
    run.reject_unknown();

    if (ov.seed) cfg.seeds = {*ov.seed};
    if (ov.output_dir) cfg.output_dir = *ov.output_dir;
    if (!cfg.seeds.empty()) cfg.trainer.seed = cfg.seeds.front();

    for (auto& p : cfg.problems()) errors.push_back(std::move(p));
    if (!errors.empty()) throw ConfigError(detail::join_lines(errors));
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, const Overrides& ov = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), ov);
}

/// Fully resolved snapshot. Parsing it back yields the same config except
/// output_dir, which is left to the caller.
inline std::string to_ini(const ExperimentConfig& cfg) {
    std::ostringstream o;
    const auto b = [](bool v) { return v ? "true" : "false"; };
    o << "[env]\n"
      << "max_steps = " << cfg.env.max_steps << '\n'
      << "difficulties = ";
    for (std::size_t i = 0; i < cfg.env.difficulties.size(); ++i) {
        if (i) o << ", ";
        o << cfg.env.difficulties[i].min_steps << ':' << format_double(cfg.env.difficulties[i].weight);
    }
    o << '\n'
      << "q_hi = " << format_double(cfg.env.q_hi) << '\n'
      << "q_slope = " << format_double(cfg.env.q_slope) << '\n'
      << "tokens_per_step = " << cfg.env.tokens_per_step << '\n'
      << "observe_difficulty = " << b(cfg.env.observe_difficulty) << '\n'
      << "reward_rule = " << to_string(cfg.env.reward_rule) << '\n'
      << "\n[trainer]\n"
      << "prompts_per_batch = " << cfg.trainer.prompts_per_batch << '\n'
      << "rollouts_per_prompt = " << cfg.trainer.rollouts_per_prompt << '\n'
      << "steps = " << cfg.trainer.steps << '\n'
      << "learning_rate = " << format_double(cfg.trainer.learning_rate) << '\n'
      << "advantage_mode = " << to_string(cfg.trainer.advantage_mode) << '\n'
      << "entropy_bonus = " << format_double(cfg.trainer.entropy_bonus) << '\n'
      << "init_length_bias = " << format_double(cfg.trainer.init_length_bias) << '\n'
      << "eval_rollouts_per_bucket = " << cfg.trainer.eval_rollouts_per_bucket << '\n'
      << "\n[shaper]\n"
      << "variant = " << to_string(cfg.shaper.variant) << '\n'
      << "alpha = " << format_double(cfg.shaper.alpha) << '\n'
      << "tau_len = " << cfg.shaper.tau_len << '\n'
      << "tau_acc = " << format_double(cfg.shaper.tau_acc) << '\n'
      << "gate_right = " << b(cfg.shaper.gates.right) << '\n'
      << "gate_slack = " << b(cfg.shaper.gates.slack) << '\n'
      << "gate_stable = " << b(cfg.shaper.gates.stable) << '\n'
      << "efficient_sigma = " << format_double(cfg.shaper.efficient_sigma) << '\n'
      << "efficient_apply_to_incorrect = " << b(cfg.shaper.efficient_apply_to_incorrect) << '\n'
      << "thinkprune_limit = " << cfg.shaper.thinkprune_limit << '\n'
      << "thinkprune_mode = " << to_string(cfg.shaper.thinkprune_mode) << '\n'
      << "thinkprune_ramp = " << cfg.shaper.thinkprune_ramp << '\n'
      << "\n[run]\n";
    if (cfg.preset) o << "preset = " << *cfg.preset << '\n';
    o << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) o << (i ? ", " : "") << cfg.seeds[i];
    o << '\n';
    return o.str();
}

}  // namespace shortrl::harness
