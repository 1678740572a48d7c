// SPDX-License-Identifier: Apache-2.0
#pragma once

// Batch scoring shared by `shortrl score` and the sidecar service.
//
// Batch file: JSON lines, one group per line
//   {"prompt_id": "p0", "samples": [{"length": 120, "correct": true, "task_reward": 3}, ...]}
// Tracker state file: {"acc_max": 0.5, "step": 3}
//
// The reward payload carries per-group final and length rewards plus the
// batch-level gate decision and length control rate. acc_max and step are
// reported after the tracker update.

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "shortrl/shaping.hpp"
#include "shortrl/stability_gate.hpp"
#include "shortrl/types.hpp"

namespace shortrl::harness {

using ojson = nlohmann::ordered_json;

/// Decodes one group object. `where` prefixes error messages.
inline RolloutGroup group_from_json(const nlohmann::ordered_json& j, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": group must be a JSON object");
    RolloutGroup g;
    const auto pid = j.find("prompt_id");
    if (pid == j.end() || !pid->is_string()) throw InputError(where + ": prompt_id must be a string");
    g.prompt_id = pid->get<std::string>();
    const auto samples = j.find("samples");
    if (samples == j.end() || !samples->is_array()) {
        throw InputError(where + ": samples must be an array");
    }
    if (samples->empty()) throw InputError(where + ": samples must not be empty");
    for (std::size_t i = 0; i < samples->size(); ++i) {
        const auto& s = (*samples)[i];
        const std::string at = where + ": samples[" + std::to_string(i) + "]";
        if (!s.is_object()) throw InputError(at + " must be an object");
        const auto len = s.find("length");
        if (len == s.end() || !len->is_number_integer() || len->get<std::int64_t>() < 1) {
            throw InputError(at + ".length must be a positive integer");
        }
        const auto cor = s.find("correct");
        if (cor == s.end() || !cor->is_boolean()) throw InputError(at + ".correct must be a boolean");
        const auto tr = s.find("task_reward");
        if (tr == s.end() || !tr->is_number()) throw InputError(at + ".task_reward must be a number");
        Sample smp{len->get<std::int64_t>(), cor->get<bool>(), tr->get<double>()};
        if (!std::isfinite(smp.task_reward)) throw InputError(at + ".task_reward must be finite");
        g.samples.push_back(smp);
    }
    return g;
}

/// Parses a JSON-lines batch. Blank lines are skipped; errors carry the 1-based line number.
inline std::vector<RolloutGroup> parse_batch(const std::string& text) {
    std::vector<RolloutGroup> groups;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(n);
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(where + ": invalid JSON (" + e.what() + ")");
        }
        groups.push_back(group_from_json(j, where));
    }
    if (groups.empty()) throw InputError("batch has no groups");
    return groups;
}

inline std::vector<RolloutGroup> groups_from_json(const ojson& arr) {
    if (!arr.is_array()) throw InputError("groups must be an array");
    if (arr.empty()) throw InputError("batch has no groups");
    std::vector<RolloutGroup> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(group_from_json(arr[i], "groups[" + std::to_string(i) + "]"));
    }
    return out;
}

inline ojson group_to_json(const RolloutGroup& g) {
    ojson samples = ojson::array();
    for (const auto& s : g.samples) {
        ojson o;
        o["length"] = s.length;
        o["correct"] = s.correct;
        o["task_reward"] = s.task_reward;
        samples.push_back(o);
    }
    ojson j;
    j["prompt_id"] = g.prompt_id;
    j["samples"] = samples;
    return j;
}

inline ojson tracker_to_json(const AccuracyTracker& t) {
    ojson j;
    j["acc_max"] = t.acc_max;
    j["step"] = t.step;
    return j;
}

inline AccuracyTracker tracker_from_json(const ojson& j) {
    if (!j.is_object()) throw InputError("tracker state must be a JSON object");
    AccuracyTracker t;
    const auto am = j.find("acc_max");
    if (am == j.end() || !am->is_number()) throw InputError("tracker state: acc_max must be a number");
    t.acc_max = am->get<double>();
    if (!(t.acc_max >= 0.0 && t.acc_max <= 1.0)) throw InputError("tracker state: acc_max must be in [0, 1]");
    const auto st = j.find("step");
    if (st == j.end() || !st->is_number_integer() || st->get<std::int64_t>() < 0) {
        throw InputError("tracker state: step must be a non-negative integer");
    }
    t.step = st->get<std::int64_t>();
    return t;
}

struct ScoreOutcome {
    ojson payload;
    AccuracyTracker tracker;  // after the update
};

/// Gate against the prior running max, shape, count, then update.
/// Throws before touching anything, so callers can keep the old tracker on error.
inline ScoreOutcome score_batch(const std::vector<RolloutGroup>& groups, const ShaperConfig& cfg,
                                const AccuracyTracker& tracker) {
    const double acc = batch_accuracy(groups);
    const auto gate = evaluate_gate(tracker, acc, cfg.tau_acc);
    const auto shaped = shape_batch(groups, cfg, gate.open);
    const auto control = length_control_rate(shaped, groups, gate);
    ScoreOutcome out{ojson::object(), update_tracker(tracker, acc)};

    ojson gj = ojson::array();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        ojson o;
        o["prompt_id"] = groups[g].prompt_id;
        o["final_rewards"] = shaped[g].final_rewards;
        o["length_rewards"] = shaped[g].length_rewards;
        gj.push_back(o);
    }
    auto& p = out.payload;
    p["groups"] = gj;
    p["gate_open"] = gate.open;
    p["gamma"] = control.gamma;
    p["n_correct"] = control.n_correct;
    p["n_penalized"] = control.n_penalized;
    p["acc"] = acc;
    p["acc_max"] = out.tracker.acc_max;
    p["step"] = out.tracker.step;
    return out;
}

}  // namespace shortrl::harness
