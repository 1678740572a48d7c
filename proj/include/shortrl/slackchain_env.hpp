// SPDX-License-Identifier: Apache-2.0
#pragma once

/*
    slackchain_env.hpp - a variable-length task with enumerable ground truth.

    An episode picks a hidden difficulty m from a weighted bucket list. The
    policy chooses a step count T in 1..T_max. The answer can only be right
    when T >= m; extra steps never help beyond the success ceiling q_hi and
    only add tokens (length = tokens_per_step * T).

    enumerate_expectation() sums over every joint outcome of one rollout
    group and is the exact oracle for Monte-Carlo and gradient checks.
*/

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shortrl/policy.hpp"
#include "shortrl/rng.hpp"
#include "shortrl/shaping.hpp"
#include "shortrl/types.hpp"

namespace shortrl {

enum class RewardRule { binary, math };

inline std::string_view to_string(RewardRule r) { return r == RewardRule::binary ? "binary" : "math"; }

struct DifficultyBucket {
    std::int64_t min_steps = 1;  // m
    double weight = 1.0;

    friend bool operator==(const DifficultyBucket&, const DifficultyBucket&) = default;
};

struct EnvConfig {
    std::int64_t max_steps = 12;
    std::vector<DifficultyBucket> difficulties{{2, 1.0}, {4, 1.0}, {6, 1.0}};
    double q_hi = 0.9;
    double q_slope = 0.0;
    std::int64_t tokens_per_step = 100;
    bool observe_difficulty = false;
    RewardRule reward_rule = RewardRule::binary;

    [[nodiscard]] std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (max_steps < 1) out.emplace_back("max_steps must be ≥ 1");
        if (difficulties.empty()) out.emplace_back("difficulties must not be empty");
        for (std::size_t i = 0; i < difficulties.size(); ++i) {
            const auto& d = difficulties[i];
            const std::string where = "difficulties[" + std::to_string(i) + "]";
            if (d.min_steps < 1 || d.min_steps > max_steps) {
                out.push_back(where + ": m must be in [1, max_steps]");
            }
            if (!std::isfinite(d.weight) || d.weight <= 0.0) {
                out.push_back(where + ": weight must be > 0");
            }
        }
        if (!(q_hi > 0.0 && q_hi <= 1.0)) out.emplace_back("q_hi must be in (0, 1]");
        if (!std::isfinite(q_slope) || q_slope < 0.0) out.emplace_back("q_slope must be ≥ 0");
        if (tokens_per_step < 1) out.emplace_back("tokens_per_step must be ≥ 1");
        return out;
    }

    [[nodiscard]] std::vector<double> bucket_probabilities() const {
        double total = 0.0;
        for (const auto& d : difficulties) total += d.weight;
        std::vector<double> p;
        p.reserve(difficulties.size());
        for (const auto& d : difficulties) p.push_back(d.weight / total);
        return p;
    }

    [[nodiscard]] std::size_t policy_rows() const {
        return observe_difficulty ? difficulties.size() : 1;
    }

    [[nodiscard]] std::size_t policy_row(std::size_t bucket) const {
        return observe_difficulty ? bucket : 0;
    }

    [[nodiscard]] std::int64_t min_difficulty() const {
        std::int64_t m = max_steps;
        for (const auto& d : difficulties) m = std::min(m, d.min_steps);
        return m;
    }
};

struct TaskInstance {
    std::int64_t min_steps = 1;
    std::size_t bucket_id = 0;
};

struct Trajectory {
    std::int64_t steps = 1;
    std::int64_t length = 1;
    bool correct = false;
    double task_reward = 0.0;

    [[nodiscard]] Sample sample() const { return {length, correct, task_reward}; }
};

inline double task_reward_for(RewardRule rule, bool correct) {
    return rule == RewardRule::binary ? (correct ? 1.0 : 0.0) : task_reward_math(true, correct);
}

inline double success_probability(std::int64_t steps, std::int64_t min_steps, const EnvConfig& cfg) {
    if (steps < 1 || steps > cfg.max_steps) {
        throw InputError("step count " + std::to_string(steps) + " outside [1, " +
                         std::to_string(cfg.max_steps) + "]");
    }
    if (steps < min_steps) return 0.0;
    if (cfg.q_slope == 0.0) return cfg.q_hi;
    return cfg.q_hi * (1.0 - std::exp(-cfg.q_slope * static_cast<double>(steps - min_steps + 1)));
}

inline TaskInstance sample_task(Stream& rng, const EnvConfig& cfg) {
    const auto p = cfg.bucket_probabilities();
    const std::size_t b = rng.categorical(p);
    return {cfg.difficulties[b].min_steps, b};
}

inline Trajectory rollout(const TaskInstance& task, std::int64_t steps, Stream& rng,
                          const EnvConfig& cfg) {
    const double q = success_probability(steps, task.min_steps, cfg);
    // Always draw, so the stream position does not depend on q.
    const bool correct = rng.uniform() < q;
    return {steps, cfg.tokens_per_step * steps, correct, task_reward_for(cfg.reward_rule, correct)};
}

// ---------------------------------------------------------------------------
// Exact enumeration

struct Expectation {
    double final_reward = 0.0;  // expected per-sample shaped reward
    double accuracy = 0.0;
    double length = 0.0;        // tokens
    std::uint64_t tuples = 0;   // joint outcomes visited
};

struct EnumerationOutcome {
    std::int64_t steps;
    bool correct;
    double prob;  // pi(T) * P(correct | T)
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 4'000'000;

/// Nonzero-probability single-sample outcomes for one bucket.
inline std::vector<EnumerationOutcome> outcome_table(const Policy& policy, std::size_t bucket,
                                                     const EnvConfig& cfg) {
    const auto pi = policy.probabilities(cfg.policy_row(bucket));
    const auto m = cfg.difficulties[bucket].min_steps;
    std::vector<EnumerationOutcome> out;
    for (std::int64_t t = 1; t <= cfg.max_steps; ++t) {
        const double q = success_probability(t, m, cfg);
        const double p = pi[static_cast<std::size_t>(t - 1)];
        if (q > 0.0) out.push_back({t, true, p * q});
        if (q < 1.0) out.push_back({t, false, p * (1.0 - q)});
    }
    return out;
}

/// Number of joint outcomes enumerate_groups() would visit.
inline std::uint64_t enumeration_size(const Policy& policy, const EnvConfig& cfg, std::size_t k) {
    std::uint64_t total = 0;
    for (std::size_t b = 0; b < cfg.difficulties.size(); ++b) {
        const auto n = static_cast<std::uint64_t>(outcome_table(policy, b, cfg).size());
        std::uint64_t c = 1;
        for (std::size_t i = 0; i < k; ++i) {
            if (n != 0 && c > UINT64_MAX / n) return UINT64_MAX;
            c *= n;
        }
        if (total > UINT64_MAX - c) return UINT64_MAX;
        total += c;
    }
    return total;
}

/// Visitor receives (bucket, outcomes of the k samples, joint probability incl. bucket weight).
using GroupVisitor =
    std::function<void(std::size_t, std::span<const EnumerationOutcome* const>, double)>;

inline void enumerate_groups(const Policy& policy, const EnvConfig& cfg, std::size_t k,
                             const GroupVisitor& visit,
                             std::uint64_t cap = kDefaultEnumerationCap) {
    if (k < 1) throw ConfigError("enumeration needs k ≥ 1");
    const auto size = enumeration_size(policy, cfg, k);
    if (size > cap) {
        throw ConfigError("enumeration of " + std::to_string(k) + "-sample groups exceeds cap (" +
                          std::to_string(cap) + " joint outcomes)");
    }
    const auto weights = cfg.bucket_probabilities();
    std::vector<const EnumerationOutcome*> picked(k);
    std::vector<std::size_t> idx(k);
    for (std::size_t b = 0; b < cfg.difficulties.size(); ++b) {
        const auto table = outcome_table(policy, b, cfg);
        if (table.empty()) continue;
        std::fill(idx.begin(), idx.end(), 0);
        while (true) {
            double p = weights[b];
            for (std::size_t i = 0; i < k; ++i) {
                picked[i] = &table[idx[i]];
                p *= picked[i]->prob;
            }
            visit(b, picked, p);
            std::size_t pos = 0;
            while (pos < k && ++idx[pos] == table.size()) idx[pos++] = 0;
            if (pos == k) break;
        }
    }
}

inline RolloutGroup group_from_outcomes(std::span<const EnumerationOutcome* const> outcomes,
                                        const EnvConfig& cfg) {
    RolloutGroup g;
    g.samples.reserve(outcomes.size());
    for (const auto* o : outcomes) {
        g.samples.push_back({cfg.tokens_per_step * o->steps, o->correct,
                             task_reward_for(cfg.reward_rule, o->correct)});
    }
    return g;
}

/// Exact expectations over one group of k rollouts under a fixed gate state.
inline Expectation enumerate_expectation(const Policy& policy, const EnvConfig& cfg,
                                         const ShaperConfig& shaper, bool gate_open,
                                         std::size_t k,
                                         std::uint64_t cap = kDefaultEnumerationCap) {
    Expectation e;
    const double inv_k = 1.0 / static_cast<double>(k);
    enumerate_groups(
        policy, cfg, k,
        [&](std::size_t, std::span<const EnumerationOutcome* const> outs, double p) {
            const auto g = group_from_outcomes(outs, cfg);
            const auto r = shape_group(g, shaper, gate_open);
            double reward = 0.0;
            double acc = 0.0;
            double len = 0.0;
            for (std::size_t i = 0; i < outs.size(); ++i) {
                reward += r.final_rewards[i];
                acc += outs[i]->correct ? 1.0 : 0.0;
                len += static_cast<double>(g.samples[i].length);
            }
            e.final_reward += p * reward * inv_k;
            e.accuracy += p * acc * inv_k;
            e.length += p * len * inv_k;
            ++e.tuples;
        },
        cap);
    return e;
}

}  // namespace shortrl
