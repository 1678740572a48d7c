// SPDX-License-Identifier: Apache-2.0
#pragma once

/*
    policy_trainer.hpp - on-policy training loop over the SlackChain task.

    One training step:
      1. sample prompts and k rollouts per prompt (indexed RNG streams)
      2. pooled batch accuracy
      3. gate decision against the running max from previous steps
      4. shaped rewards
      5. length control rate
      6. group-relative advantages
      7. score-function ascent on sum_i A_i log pi(T_i | row_i) + entropy bonus
      8. tracker update
      9. StepMetrics record
*/

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "shortrl/policy.hpp"
#include "shortrl/rng.hpp"
#include "shortrl/shaping.hpp"
#include "shortrl/slackchain_env.hpp"
#include "shortrl/stability_gate.hpp"

namespace shortrl {

enum class AdvantageMode { group_mean, group_mean_std };

inline std::string_view to_string(AdvantageMode m) {
    return m == AdvantageMode::group_mean ? "group_mean" : "group_mean_std";
}

inline constexpr double kAdvantageStdFloor = 1e-8;

struct TrainConfig {
    std::int64_t prompts_per_batch = 256;
    std::int64_t rollouts_per_prompt = 8;  // k
    std::int64_t steps = 2000;
    double learning_rate = 0.5;
    AdvantageMode advantage_mode = AdvantageMode::group_mean;
    double entropy_bonus = 0.05;
    std::uint64_t seed = 1;
    double init_length_bias = 0.3;
    std::int64_t eval_rollouts_per_bucket = 10000;

    [[nodiscard]] std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (prompts_per_batch < 1) out.emplace_back("prompts_per_batch must be ≥ 1");
        if (rollouts_per_prompt < 1) out.emplace_back("rollouts_per_prompt must be ≥ 1");
        if (advantage_mode == AdvantageMode::group_mean_std && rollouts_per_prompt < 2) {
            out.emplace_back("rollouts_per_prompt must be ≥ 2 for advantage_mode group_mean_std");
        }
        if (steps < 0) out.emplace_back("steps must be ≥ 0");
        if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
            out.emplace_back("learning_rate must be ≥ 0");
        }
        if (!std::isfinite(entropy_bonus) || entropy_bonus < 0.0) {
            out.emplace_back("entropy_bonus must be ≥ 0");
        }
        if (!std::isfinite(init_length_bias)) out.emplace_back("init_length_bias must be finite");
        if (eval_rollouts_per_bucket < 1) out.emplace_back("eval_rollouts_per_bucket must be ≥ 1");
        return out;
    }
};

struct StepMetrics {
    std::int64_t step = 0;
    double acc = 0.0;
    double acc_max = 0.0;  // after this step's update
    bool gate_open = true;
    double gamma = 0.0;
    double mean_length = 0.0;
    double mean_final_reward = 0.0;

    friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

struct RunSummary {
    std::optional<double> step_avg_length;  // empty when no training step ran
    double final_length = 0.0;
    double final_acc = 0.0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Worker pool sizing

/// SHORTRL_THREADS when set to a positive integer, otherwise the hardware count (max 8).
inline unsigned worker_threads() {
    if (const char* env = std::getenv("SHORTRL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::clamp(std::thread::hardware_concurrency(), 1u, 8u);
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) fn(i);
        });
    }
}

// ---------------------------------------------------------------------------
// Advantages

inline std::vector<double> group_advantages(std::span<const double> rewards, AdvantageMode mode) {
    const std::size_t k = rewards.size();
    if (k == 0) throw InputError("group_advantages: empty group");
    if (mode == AdvantageMode::group_mean_std && k < 2) {
        throw ConfigError("group_mean_std advantages need at least 2 samples");
    }
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(k);
    std::vector<double> a(k);
    for (std::size_t i = 0; i < k; ++i) a[i] = rewards[i] - mean;
    if (mode == AdvantageMode::group_mean_std) {
        double var = 0.0;
        for (double v : a) var += v * v;
        const double sd = std::sqrt(var / static_cast<double>(k));
        const double denom = std::max(sd, kAdvantageStdFloor);
        for (double& v : a) v /= denom;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Sampling

/// One prompt's rollouts plus the bookkeeping needed for the update.
struct SampledGroup {
    std::size_t bucket = 0;
    std::vector<std::int64_t> steps;
    RolloutGroup group;
};

inline SampledGroup sample_group(const Policy& policy, const EnvConfig& env, std::size_t k,
                                 Stream& rng) {
    SampledGroup sg;
    const auto task = sample_task(rng, env);
    sg.bucket = task.bucket_id;
    sg.group.prompt_id = "b" + std::to_string(task.bucket_id);
    const auto pi = policy.probabilities(env.policy_row(task.bucket_id));
    sg.steps.reserve(k);
    sg.group.samples.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto t = static_cast<std::int64_t>(rng.categorical(pi)) + 1;
        const auto traj = rollout(task, t, rng, env);
        sg.steps.push_back(t);
        sg.group.samples.push_back(traj.sample());
    }
    return sg;
}

inline constexpr std::uint64_t kTrainStreamTag = 0x7472616e;  // "tran"
inline constexpr std::uint64_t kEvalStreamTag = 0x6576616c;   // "eval"

// ---------------------------------------------------------------------------
// Gradients

/// Adds scale * sum_i A_i * d log pi(T_i | row) / d logits into grad.
inline void accumulate_score_gradient(Matrix& grad, std::size_t row, std::span<const double> pi,
                                      std::span<const std::int64_t> steps,
                                      std::span<const double> weights, double scale) {
    double total = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        grad(row, static_cast<std::size_t>(steps[i] - 1)) += scale * weights[i];
        total += weights[i];
    }
    for (std::size_t t = 0; t < pi.size(); ++t) grad(row, t) -= scale * total * pi[t];
}

/// d H(softmax(logits)) / d logits = -pi_t (log pi_t + H).
inline std::vector<double> entropy_gradient(std::span<const double> pi) {
    double h = 0.0;
    for (double p : pi) {
        if (p > 0.0) h -= p * std::log(p);
    }
    std::vector<double> g(pi.size(), 0.0);
    for (std::size_t t = 0; t < pi.size(); ++t) {
        if (pi[t] > 0.0) g[t] = -pi[t] * (std::log(pi[t]) + h);
    }
    return g;
}

/// Exact gradient of the expected per-sample shaped reward of one k-group
/// with respect to the policy logits, summed over every joint outcome.
inline Matrix exact_policy_gradient(const Policy& policy, const EnvConfig& env,
                                    const ShaperConfig& shaper, bool gate_open, std::size_t k,
                                    std::uint64_t cap = kDefaultEnumerationCap) {
    Matrix grad(policy.rows(), policy.max_steps());
    const auto probs = policy.probability_table();
    const double inv_k = 1.0 / static_cast<double>(k);
    std::vector<std::int64_t> steps(k);
    const std::vector<double> ones(k, 1.0);
    enumerate_groups(
        policy, env, k,
        [&](std::size_t bucket, std::span<const EnumerationOutcome* const> outs, double p) {
            const auto g = group_from_outcomes(outs, env);
            const auto r = shape_group(g, shaper, gate_open);
            double mean = 0.0;
            for (double v : r.final_rewards) mean += v;
            mean *= inv_k;
            for (std::size_t i = 0; i < k; ++i) steps[i] = outs[i]->steps;
            const auto row = env.policy_row(bucket);
            accumulate_score_gradient(grad, row, probs.row(row), steps, ones, p * mean);
        },
        cap);
    return grad;
}

struct GradientEstimate {
    Matrix mean;
    Matrix std_error;
    std::int64_t groups = 0;
};

/// Score-function estimate of the same gradient: per group, mean shaped reward
/// times sum_i grad log pi(T_i). Unbiased, with per-coordinate standard errors.
inline GradientEstimate sampled_policy_gradient(const Policy& policy, const EnvConfig& env,
                                                const ShaperConfig& shaper, bool gate_open,
                                                std::size_t k, std::int64_t n_groups,
                                                std::uint64_t seed) {
    const auto probs = policy.probability_table();
    const std::size_t rows = policy.rows();
    const std::size_t cols = policy.max_steps();
    Matrix mean(rows, cols);
    Matrix m2(rows, cols);
    Matrix one(rows, cols);
    const std::vector<double> ones(k, 1.0);
    for (std::int64_t n = 0; n < n_groups; ++n) {
        Stream rng(seed, {static_cast<std::uint64_t>(n)});
        const auto sg = sample_group(policy, env, k, rng);
        const auto r = shape_group(sg.group, shaper, gate_open);
        double rbar = 0.0;
        for (double v : r.final_rewards) rbar += v;
        rbar /= static_cast<double>(k);

        std::fill(one.values().begin(), one.values().end(), 0.0);
        const auto row = env.policy_row(sg.bucket);
        accumulate_score_gradient(one, row, probs.row(row), sg.steps, ones, rbar);
        const double count = static_cast<double>(n + 1);
        for (std::size_t j = 0; j < rows * cols; ++j) {
            const double x = one.values()[j];
            const double d = x - mean.values()[j];
            mean.values()[j] += d / count;
            m2.values()[j] += d * (x - mean.values()[j]);
        }
    }
    Matrix se(rows, cols);
    if (n_groups > 1) {
        const double n = static_cast<double>(n_groups);
        for (std::size_t j = 0; j < rows * cols; ++j) {
            se.values()[j] = std::sqrt(m2.values()[j] / (n - 1.0) / n);
        }
    }
    return {std::move(mean), std::move(se), n_groups};
}

// ---------------------------------------------------------------------------
// Training

struct StepResult {
    Policy policy;
    AccuracyTracker tracker;
    StepMetrics metrics;
    GateDecision gate;
    LengthControlStats control;
    std::vector<SampledGroup> batch;
    std::vector<ShapedBatchResult> shaped;
};

inline StepResult train_step(const Policy& policy, const EnvConfig& env, const ShaperConfig& shaper,
                             const AccuracyTracker& tracker, const TrainConfig& cfg,
                             unsigned threads = 1) {
    const auto n_prompts = static_cast<std::size_t>(cfg.prompts_per_batch);
    const auto k = static_cast<std::size_t>(cfg.rollouts_per_prompt);
    const auto step_index = static_cast<std::uint64_t>(tracker.step);

    StepResult out;
    out.batch.resize(n_prompts);
    parallel_for(n_prompts, threads, [&](std::size_t p) {
        Stream rng(cfg.seed, {kTrainStreamTag, step_index, p});
        out.batch[p] = sample_group(policy, env, k, rng);
    });

    std::vector<RolloutGroup> groups;
    groups.reserve(n_prompts);
    for (const auto& sg : out.batch) groups.push_back(sg.group);

    const double acc = batch_accuracy(groups);
    out.gate = evaluate_gate(tracker, acc, shaper.tau_acc);
    out.shaped = shape_batch(groups, shaper, out.gate.open);
    out.control = length_control_rate(out.shaped, groups, out.gate);

    const auto probs = policy.probability_table();
    Matrix grad(policy.rows(), policy.max_steps());
    const double scale = 1.0 / static_cast<double>(n_prompts * k);
    double length_sum = 0.0;
    double reward_sum = 0.0;
    for (std::size_t p = 0; p < n_prompts; ++p) {
        const auto& sg = out.batch[p];
        const auto adv = group_advantages(out.shaped[p].final_rewards, cfg.advantage_mode);
        const auto row = env.policy_row(sg.bucket);
        accumulate_score_gradient(grad, row, probs.row(row), sg.steps, adv, scale);
        for (std::size_t i = 0; i < k; ++i) {
            length_sum += static_cast<double>(sg.group.samples[i].length);
            reward_sum += out.shaped[p].final_rewards[i];
        }
    }
    if (cfg.entropy_bonus > 0.0) {
        const auto w = env.bucket_probabilities();
        for (std::size_t r = 0; r < policy.rows(); ++r) {
            const double row_weight = env.observe_difficulty ? w[r] : 1.0;
            const auto eg = entropy_gradient(probs.row(r));
            for (std::size_t t = 0; t < eg.size(); ++t) grad(r, t) += cfg.entropy_bonus * row_weight * eg[t];
        }
    }

    out.policy = policy;
    if (cfg.learning_rate != 0.0) {
        auto logits = out.policy.logits().values();
        for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += cfg.learning_rate * grad.values()[j];
        out.policy.check();
    }

    out.tracker = update_tracker(tracker, acc);
    const double n_samples = static_cast<double>(n_prompts * k);
    out.metrics = {out.tracker.step,           acc,        out.tracker.acc_max,
                   out.gate.open,              out.control.gamma,
                   length_sum / n_samples,     reward_sum / n_samples};
    return out;
}

struct EvaluationResult {
    double mean_length = 0.0;
    double accuracy = 0.0;
};

/// Fresh sampled rollouts per bucket, weighted by bucket probability. No learning.
inline EvaluationResult evaluate_policy(const Policy& policy, const EnvConfig& env,
                                        std::int64_t rollouts_per_bucket, std::uint64_t seed) {
    const auto w = env.bucket_probabilities();
    EvaluationResult res;
    for (std::size_t b = 0; b < env.difficulties.size(); ++b) {
        const TaskInstance task{env.difficulties[b].min_steps, b};
        const auto pi = policy.probabilities(env.policy_row(b));
        Stream rng(seed, {kEvalStreamTag, b});
        double len = 0.0;
        double correct = 0.0;
        for (std::int64_t i = 0; i < rollouts_per_bucket; ++i) {
            const auto t = static_cast<std::int64_t>(rng.categorical(pi)) + 1;
            const auto traj = rollout(task, t, rng, env);
            len += static_cast<double>(traj.length);
            correct += traj.correct ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(rollouts_per_bucket);
        res.mean_length += w[b] * len / n;
        res.accuracy += w[b] * correct / n;
    }
    return res;
}

struct TrainingRun {
    std::vector<StepMetrics> metrics;
    Policy policy;
    AccuracyTracker tracker;
    RunSummary summary;
};

inline Policy initial_policy(const EnvConfig& env, const TrainConfig& cfg) {
    return Policy::length_biased(env.policy_rows(), static_cast<std::size_t>(env.max_steps),
                                 cfg.init_length_bias);
}

inline TrainingRun run_training(const EnvConfig& env, const TrainConfig& cfg,
                                const ShaperConfig& shaper, unsigned threads = 1) {
    auto problems = env.problems();
    for (auto& p : cfg.problems()) problems.push_back(std::move(p));
    for (auto& p : shaper.problems()) problems.push_back(std::move(p));
    if (!problems.empty()) {
        std::string msg;
        for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
        throw ConfigError(msg);
    }

    TrainingRun run;
    run.policy = initial_policy(env, cfg);
    run.metrics.reserve(static_cast<std::size_t>(cfg.steps));
    double length_total = 0.0;
    for (std::int64_t s = 0; s < cfg.steps; ++s) {
        auto r = train_step(run.policy, env, shaper, run.tracker, cfg, threads);
        run.policy = std::move(r.policy);
        run.tracker = r.tracker;
        length_total += r.metrics.mean_length;
        run.metrics.push_back(r.metrics);
    }
    if (cfg.steps > 0) run.summary.step_avg_length = length_total / static_cast<double>(cfg.steps);
    const auto ev = evaluate_policy(run.policy, env, cfg.eval_rollouts_per_bucket, cfg.seed);
    run.summary.final_length = ev.mean_length;
    run.summary.final_acc = ev.accuracy;
    run.summary.seed = cfg.seed;
    return run;
}

}  // namespace shortrl
