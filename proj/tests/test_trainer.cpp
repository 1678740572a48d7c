// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "checks.hpp"
#include "shortrl/policy_trainer.hpp"

using namespace shortrl;

namespace {

TrainConfig small_train(std::int64_t steps = 30) {
    TrainConfig t;
    t.prompts_per_batch = 32;
    t.rollouts_per_prompt = 8;
    t.steps = steps;
    t.eval_rollouts_per_bucket = 500;
    return t;
}

}  // namespace

TEST(Advantages, WorkedExamples) {
    EXPECT_EQ(group_advantages(std::vector{1.0, 0.0, 1.0, 0.0}, AdvantageMode::group_mean),
              (std::vector{0.5, -0.5, 0.5, -0.5}));
    EXPECT_EQ(group_advantages(std::vector{3.5, 2.5}, AdvantageMode::group_mean), (std::vector{0.5, -0.5}));
    for (auto mode : {AdvantageMode::group_mean, AdvantageMode::group_mean_std}) {
        for (double a : group_advantages(std::vector{2.0, 2.0, 2.0}, mode)) EXPECT_EQ(a, 0.0);
    }
    const auto s = group_advantages(std::vector{1.0, 0.0}, AdvantageMode::group_mean_std);
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    EXPECT_DOUBLE_EQ(s[1], -1.0);
    EXPECT_THROW(group_advantages(std::vector{1.0}, AdvantageMode::group_mean_std), ConfigError);
    EXPECT_THROW(group_advantages(std::vector<double>{}, AdvantageMode::group_mean), InputError);

    TrainConfig t;
    t.advantage_mode = AdvantageMode::group_mean_std;
    t.rollouts_per_prompt = 1;
    EXPECT_FALSE(t.problems().empty());
}

TEST(Advantages, CenteringAndShiftInvariance) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> r(2 + rng() % 10);
        for (auto& v : r) v = nd(rng);
        const auto a = group_advantages(r, AdvantageMode::group_mean);
        ASSERT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-9);
        const double c = nd(rng);
        auto shifted = r;
        for (auto& v : shifted) v += c;
        const auto b = group_advantages(shifted, AdvantageMode::group_mean);
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-9);
    }
}

TEST(TrainStep, ZeroLearningRateKeepsPolicy) {
    EnvConfig env;
    auto cfg = small_train();
    cfg.learning_rate = 0.0;
    const auto p = initial_policy(env, cfg);
    const auto r = train_step(p, env, ShaperConfig{}, AccuracyTracker{}, cfg);
    EXPECT_EQ(r.policy.logits(), p.logits());
    EXPECT_EQ(r.metrics.step, 1);
    EXPECT_TRUE(r.metrics.gate_open);
    EXPECT_GT(r.metrics.mean_length, 0.0);
}

TEST(TrainStep, OptimalDeterministicPolicyIsFixedPoint) {
    EnvConfig env;
    env.q_hi = 1.0;
    env.difficulties = {{4, 1.0}};
    Matrix logits(1, 12, -1000.0);
    logits(0, 3) = 0.0;
    const Policy p(logits);
    ShaperConfig standard;
    standard.variant = Variant::standard;
    const auto r = train_step(p, env, standard, AccuracyTracker{}, small_train());
    EXPECT_EQ(r.metrics.acc, 1.0);
    for (std::size_t g = 0; g < r.shaped.size(); ++g) {
        for (double a : group_advantages(r.shaped[g].final_rewards, AdvantageMode::group_mean)) EXPECT_EQ(a, 0.0);
    }
    EXPECT_EQ(r.policy.logits(), p.logits());
}

TEST(TrainStep, FreshTrackerOpensGate) {
    EnvConfig env;
    auto cfg = small_train();
    AccuracyTracker t;
    const auto r = train_step(initial_policy(env, cfg), env, ShaperConfig{}, t, cfg);
    EXPECT_TRUE(r.metrics.gate_open);
    EXPECT_GE(r.metrics.gamma, 0.0);
    EXPECT_EQ(r.metrics.acc_max, r.metrics.acc);
}

// Each step's gamma must come from the same gate decision that shaped it.
TEST(TrainStep, ReplayOrdering) {
    EnvConfig env;
    auto cfg = small_train();
    cfg.prompts_per_batch = 8;
    ShaperConfig shaper;
    shaper.tau_acc = 0.02;
    auto policy = initial_policy(env, cfg);
    AccuracyTracker tracker;
    int closed = 0;
    for (int s = 0; s < 60; ++s) {
        const auto r = train_step(policy, env, shaper, tracker, cfg);
        std::vector<RolloutGroup> groups;
        for (const auto& sg : r.batch) groups.push_back(sg.group);
        const auto gate = evaluate_gate(tracker, batch_accuracy(groups), shaper.tau_acc);
        ASSERT_EQ(gate.open, r.metrics.gate_open);
        const auto shaped = shape_batch(groups, shaper, gate.open);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            ASSERT_EQ(shaped[g].final_rewards, r.shaped[g].final_rewards);
        }
        ASSERT_EQ(length_control_rate(shaped, groups, gate).gamma, r.metrics.gamma);
        ASSERT_EQ(r.metrics.gamma == -1.0, !r.metrics.gate_open);
        closed += r.metrics.gate_open ? 0 : 1;
        policy = r.policy;
        tracker = r.tracker;
    }
    EXPECT_GT(closed, 0) << "replay should exercise closed steps";
}

TEST(Gradient, ConstantRewardGivesZero) {
    EnvConfig env;
    env.q_hi = 1.0;
    env.difficulties = {{1, 1.0}};
    ShaperConfig standard;
    standard.variant = Variant::standard;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    Matrix logits(1, 12);
    for (auto& v : logits.values()) v = nd(rng);
    const auto g = exact_policy_gradient(Policy(logits), env, standard, true, 2);
    for (double v : g.values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Gradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(2024);
    for (int it = 0; it < 10; ++it) {
        const auto in = checks::small_instance(rng);
        const auto r = checks::finite_difference_check(in);
        EXPECT_LT(r.rel_error, 1e-4) << "instance " << it << " norm " << r.norm;
    }
}

TEST(Gradient, SampledEstimatorIsUnbiased) {
    std::mt19937_64 rng(99);
    for (int it = 0; it < 3; ++it) {
        const auto in = checks::small_instance(rng);
        const auto r = checks::sampled_gradient_check(in, 20000, 500 + static_cast<std::uint64_t>(it));
        EXPECT_TRUE(r.ok) << "instance " << it << " worst z " << r.worst_z;
    }
}

TEST(Training, DeterministicAcrossThreadCounts) {
    EnvConfig env;
    const auto cfg = small_train(25);
    const auto a = run_training(env, cfg, ShaperConfig{}, 1);
    const auto b = run_training(env, cfg, ShaperConfig{}, 4);
    EXPECT_EQ(a.metrics, b.metrics);
    EXPECT_EQ(a.policy.logits(), b.policy.logits());
    EXPECT_EQ(a.summary.final_acc, b.summary.final_acc);

    auto other = cfg;
    other.seed = 2;
    EXPECT_NE(run_training(env, other, ShaperConfig{}).metrics, a.metrics);
}

TEST(Training, ZeroStepsEvaluatesInitialPolicy) {
    EnvConfig env;
    auto cfg = small_train(0);
    const auto r = run_training(env, cfg, ShaperConfig{});
    EXPECT_TRUE(r.metrics.empty());
    EXPECT_FALSE(r.summary.step_avg_length.has_value());
    const auto ev = evaluate_policy(initial_policy(env, cfg), env, cfg.eval_rollouts_per_bucket, cfg.seed);
    EXPECT_EQ(r.summary.final_length, ev.mean_length);
    EXPECT_EQ(r.summary.final_acc, ev.accuracy);
}

TEST(Training, RejectsInvalidConfigsTogether) {
    EnvConfig env;
    env.q_hi = 2.0;
    auto cfg = small_train();
    cfg.prompts_per_batch = 0;
    ShaperConfig s;
    s.tau_len = -1;
    try {
        run_training(env, cfg, s);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("q_hi"), std::string::npos);
        EXPECT_NE(msg.find("prompts_per_batch"), std::string::npos);
        EXPECT_NE(msg.find("tau_len"), std::string::npos);
    }
}

TEST(Training, RecordsOneMetricPerStep) {
    EnvConfig env;
    const auto r = run_training(env, small_train(12), ShaperConfig{});
    ASSERT_EQ(r.metrics.size(), 12u);
    double prev = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < r.metrics.size(); ++i) {
        EXPECT_EQ(r.metrics[i].step, static_cast<std::int64_t>(i + 1));
        EXPECT_GE(r.metrics[i].acc_max, prev);
        prev = r.metrics[i].acc_max;
        total += r.metrics[i].mean_length;
    }
    EXPECT_DOUBLE_EQ(*r.summary.step_avg_length, total / 12.0);
}
