// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "shortrl/shaping.hpp"

using namespace shortrl;
using testing_helpers::group;

namespace {

constexpr double kTol = 1e-12;

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want, double tol = kTol) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

ShaperConfig cfg_for(Variant v) {
    ShaperConfig c;
    c.variant = v;
    return c;
}

}  // namespace

TEST(TaskReward, MathRule) {
    EXPECT_EQ(task_reward_math(true, true), 3.0);
    EXPECT_EQ(task_reward_math(true, false), -0.5);
    EXPECT_EQ(task_reward_math(false, true), -3.0);
    EXPECT_EQ(task_reward_math(false, false), -3.0);
}

TEST(Kimi, WorkedExamples) {
    expect_near_all(kimi_length_reward(group({100, 200, 300, 400}, {1, 1, 0, 0})),
                    {0.5, 1.0 / 6.0, -1.0 / 6.0, -0.5});
    expect_near_all(kimi_length_reward(group({150, 150, 150}, {1, 0, 1})), {0, 0, 0});
    expect_near_all(kimi_length_reward(group({100, 400}, {0, 1})), {0, -0.5});
}

TEST(Kimi, SingleSampleUsesZeroRule) {
    expect_near_all(kimi_length_reward(group({700}, {1})), {0.0});
}

TEST(Lazy, WorkedExamples) {
    expect_near_all(lazy_length_reward(group({100, 250, 400, 50}, {1, 1, 1, 0}), true, 200),
                    {0.5, 0.5, -0.5, 0});
    expect_near_all(lazy_length_reward(group({100, 250, 400, 50}, {1, 1, 1, 0}), false, 200), {0, 0, 0, 0});
    expect_near_all(lazy_length_reward(group({10, 20, 30}, {0, 0, 0}), true, 200), {0, 0, 0});
    expect_near_all(lazy_length_reward(group({300, 300, 300}, {1, 1, 1}), true, 0), {0.5, 0.5, 0.5});
}

TEST(Lazy, EqualCorrectLengthsNeverFormLambda) {
    const auto t = lazy_length_terms(group({300, 300, 900}, {1, 1, 0}).samples, true, 0);
    expect_near_all(t.reward, {0.5, 0.5, 0.0});
    EXPECT_TRUE(std::isnan(t.lambda[0]));
    EXPECT_TRUE(std::isnan(t.lambda[1]));
    EXPECT_EQ(t.beta[0], 0.5);
}

TEST(Lazy, ToggleSemantics) {
    const auto g = group({100, 250, 400, 50}, {1, 1, 1, 0});
    // Band removed: 250 gets its lambda directly, the shortest correct sample still gets 0.5.
    expect_near_all(lazy_length_reward(g, true, 200, {true, false, true}), {0.5, 0.0, -0.5, 0.0});
    // Stable switch off: a closed gate is ignored.
    expect_near_all(lazy_length_reward(g, false, 200, {true, true, false}), {0.5, 0.5, -0.5, 0.0});
    EXPECT_THROW(lazy_length_reward(g, true, 200, {false, true, true}), ConfigError);
    EXPECT_THROW(lazy_length_reward(g, true, -1), ConfigError);
}

TEST(Efficient, WorkedExamples) {
    expect_near_all(efficient_length_reward(group({100, 400}, {1, 1}), 0.0, false), {0, 0});
    expect_near_all(efficient_length_reward(group({100, 400}, {1, 1}), 0.05, false), {0, -0.05});
    expect_near_all(efficient_length_reward(group({200, 200}, {1, 0}), 0.05, true), {0, 0});
    expect_near_all(efficient_length_reward(group({100, 400}, {1, 0}), 0.05, false), {0, 0});
    expect_near_all(efficient_length_reward(group({100, 400}, {1, 0}), 0.05, true), {0, -0.05});
}

TEST(ThinkPrune, WorkedExamples) {
    const std::int64_t limit = 1000;
    const std::int64_t ramp = 400;
    expect_near_all(thinkprune_shape(group({900}, {1}, {3.0}), limit, ThinkPruneMode::hard, ramp), {3.0});
    expect_near_all(thinkprune_shape(group({1001}, {1}, {3.0}), limit, ThinkPruneMode::hard, ramp), {0.0});
    expect_near_all(thinkprune_shape(group({1200}, {1}, {3.0}), limit, ThinkPruneMode::cosine, ramp), {1.5});
    expect_near_all(thinkprune_shape(group({1401}, {1}, {3.0}), limit, ThinkPruneMode::cosine, ramp), {0.0});
    expect_near_all(thinkprune_shape(group({5000}, {0}, {-0.5}), limit, ThinkPruneMode::hard, ramp), {-0.5});
}

TEST(ThinkPrune, IgnoresAlpha) {
    auto c = cfg_for(Variant::thinkprune);
    c.thinkprune_limit = 100;
    c.thinkprune_mode = ThinkPruneMode::hard;
    const auto g = group({50, 150}, {1, 1}, {3.0, 3.0});
    c.alpha = 1.0;
    const auto a = shape_group(g, c, true).final_rewards;
    c.alpha = 7.0;
    EXPECT_EQ(a, shape_group(g, c, true).final_rewards);
    expect_near_all(a, {3.0, 0.0});
}

TEST(ShapeBatch, WorkedExamples) {
    const std::vector<RolloutGroup> std_batch{group({10, 20}, {1, 0}, {3.0, -0.5})};
    expect_near_all(shape_batch(std_batch, cfg_for(Variant::standard), true)[0].final_rewards, {3.0, -0.5});

    const std::vector<RolloutGroup> lazy{group({100, 250, 400, 50}, {1, 1, 1, 0}, {3, 3, 3, -0.5})};
    expect_near_all(shape_batch(lazy, cfg_for(Variant::short_rl), true)[0].final_rewards,
                    {3.5, 3.5, 2.5, -0.5});

    const std::vector<RolloutGroup> kimi{group({100, 200, 300, 400}, {1, 1, 0, 0}, {3, 3, -0.5, -0.5})};
    expect_near_all(shape_batch(kimi, cfg_for(Variant::kimi), true)[0].final_rewards,
                    {3.5, 3.0 + 1.0 / 6.0, -0.5 - 1.0 / 6.0, -1.0});

    EXPECT_THROW(shape_batch(std::vector<RolloutGroup>{}, cfg_for(Variant::standard), true), InputError);
}

TEST(ShapeBatch, PreservesOrderAndArity) {
    std::mt19937_64 rng(11);
    std::vector<RolloutGroup> batch;
    for (int i = 0; i < 20; ++i) batch.push_back(testing_helpers::random_group(rng));
    for (auto v : {Variant::standard, Variant::kimi, Variant::short_rl, Variant::efficient, Variant::thinkprune}) {
        const auto out = shape_batch(batch, cfg_for(v), true);
        ASSERT_EQ(out.size(), batch.size());
        for (std::size_t g = 0; g < batch.size(); ++g) {
            EXPECT_EQ(out[g].final_rewards, shape_group(batch[g], cfg_for(v), true).final_rewards);
            EXPECT_EQ(out[g].final_rewards.size(), batch[g].size());
            EXPECT_EQ(out[g].length_rewards.size(), batch[g].size());
        }
    }
}

TEST(ShaperConfig, ProblemsAreListed) {
    ShaperConfig c;
    c.alpha = -1;
    c.tau_len = -3;
    c.tau_acc = 2;
    c.gates.right = false;
    const auto p = c.problems();
    EXPECT_EQ(p.size(), 4u);
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(parse_variant("nope"), std::nullopt);
    EXPECT_EQ(allowed_variants(), "standard, kimi, short_rl, efficient, thinkprune");
}

// Exhaustive agreement with the independent transcription, bit for bit.
TEST(BruteForce, AgreesWithTranscription) {
    std::size_t cases = 0;
    for (std::size_t k = 1; k <= 4; ++k) {
        oracle::for_each_group(k, 6, 100, [&](const std::vector<oracle::S>& s) {
            const auto g = testing_helpers::from_oracle(s);
            ASSERT_TRUE(bit_equal(kimi_length_reward(g), oracle::kimi(s)));
            for (std::int64_t tau : {0, 100, 200, 300}) {
                for (bool open : {true, false}) {
                    ASSERT_TRUE(bit_equal(lazy_length_reward(g, open, tau), oracle::lazy(s, open, tau)));
                    ASSERT_TRUE(bit_equal(lazy_length_reward(g, open, tau, {true, false, true}),
                                          oracle::lazy(s, open, tau, false, true)));
                    ASSERT_TRUE(bit_equal(lazy_length_reward(g, open, tau, {true, true, false}),
                                          oracle::lazy(s, open, tau, true, false)));
                }
            }
            ++cases;
        });
    }
    EXPECT_GE(cases, 10000u);
}

// ---------------------------------------------------------------------------
// Properties over random groups

class ShapingProperty : public ::testing::Test {
protected:
    std::mt19937_64 rng{20240601};
};

TEST_F(ShapingProperty, PermutationEquivariance) {
    for (int it = 0; it < 1000; ++it) {
        const auto g = testing_helpers::random_group(rng);
        std::vector<std::size_t> perm(g.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        RolloutGroup p = g;
        for (std::size_t i = 0; i < perm.size(); ++i) p.samples[i] = g.samples[perm[i]];
        for (auto v : {Variant::standard, Variant::kimi, Variant::short_rl, Variant::efficient,
                       Variant::thinkprune}) {
            auto c = cfg_for(v);
            c.efficient_apply_to_incorrect = (it % 2) == 0;
            const auto a = shape_group(g, c, true).final_rewards;
            const auto b = shape_group(p, c, true).final_rewards;
            for (std::size_t i = 0; i < perm.size(); ++i) ASSERT_EQ(b[i], a[perm[i]]);
        }
    }
}

TEST_F(ShapingProperty, KimiAffineInvariance) {
    // Lengths are integers, so base lengths are multiples of 1000 and the scale is
    // a = n/1000 with n in [1, 10000]; a*l + b is then an exact integer.
    std::uniform_int_distribution<std::int64_t> nd(1, 10000);
    std::uniform_int_distribution<std::int64_t> bd(0, 100);
    std::uniform_int_distribution<std::int64_t> ud(1, 40);
    for (int it = 0; it < 1000; ++it) {
        auto g = testing_helpers::random_group(rng);
        for (auto& s : g.samples) s.length = 1000 * ud(rng);
        const auto n = nd(rng);
        const auto b = bd(rng);
        RolloutGroup t = g;
        for (auto& s : t.samples) s.length = n * (s.length / 1000) + b;
        expect_near_all(kimi_lambdas(t.samples), kimi_lambdas(g.samples), 1e-9);
        expect_near_all(kimi_length_reward(t), kimi_length_reward(g), 1e-9);
    }
}

TEST_F(ShapingProperty, LazyLambdaAffineButBandIsAbsolute) {
    for (int it = 0; it < 1000; ++it) {
        const auto g = testing_helpers::random_group(rng);
        RolloutGroup t = g;
        for (auto& s : t.samples) s.length = 3 * s.length + 17;
        // tau = 0 keeps membership fixed under positive scaling, so lambdas can be compared.
        const auto a = lazy_length_terms(g.samples, true, 0);
        const auto b = lazy_length_terms(t.samples, true, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ASSERT_EQ(std::isnan(a.lambda[i]), std::isnan(b.lambda[i]));
            if (!std::isnan(a.lambda[i])) ASSERT_NEAR(a.lambda[i], b.lambda[i], 1e-9);
        }
    }
    // With an absolute band, scaling lengths moves samples out of it.
    const auto g = group({100, 250, 400}, {1, 1, 1});
    auto t = g;
    for (auto& s : t.samples) s.length *= 2;
    EXPECT_EQ(lazy_length_reward(g, true, 200)[1], 0.5);
    EXPECT_LT(lazy_length_reward(t, true, 200)[1], 0.5);
}

TEST_F(ShapingProperty, GatesAndRanges) {
    std::uniform_int_distribution<std::int64_t> td(0, 600);
    std::uniform_real_distribution<double> sd(0.0, 0.2);
    for (int it = 0; it < 1000; ++it) {
        const auto g = testing_helpers::random_group(rng);
        const auto tau = td(rng);
        const auto sigma = sd(rng);

        const auto closed = lazy_length_reward(g, false, tau);
        for (double r : closed) ASSERT_EQ(r, 0.0);

        const auto r = lazy_length_reward(g, true, tau);
        std::int64_t lo = std::numeric_limits<std::int64_t>::max();
        for (const auto& s : g.samples) {
            if (s.correct) lo = std::min(lo, s.length);
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            ASSERT_GE(r[i], -0.5);
            ASSERT_LE(r[i], 0.5);
            if (!g.samples[i].correct) ASSERT_EQ(r[i], 0.0);
            else if (g.samples[i].length <= lo + tau) ASSERT_EQ(r[i], 0.5);
        }
        // Strictly decreasing beyond the band.
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = 0; j < g.size(); ++j) {
                const auto& a = g.samples[i];
                const auto& b = g.samples[j];
                if (a.correct && b.correct && a.length > lo + tau && b.length > a.length) {
                    ASSERT_LT(r[j], r[i]);
                }
            }
        }

        for (double v : kimi_length_reward(g)) {
            ASSERT_GE(v, -0.5);
            ASSERT_LE(v, 0.5);
        }
        for (double v : efficient_length_reward(g, sigma, true)) {
            ASSERT_GE(v, -sigma);
            ASSERT_LE(v, 0.0);
        }
        const auto tp = thinkprune_shape(g, 800, ThinkPruneMode::cosine, 400);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!g.samples[i].correct) continue;
            ASSERT_GE(tp[i], 0.0);
            ASSERT_LE(tp[i], g.samples[i].task_reward);
        }
    }
}

TEST_F(ShapingProperty, AlphaLinearity) {
    for (int it = 0; it < 1000; ++it) {
        const auto g = testing_helpers::random_group(rng);
        for (auto v : {Variant::standard, Variant::kimi, Variant::short_rl, Variant::efficient}) {
            auto c = cfg_for(v);
            c.alpha = 0.75;
            const auto a = shape_group(g, c, true).final_rewards;
            c.alpha = 1.5;
            const auto b = shape_group(g, c, true).final_rewards;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double task = g.samples[i].task_reward;
                ASSERT_NEAR(b[i] - task, 2.0 * (a[i] - task), 1e-12);
            }
        }
    }
}

TEST_F(ShapingProperty, KimiIgnoresLazyKnobs) {
    for (int it = 0; it < 200; ++it) {
        const auto g = testing_helpers::random_group(rng);
        auto a = cfg_for(Variant::kimi);
        auto b = a;
        b.tau_len = 999;
        b.tau_acc = 0.7;
        b.gates = {true, false, false};
        EXPECT_EQ(shape_group(g, a, false).final_rewards, shape_group(g, b, true).final_rewards);
    }
}
