// SPDX-License-Identifier: Apache-2.0
#pragma once

/*
    shaping.hpp - length-aware reward functions for group-sampled on-policy RL.

    Every function here is pure: the output depends only on the arguments, so
    any of them can be called concurrently. Rewards follow the additive form

        final_i = task_i + alpha * R_len(i)

    for the standard, kimi, short_rl and efficient variants. The thinkprune
    variant is a transform of the task reward and ignores alpha.

    Normalized length terms use the group (or correct-subset) extremes
    l_min/l_max. Whenever l_max == l_min the normalized term is defined as 0
    and the division is never evaluated.
*/

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shortrl/types.hpp"

namespace shortrl {

enum class Variant { standard, kimi, short_rl, efficient, thinkprune };
enum class ThinkPruneMode { hard, cosine };

inline constexpr std::array<std::string_view, 5> kVariantNames = {
    "standard", "kimi", "short_rl", "efficient", "thinkprune"};

inline std::string_view to_string(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

inline std::string_view to_string(ThinkPruneMode m) {
    return m == ThinkPruneMode::hard ? "hard" : "cosine";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
    for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
        if (kVariantNames[i] == s) return static_cast<Variant>(i);
    }
    return std::nullopt;
}

inline std::optional<ThinkPruneMode> parse_thinkprune_mode(std::string_view s) {
    if (s == "hard") return ThinkPruneMode::hard;
    if (s == "cosine") return ThinkPruneMode::cosine;
    return std::nullopt;
}

inline std::string allowed_variants() {
    std::string out;
    for (auto name : kVariantNames) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

/// Which of the three lazy-penalty gates are active (short_rl only).
struct GateToggles {
    bool right = true;   // l_min/l_max over correct samples, zero for incorrect
    bool slack = true;   // constant 0.5 inside l_min + tau_len
    bool stable = true;  // honor the accuracy gate decision
};

struct ShaperConfig {
    Variant variant = Variant::short_rl;
    double alpha = 1.0;
    std::int64_t tau_len = 200;
    double tau_acc = 0.05;
    GateToggles gates{};
    double efficient_sigma = 0.05;
    bool efficient_apply_to_incorrect = false;
    std::int64_t thinkprune_limit = 1700;
    ThinkPruneMode thinkprune_mode = ThinkPruneMode::cosine;
    std::int64_t thinkprune_ramp = 500;

    /// All violated invariants, empty when the config is usable.
    [[nodiscard]] std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (!std::isfinite(alpha) || alpha < 0.0) out.emplace_back("alpha must be ≥ 0");
        if (tau_len < 0) out.emplace_back("tau_len must be ≥ 0");
        if (!(tau_acc >= 0.0 && tau_acc <= 1.0)) out.emplace_back("tau_acc must be in [0, 1]");
        if (!std::isfinite(efficient_sigma) || efficient_sigma < 0.0) {
            out.emplace_back("efficient_sigma must be ≥ 0");
        }
        if (thinkprune_limit < 1) out.emplace_back("thinkprune_limit must be ≥ 1");
        if (thinkprune_ramp < 1) out.emplace_back("thinkprune_ramp must be ≥ 1");
        if (variant == Variant::short_rl && !gates.right) {
            out.emplace_back("gate_right cannot be disabled for variant short_rl");
        }
        return out;
    }

    void validate() const {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg;
        for (const auto& s : p) {
            if (!msg.empty()) msg += "; ";
            msg += s;
        }
        throw ConfigError(msg);
    }
};

/// Shaped rewards for one group. Lists share the arity of the input group.
struct ShapedBatchResult {
    std::vector<double> final_rewards;
    std::vector<double> length_rewards;
    bool gate_open = true;
    // Diagnostics. NaN marks entries that were never evaluated.
    std::optional<std::vector<double>> lambda;
    std::optional<std::vector<double>> beta;
};

// ---------------------------------------------------------------------------
// Task reward

/// Format/outcome task reward used for math: 3, -0.5, or -3.
inline double task_reward_math(bool format_ok, bool answer_ok) noexcept {
    if (!format_ok) return -3.0;
    return answer_ok ? 3.0 : -0.5;
}

// ---------------------------------------------------------------------------
// Kimi

namespace detail {

struct Extremes {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    bool any = false;
};

template <typename Pred>
Extremes extremes(std::span<const Sample> samples, Pred keep) {
    Extremes e;
    for (const auto& s : samples) {
        if (!keep(s)) continue;
        if (!e.any) {
            e.lo = e.hi = s.length;
            e.any = true;
        } else {
            e.lo = std::min(e.lo, s.length);
            e.hi = std::max(e.hi, s.length);
        }
    }
    return e;
}

inline double lambda(std::int64_t len, const Extremes& e) {
    return 0.5 - static_cast<double>(len - e.lo) / static_cast<double>(e.hi - e.lo);
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace detail

/// Per-sample lambda over the whole group; zeros when the group is degenerate.
inline std::vector<double> kimi_lambdas(std::span<const Sample> samples) {
    const auto e = detail::extremes(samples, [](const Sample&) { return true; });
    std::vector<double> out(samples.size(), 0.0);
    if (!e.any || e.hi == e.lo) return out;
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = detail::lambda(samples[i].length, e);
    return out;
}

inline std::vector<double> kimi_length_reward(std::span<const Sample> samples) {
    auto out = kimi_lambdas(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].correct) out[i] = std::min(0.0, out[i]);
    }
    return out;
}

inline std::vector<double> kimi_length_reward(const RolloutGroup& g) {
    return kimi_length_reward(std::span<const Sample>(g.samples));
}

// ---------------------------------------------------------------------------
// Short-RL lazy length reward

struct LazyTerms {
    std::vector<double> reward;
    std::vector<double> lambda;  // NaN where not evaluated
    std::vector<double> beta;    // NaN for incorrect samples
};

/// Lazy length reward with diagnostics. Throws ConfigError when the
/// correct-subset gate is switched off.
inline LazyTerms lazy_length_terms(std::span<const Sample> samples, bool gate_open,
                                   std::int64_t tau_len, GateToggles toggles = {}) {
    if (!toggles.right) {
        throw ConfigError("gate_right cannot be disabled for variant short_rl");
    }
    if (tau_len < 0) throw ConfigError("tau_len must be ≥ 0");

    const std::size_t k = samples.size();
    LazyTerms t{std::vector<double>(k, 0.0), std::vector<double>(k, detail::nan()),
                std::vector<double>(k, detail::nan())};

    const auto e = detail::extremes(samples, [](const Sample& s) { return s.correct; });
    if (!e.any) return t;

    const std::int64_t band = toggles.slack ? tau_len : 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!samples[i].correct) continue;
        // Band test first: when l_max == l_min nothing exceeds it and lambda is never formed.
        if (samples[i].length > e.lo + band) {
            t.lambda[i] = detail::lambda(samples[i].length, e);
            t.beta[i] = t.lambda[i];
        } else {
            t.beta[i] = 0.5;
        }
    }

    const bool active = gate_open || !toggles.stable;
    if (active) {
        for (std::size_t i = 0; i < k; ++i) {
            if (samples[i].correct) t.reward[i] = t.beta[i];
        }
    }
    return t;
}

inline std::vector<double> lazy_length_reward(std::span<const Sample> samples, bool gate_open,
                                              std::int64_t tau_len, GateToggles toggles = {}) {
    return lazy_length_terms(samples, gate_open, tau_len, toggles).reward;
}

inline std::vector<double> lazy_length_reward(const RolloutGroup& g, bool gate_open,
                                              std::int64_t tau_len, GateToggles toggles = {}) {
    return lazy_length_reward(std::span<const Sample>(g.samples), gate_open, tau_len, toggles);
}

// ---------------------------------------------------------------------------
// Baselines

/// Min-max normalized linear penalty -sigma * rho_i.
inline std::vector<double> efficient_length_reward(std::span<const Sample> samples, double sigma,
                                                   bool apply_to_incorrect) {
    std::vector<double> out(samples.size(), 0.0);
    const auto e = detail::extremes(samples, [](const Sample&) { return true; });
    if (!e.any || e.hi == e.lo || sigma == 0.0) return out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].correct && !apply_to_incorrect) continue;
        const double rho = static_cast<double>(samples[i].length - e.lo) /
                           static_cast<double>(e.hi - e.lo);
        out[i] = -sigma * rho;
    }
    return out;
}

inline std::vector<double> efficient_length_reward(const RolloutGroup& g, double sigma,
                                                   bool apply_to_incorrect) {
    return efficient_length_reward(std::span<const Sample>(g.samples), sigma, apply_to_incorrect);
}

/// Final rewards (not an additive term) under a length limit on correct samples.
inline std::vector<double> thinkprune_shape(std::span<const Sample> samples, std::int64_t limit,
                                            ThinkPruneMode mode, std::int64_t ramp) {
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!s.correct || s.length <= limit) {
            out[i] = s.task_reward;
        } else if (mode == ThinkPruneMode::cosine && s.length <= limit + ramp) {
            const double phase = std::numbers::pi * static_cast<double>(s.length - limit) /
                                 static_cast<double>(ramp);
            out[i] = s.task_reward * 0.5 * (1.0 + std::cos(phase));
        } else {
            out[i] = 0.0;
        }
    }
    return out;
}

inline std::vector<double> thinkprune_shape(const RolloutGroup& g, std::int64_t limit,
                                            ThinkPruneMode mode, std::int64_t ramp) {
    return thinkprune_shape(std::span<const Sample>(g.samples), limit, mode, ramp);
}

// ---------------------------------------------------------------------------
// Dispatch

inline ShapedBatchResult shape_group(const RolloutGroup& group, const ShaperConfig& cfg,
                                     bool gate_open) {
    const std::span<const Sample> s(group.samples);
    const std::size_t k = s.size();
    ShapedBatchResult r;
    r.gate_open = gate_open;

    switch (cfg.variant) {
        case Variant::standard:
            r.length_rewards.assign(k, 0.0);
            break;
        case Variant::kimi:
            r.lambda = kimi_lambdas(s);
            r.length_rewards = kimi_length_reward(s);
            break;
        case Variant::short_rl: {
            auto t = lazy_length_terms(s, gate_open, cfg.tau_len, cfg.gates);
            r.length_rewards = std::move(t.reward);
            r.lambda = std::move(t.lambda);
            r.beta = std::move(t.beta);
            break;
        }
        case Variant::efficient:
            r.length_rewards =
                efficient_length_reward(s, cfg.efficient_sigma, cfg.efficient_apply_to_incorrect);
            break;
        case Variant::thinkprune: {
            r.final_rewards = thinkprune_shape(s, cfg.thinkprune_limit, cfg.thinkprune_mode,
                                               cfg.thinkprune_ramp);
            r.length_rewards.resize(k);
            for (std::size_t i = 0; i < k; ++i) {
                r.length_rewards[i] = r.final_rewards[i] - s[i].task_reward;
            }
            return r;
        }
    }

    r.final_rewards.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        r.final_rewards[i] = s[i].task_reward + cfg.alpha * r.length_rewards[i];
    }
    return r;
}

/// Shapes every group in order. Throws InputError on an empty batch.
inline std::vector<ShapedBatchResult> shape_batch(std::span<const RolloutGroup> groups,
                                                  const ShaperConfig& cfg, bool gate_open) {
    if (groups.empty()) throw InputError("batch has no groups");
    std::vector<ShapedBatchResult> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(shape_group(g, cfg, gate_open));
    return out;
}

}  // namespace shortrl
