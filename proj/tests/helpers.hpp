// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "shortrl/types.hpp"

namespace testing_helpers {

inline shortrl::RolloutGroup group(const std::vector<std::int64_t>& len, const std::vector<int>& ok,
                                   const std::vector<double>& task = {}) {
    shortrl::RolloutGroup g;
    g.prompt_id = "p";
    for (std::size_t i = 0; i < len.size(); ++i) {
        const double r = task.empty() ? (ok[i] ? 1.0 : 0.0) : task[i];
        g.samples.push_back({len[i], ok[i] != 0, r});
    }
    return g;
}

inline shortrl::RolloutGroup from_oracle(const std::vector<oracle::S>& s) {
    shortrl::RolloutGroup g;
    for (const auto& x : s) g.samples.push_back({x.len, x.ok, x.ok ? 1.0 : 0.0});
    return g;
}

inline std::vector<oracle::S> to_oracle(const shortrl::RolloutGroup& g) {
    std::vector<oracle::S> s;
    for (const auto& x : g.samples) s.push_back({x.length, x.correct});
    return s;
}

/// Random group: k in [1, kmax], lengths in [1, lmax], math-style task rewards.
inline shortrl::RolloutGroup random_group(std::mt19937_64& rng, std::size_t kmax = 8,
                                          std::int64_t lmax = 2000) {
    std::uniform_int_distribution<std::size_t> kd(1, kmax);
    std::uniform_int_distribution<std::int64_t> ld(1, lmax);
    std::bernoulli_distribution cd(0.6);
    shortrl::RolloutGroup g;
    g.prompt_id = "r";
    const auto k = kd(rng);
    for (std::size_t i = 0; i < k; ++i) {
        const bool ok = cd(rng);
        g.samples.push_back({ld(rng), ok, ok ? 3.0 : -0.5});
    }
    return g;
}

}  // namespace testing_helpers
