// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace shortrl {

/// Bad configuration value. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input data. Maps to CLI exit code 3.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An internal invariant did not hold. Maps to CLI exit code 4.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// One rollout's observable facts.
struct Sample {
    std::int64_t length = 1;  // tokens, >= 1
    bool correct = false;
    double task_reward = 0.0;
};

/// The k samples drawn for one prompt.
struct RolloutGroup {
    std::string prompt_id;
    std::vector<Sample> samples;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
};

inline void validate_sample(const Sample& s) {
    if (s.length < 1) {
        throw InputError("sample length must be >= 1, got " + std::to_string(s.length));
    }
    if (!std::isfinite(s.task_reward)) {
        throw InputError("sample task_reward must be finite");
    }
}

inline void validate_group(const RolloutGroup& g) {
    if (g.samples.empty()) {
        throw InputError("rollout group '" + g.prompt_id + "' has no samples");
    }
    for (const auto& s : g.samples) validate_sample(s);
}

}  // namespace shortrl
