// SPDX-License-Identifier: Apache-2.0
#pragma once

// Batch accuracy, its running maximum, the accuracy gate, and the length
// control rate. Ordering within a training step is: evaluate the gate
// against the previous running max, shape, then update the tracker.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>

#include "shortrl/shaping.hpp"
#include "shortrl/types.hpp"

namespace shortrl {

struct AccuracyTracker {
    double acc_max = 0.0;
    std::int64_t step = 0;
    double last_acc = 0.0;

    friend bool operator==(const AccuracyTracker&, const AccuracyTracker&) = default;
};

struct GateDecision {
    bool open = true;
    double acc = 0.0;
    double acc_max_used = 0.0;
    double tau_acc = 0.0;
};

struct LengthControlStats {
    double gamma = 0.0;  // -1 when the gate is closed
    std::int64_t n_correct = 0;
    std::int64_t n_penalized = 0;
};

/// Pooled fraction of correct samples over every group of the batch.
inline double batch_accuracy(std::span<const RolloutGroup> groups) {
    std::int64_t total = 0;
    std::int64_t correct = 0;
    for (const auto& g : groups) {
        for (const auto& s : g.samples) {
            ++total;
            correct += s.correct ? 1 : 0;
        }
    }
    if (total == 0) throw InputError("batch has no samples");
    return static_cast<double>(correct) / static_cast<double>(total);
}

inline GateDecision evaluate_gate(const AccuracyTracker& tracker, double acc, double tau_acc) {
    return {acc >= tracker.acc_max - tau_acc, acc, tracker.acc_max, tau_acc};
}

[[nodiscard]] inline AccuracyTracker update_tracker(AccuracyTracker tracker, double acc) {
    tracker.acc_max = std::max(tracker.acc_max, acc);
    tracker.step += 1;
    tracker.last_acc = acc;
    return tracker;
}

/// Fraction of correct samples with R_len < 0.5. `results` must be aligned
/// with `groups` group by group and sample by sample.
inline LengthControlStats length_control_rate(std::span<const ShapedBatchResult> results,
                                              std::span<const RolloutGroup> groups,
                                              const GateDecision& gate) {
    if (results.size() != groups.size()) {
        throw InputError("length_control_rate: " + std::to_string(results.size()) +
                         " results for " + std::to_string(groups.size()) + " groups");
    }
    LengthControlStats st;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& samples = groups[g].samples;
        const auto& len = results[g].length_rewards;
        if (len.size() != samples.size()) {
            throw InputError("length_control_rate: group " + std::to_string(g) +
                             " result arity does not match its samples");
        }
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (!samples[i].correct) continue;
            ++st.n_correct;
            if (len[i] < 0.5) ++st.n_penalized;
        }
    }
    if (!gate.open) {
        st.gamma = -1.0;
    } else if (st.n_correct == 0) {
        st.gamma = 0.0;
    } else {
        st.gamma = static_cast<double>(st.n_penalized) / static_cast<double>(st.n_correct);
    }
    return st;
}

}  // namespace shortrl
