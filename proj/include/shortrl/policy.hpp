// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shortrl/types.hpp"

namespace shortrl {

/// Dense row-major matrix of doubles, rows x cols.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return data_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - hi);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

/// Categorical stopping policy: row r holds logits over step counts 1..T_max.
/// One row per difficulty bucket when difficulty is observed, a single shared
/// row otherwise.
class Policy {
public:
    Policy() = default;
    explicit Policy(Matrix logits) : logits_(std::move(logits)) { check(); }

    /// logits(r, t) = -length_bias * t, i.e. a geometric preference for short outputs.
    static Policy length_biased(std::size_t rows, std::size_t max_steps, double length_bias) {
        Matrix m(rows, max_steps);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t t = 0; t < max_steps; ++t) m(r, t) = -length_bias * static_cast<double>(t);
        }
        return Policy(std::move(m));
    }

    [[nodiscard]] std::size_t rows() const noexcept { return logits_.rows(); }
    [[nodiscard]] std::size_t max_steps() const noexcept { return logits_.cols(); }

    [[nodiscard]] const Matrix& logits() const noexcept { return logits_; }
    Matrix& logits() noexcept { return logits_; }

    [[nodiscard]] std::vector<double> probabilities(std::size_t row) const {
        return softmax(logits_.row(row));
    }

    [[nodiscard]] Matrix probability_table() const {
        Matrix p(rows(), max_steps());
        for (std::size_t r = 0; r < rows(); ++r) {
            const auto pr = probabilities(r);
            std::copy(pr.begin(), pr.end(), p.row(r).begin());
        }
        return p;
    }

    void check() const {
        for (double v : logits_.values()) {
            if (!std::isfinite(v)) throw InvariantError("policy logits must be finite");
        }
    }

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    Matrix logits_;
};

}  // namespace shortrl
