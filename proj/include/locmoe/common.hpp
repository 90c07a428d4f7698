// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace locmoe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr const char* kToolVersion = "0.3.1";

// Invalid configuration (shapes, divisibility, out-of-range hyperparameters).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical domain violation (argument outside a function's support).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace locmoe
