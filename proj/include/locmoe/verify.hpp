// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical oracle suites shared by `locmoe verify` and the acceptance runner.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace locmoe::verify {

struct Options {
    std::uint64_t seed = 0;
    std::int64_t mc_samples = 1'000'000;
    int threads = 1;
    // Test hook: the named suite perturbs its computed value so it must fail.
    std::string inject_fault;
};

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// grap-balance, p-delta-mc, cap-identity, capacity-bounds, grad-check
const std::vector<std::string>& suite_names();

// Throws std::invalid_argument for an unknown name.
SuiteResult run_suite(const std::string& name, const Options& opts);

}  // namespace locmoe::verify
