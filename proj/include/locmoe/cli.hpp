// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: capacity, verify, route-sim, train-toy, comm-sim.
// Exit codes: 0 success, 1 verification or runtime failure, 2 usage error.

#pragma once

#include <iosfwd>

namespace locmoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace locmoe::cli
