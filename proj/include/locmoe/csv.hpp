// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace locmoe::csv {

// Shortest round-trip decimal form, '.' separator, independent of locale.
std::string num(double x);
std::string num(long long x);
inline std::string num(int x) { return num(static_cast<long long>(x)); }

// Quotes a field when it contains a comma, quote or line break.
std::string field(std::string_view s);

// Joins already-formatted fields into one CRLF-free line ending in '\n'.
std::string row(const std::vector<std::string>& fields);

}  // namespace locmoe::csv
