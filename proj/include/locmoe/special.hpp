// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Incomplete beta/gamma and error functions. Both tails of each function are
// evaluated directly (never as 1 - other) when that tail is the small one, and
// log-space variants are provided for arguments where the values underflow.

#pragma once

namespace locmoe::special {

// I_x(a, b), 0 <= x <= 1, a, b > 0.
double reg_incomplete_beta(double x, double a, double b);
// 1 - I_x(a, b) = I_{1-x}(b, a), computed without cancellation.
double reg_incomplete_beta_upper(double x, double a, double b);
// log(1 - I_x(a, b)); finite wherever the upper tail is positive.
double log_reg_incomplete_beta_upper(double x, double a, double b);

// P(s, x) = gamma(s, x) / Gamma(s) and Q(s, x) = 1 - P(s, x), s > 0, x >= 0.
double regularized_lower_gamma(double s, double x);
double regularized_upper_gamma(double s, double x);
double log_regularized_upper_gamma(double s, double x);

// Unregularized lower incomplete gamma gamma(s, x).
double lower_incomplete_gamma(double s, double x);

double erf(double x);
double erfc(double x);
// log(erfc(x)) for x >= 0, usable far past the point where erfc underflows.
double log_erfc(double x);

}  // namespace locmoe::special
