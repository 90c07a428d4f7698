// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

namespace locmoe {

// Adaptive Gauss-Kronrod (7/15) integration of a smooth integrand on [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-13, int max_depth = 50);

}  // namespace locmoe
