// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Load-balance, locality and classification losses with analytic gradients.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "locmoe/common.hpp"
#include "locmoe/topology.hpp"

namespace locmoe {

struct LossConfig {
    double alpha = 0.01;
    double mu = 0.01;
    double epsilon_smooth = 1e-3;

    void validate() const;
};

struct ExpertDistribution {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
    // Non-negative entries summing to 1 within 1e-9.
    void validate() const;
};

// alpha * n * sum_i f_i P_i
double aux_loss(std::span<const double> f, std::span<const double> P, double alpha);
// d aux / d P_i = alpha * n * f_i (f is held constant)
std::vector<double> aux_loss_grad(std::span<const double> f, double alpha);

// Target distribution for tokens originating on `source_node`: 1 - eps spread
// over local experts, eps over remote ones; uniform if nothing is local.
ExpertDistribution make_local_target(const ExpertPlacement& placement, int source_node,
                                     double epsilon_smooth);

// mu * KL(current || local), with 0 * ln(0 / x) = 0.
double locality_loss(const ExpertDistribution& current, const ExpertDistribution& local,
                     double mu);
// Gradient of mu * KL(softmax(logits) || local) with respect to the logits.
std::vector<double> locality_loss_grad_logits(std::span<const double> logits,
                                              const ExpertDistribution& local, double mu);

// Sum over tokens of -log softmax(logits_t)[target_t].
double cross_entropy(const Matrix& logits, std::span<const int> targets);
// Per-row softmax minus one-hot target.
Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> targets);

struct LossParts {
    double aux = 0.0;
    double loc = 0.0;
    double cross = 0.0;
    double total = 0.0;
};

LossParts task_loss(double aux, double loc, double cross);

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    int n_points = 0;

    bool passed(double rel_tol) const { return max_rel_error <= rel_tol; }
};

using ScalarFn = std::function<double(std::span<const double>)>;
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

// Central finite differences vs the analytic gradient at `params`.
// Error is ||analytic - numeric|| / max(||analytic||, ||numeric||), with an
// absolute fallback when both norms are below 1e-12.
double gradient_relative_error(const ScalarFn& loss, const GradFn& grad,
                               std::span<const double> params, double step = 1e-5);

GradCheckReport grad_check(const std::string& name, const ScalarFn& loss, const GradFn& grad,
                           std::span<const std::vector<double>> points, double step = 1e-5);

// Random-point checks for aux (w.r.t. P), locality (w.r.t. pre-softmax logits)
// and cross-entropy (w.r.t. logits).
std::vector<GradCheckReport> check_loss_gradients(int n_points, std::uint64_t seed);

}  // namespace locmoe
