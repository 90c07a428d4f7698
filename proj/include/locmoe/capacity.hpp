// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Expert-capacity theory for tokens uniform on the unit sphere: the
// probability p_delta that a token falls within cosine delta of a gating
// direction (both antipodal caps), the resulting capacity lower bound and its
// erfc/exp approximations, plus Monte Carlo and quadrature cross-checks.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "locmoe/router.hpp"

namespace locmoe {

struct CapacityTheoryInput {
    double delta = 0.0;  // cosine threshold in [0, 1]
    int dim = 2;
    int n_experts = 1;

    void validate() const;
};

struct CapacityTheoryResult {
    double p_delta = 0.0;
    double ec_min = 0.0;      // 1 / (n p_delta)
    double erfc_bound = 0.0;  // 1 / (n erfc(sqrt(delta^2 d / (2 - delta^2))))
    double exp_bound = 0.0;   // exp(delta^2 d / (2 - delta^2)) / n

    // Natural logs of the three capacities; finite where the values overflow.
    double log_ec_min = 0.0;
    double log_erfc_bound = 0.0;
    double log_exp_bound = 0.0;

    bool infinite = false;    // p_delta == 0: no token ever qualifies
    bool degenerate = false;  // n p_delta > 1: the probability reading is vacuous
    bool chain_applicable = false;  // d >= 256 and delta sqrt(d) >= 1
    bool exact_ge_erfc = false;
    bool erfc_gt_exp = false;
};

double p_delta(const CapacityTheoryInput& inp);
double log_p_delta(const CapacityTheoryInput& inp);
CapacityTheoryResult ec_min(const CapacityTheoryInput& inp);

// ceil(b_s * c_f / (ep * n)) and its pre-ceiling value.
double empirical_capacity_raw(int batch_size, double capacity_factor, int expert_parallel,
                              int n_experts);
int empirical_capacity(int batch_size, double capacity_factor, int expert_parallel,
                       int n_experts);

struct CapacityCurvePoint {
    double delta;
    CapacityTheoryResult result;
};

// `grid` must be strictly increasing inside (0, 1).
std::vector<CapacityCurvePoint> capacity_curve(int dim, int n_experts,
                                               std::span<const double> grid);

// Parses "lo:hi:count" into `count` evenly spaced points including both ends.
std::vector<double> parse_grid(const std::string& text);

struct SphereSampleConfig {
    int dim = 2;
    int n_samples = 1;
    std::uint64_t seed = 0;
};

// Rows are normalized Gaussian vectors; bit-identical for a fixed seed.
TokenBatch sample_unit_sphere(const SphereSampleConfig& cfg);

struct McEstimate {
    double estimate = 0.0;
    double std_err = 0.0;
    std::int64_t hits = 0;
    std::int64_t n_samples = 0;
};

// Fraction of uniform unit vectors x with |<x, u>| >= delta for a fixed unit u.
// The projection is sampled exactly: a Gaussian coordinate along u and a
// chi-square(d - 1) squared norm for the orthogonal complement. Work is split
// into fixed chunks with per-chunk seeds, so any thread count gives the same
// count.
McEstimate mc_p_delta(double delta, int dim, std::int64_t n_samples, std::uint64_t seed,
                      int n_threads = 1);

// Same estimate from full normalized d-dimensional Gaussian vectors.
McEstimate mc_p_delta_full(double delta, int dim, std::int64_t n_samples, std::uint64_t seed);

struct CapAreaCheck {
    double lhs = 0.0;  // 2 A_cap / A_total by quadrature of sin^{d-2}
    double rhs = 0.0;  // 1 - I_{delta^2}(1/2, (d-1)/2)
    double abs_err = 0.0;
};

CapAreaCheck cap_area_identity_check(double delta, int dim);

struct Histogram {
    static constexpr int kBins = 64;
    double lo = -1.0;
    double hi = 1.0;
    std::vector<std::int64_t> counts = std::vector<std::int64_t>(kBins, 0);
    std::int64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x);
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double stddev() const;
};

struct CosineHistograms {
    int n_experts = 0;
    // Token-token cosines for experts (a, b), stored at a * n + b; only a <= b filled.
    std::vector<Histogram> token_pairs;
    // Per expert i: cos(x, w_i) over tokens routed to i ...
    std::vector<Histogram> routed;
    // ... and cos(x, w_j), j != i, over the same tokens.
    std::vector<Histogram> non_routed;

    const Histogram& pair(int a, int b) const;
    // Mean cosine over diagonal (same-expert) vs off-diagonal pairs.
    double mean_diagonal() const;
    double mean_off_diagonal() const;
};

// At most `max_tokens_per_expert` tokens (first in batch order) per expert
// enter the pairwise histograms.
CosineHistograms cosine_histograms(const TokenBatch& tokens, const RoutingOutcome& outcome,
                                   const GatingMatrix& w, int max_tokens_per_expert = 256);

}  // namespace locmoe
