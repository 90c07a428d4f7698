// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Top-1 routing over grouped-average-pooling (GrAP) gating, plus the hash
// and learned-dense (switch) baselines.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "locmoe/common.hpp"

namespace locmoe {

enum class TieBreak { lowest_index };

struct RouterConfig {
    int n_experts = 16;
    int dim = 64;
    double noise_std = 0.0;        // std of additive gating noise, 0 = deterministic
    double capacity_factor = 1.0;
    TieBreak tie_break = TieBreak::lowest_index;
    std::uint64_t noise_seed = 0;

    // Throws ConfigError unless dim is a positive multiple of n_experts.
    void validate() const;
};

// n x d fixed gating weights; row i is expert i's gating vector.
struct GatingMatrix {
    Matrix weights;

    int n_experts() const { return static_cast<int>(weights.rows()); }
    int dim() const { return static_cast<int>(weights.cols()); }
};

struct TokenBatch {
    Matrix tokens;                      // T x d
    std::vector<std::uint64_t> token_ids;
    std::vector<int> labels;            // optional, empty when unlabeled
    bool unit_norm = false;

    int size() const { return static_cast<int>(tokens.rows()); }
    int dim() const { return static_cast<int>(tokens.cols()); }

    // Wraps `tokens` with ids 0..T-1.
    static TokenBatch from_rows(Matrix tokens);
    // Throws if unit_norm is set and some row norm is off by more than 1e-9.
    void check_unit_norm() const;
};

struct RoutingOutcome {
    std::vector<int> expert_of_token;
    std::vector<double> gate_value;
    std::vector<char> dropped;
    std::vector<double> f;  // fraction of tokens assigned per expert (before drops)
    std::vector<double> P;  // mean routing probability per expert

    int n_tokens() const { return static_cast<int>(expert_of_token.size()); }
    int n_experts() const { return static_cast<int>(f.size()); }

    std::vector<int> assigned_counts() const;
    std::vector<int> served_counts() const;
    int dropped_count() const;
};

GatingMatrix build_grap_weights(const RouterConfig& cfg);

// score[m][i] = ReLU(w_i . x_m + eps_{m,i}); eps keyed by (seed, m, i).
Matrix gate_scores(const TokenBatch& x, const GatingMatrix& w, double noise_std,
                   std::uint64_t seed = 0);

// Numerically stable softmax of one score row.
Vector softmax(const Eigen::Ref<const Vector>& z);

// Softmax over each score row, argmax with lowest-index tie-break.
RoutingOutcome route_top1(const Matrix& scores);

// Per expert, tokens beyond the first `cap` in batch order are dropped.
// f and P are left as computed before dropping.
RoutingOutcome apply_capacity(RoutingOutcome outcome, int cap);

// FNV-1a 64-bit over the id's 8-byte little-endian encoding.
std::uint64_t fnv1a64(std::uint64_t id) noexcept;

RoutingOutcome hash_route(std::span<const std::uint64_t> token_ids, int n_experts);

// Dense learned gating: softmax over raw w_i . x_m (no ReLU).
RoutingOutcome switch_route(const TokenBatch& x, const Matrix& learnable_w);

// Shannon entropy (nats) of the normalized counts; 0 for an empty batch.
double assignment_entropy(std::span<const int> counts);
int unused_experts(std::span<const int> counts);

}  // namespace locmoe
