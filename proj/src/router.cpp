// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/router.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "locmoe/rng.hpp"

namespace locmoe {

void RouterConfig::validate() const {
    if (n_experts < 1 || dim < 1) {
        throw ConfigError(fmt::format("router: n_experts ({}) and dim ({}) must be positive",
                                      n_experts, dim));
    }
    if (dim % n_experts != 0) {
        throw ConfigError(fmt::format(
            "router: dim ({}) is not a multiple of n_experts ({})", dim, n_experts));
    }
    if (!(noise_std >= 0.0)) {
        throw ConfigError(fmt::format("router: noise_std must be >= 0, got {}", noise_std));
    }
    if (!(capacity_factor > 0.0)) {
        throw ConfigError(
            fmt::format("router: capacity_factor must be > 0, got {}", capacity_factor));
    }
}

TokenBatch TokenBatch::from_rows(Matrix tokens) {
    TokenBatch batch;
    batch.token_ids.resize(static_cast<std::size_t>(tokens.rows()));
    for (std::size_t m = 0; m < batch.token_ids.size(); ++m) batch.token_ids[m] = m;
    batch.tokens = std::move(tokens);
    return batch;
}

void TokenBatch::check_unit_norm() const {
    if (!unit_norm) return;
    for (Eigen::Index m = 0; m < tokens.rows(); ++m) {
        const double norm = tokens.row(m).norm();
        if (std::abs(norm - 1.0) > 1e-9) {
            throw DomainError(fmt::format("token {} has norm {} but batch is unit_norm", m, norm));
        }
    }
}

std::vector<int> RoutingOutcome::assigned_counts() const {
    std::vector<int> counts(f.size(), 0);
    for (int e : expert_of_token) ++counts[static_cast<std::size_t>(e)];
    return counts;
}

std::vector<int> RoutingOutcome::served_counts() const {
    std::vector<int> counts(f.size(), 0);
    for (std::size_t m = 0; m < expert_of_token.size(); ++m) {
        if (!dropped[m]) ++counts[static_cast<std::size_t>(expert_of_token[m])];
    }
    return counts;
}

int RoutingOutcome::dropped_count() const {
    return static_cast<int>(std::count(dropped.begin(), dropped.end(), char{1}));
}

GatingMatrix build_grap_weights(const RouterConfig& cfg) {
    cfg.validate();
    const int n = cfg.n_experts;
    const int d = cfg.dim;
    const int block = d / n;
    GatingMatrix w{Matrix::Zero(n, d)};
    const double value = static_cast<double>(n) / static_cast<double>(d);
    for (int i = 0; i < n; ++i) {
        w.weights.row(i).segment(i * block, block).setConstant(value);
    }
    return w;
}

Matrix gate_scores(const TokenBatch& x, const GatingMatrix& w, double noise_std,
                   std::uint64_t seed) {
    if (x.dim() != w.dim()) {
        throw ConfigError(fmt::format("gate_scores: token dim {} != gating dim {}", x.dim(), w.dim()));
    }
    if (!(noise_std >= 0.0)) throw ConfigError("gate_scores: noise_std must be >= 0");
    Matrix scores = x.tokens * w.weights.transpose();
    if (noise_std > 0.0) {
        for (Eigen::Index m = 0; m < scores.rows(); ++m) {
            for (Eigen::Index i = 0; i < scores.cols(); ++i) {
                const auto key = rng::derive_seed(seed, static_cast<std::uint64_t>(m),
                                                  static_cast<std::uint64_t>(i));
                scores(m, i) += noise_std * rng::normal_at(key);
            }
        }
    }
    return scores.cwiseMax(0.0);
}

Vector softmax(const Eigen::Ref<const Vector>& z) {
    const double zmax = z.maxCoeff();
    Vector e = (z.array() - zmax).exp().matrix();
    return e / e.sum();
}

RoutingOutcome route_top1(const Matrix& scores) {
    if (!scores.allFinite()) throw DomainError("route_top1: non-finite score");
    const auto T = scores.rows();
    const auto n = scores.cols();
    RoutingOutcome out;
    out.expert_of_token.resize(static_cast<std::size_t>(T));
    out.gate_value.resize(static_cast<std::size_t>(T));
    out.dropped.assign(static_cast<std::size_t>(T), 0);
    out.f.assign(static_cast<std::size_t>(n), 0.0);
    out.P.assign(static_cast<std::size_t>(n), 0.0);

    for (Eigen::Index m = 0; m < T; ++m) {
        const Vector p = softmax(scores.row(m).transpose());
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < n; ++i) {
            if (p(i) > p(best)) best = i;  // strict: ties keep the lowest index
        }
        out.expert_of_token[static_cast<std::size_t>(m)] = static_cast<int>(best);
        out.gate_value[static_cast<std::size_t>(m)] = p(best);
        for (Eigen::Index i = 0; i < n; ++i) out.P[static_cast<std::size_t>(i)] += p(i);
    }
    if (T > 0) {
        const auto counts = out.assigned_counts();
        for (Eigen::Index i = 0; i < n; ++i) {
            out.f[static_cast<std::size_t>(i)] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / static_cast<double>(T);
            out.P[static_cast<std::size_t>(i)] /= static_cast<double>(T);
        }
    }
    return out;
}

RoutingOutcome apply_capacity(RoutingOutcome outcome, int cap) {
    if (cap < 1) throw ConfigError(fmt::format("apply_capacity: cap must be >= 1, got {}", cap));
    std::vector<int> used(outcome.f.size(), 0);
    for (std::size_t m = 0; m < outcome.expert_of_token.size(); ++m) {
        if (outcome.dropped[m]) continue;
        int& slot = used[static_cast<std::size_t>(outcome.expert_of_token[m])];
        if (slot >= cap) {
            outcome.dropped[m] = 1;
        } else {
            ++slot;
        }
    }
    return outcome;
}

std::uint64_t fnv1a64(std::uint64_t id) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int byte = 0; byte < 8; ++byte) {
        h ^= (id >> (8 * byte)) & 0xffULL;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RoutingOutcome hash_route(std::span<const std::uint64_t> token_ids, int n_experts) {
    if (n_experts < 1) throw ConfigError("hash_route: n_experts must be >= 1");
    const auto T = token_ids.size();
    const auto n = static_cast<std::size_t>(n_experts);
    RoutingOutcome out;
    out.expert_of_token.resize(T);
    out.gate_value.assign(T, 1.0);
    out.dropped.assign(T, 0);
    out.f.assign(n, 0.0);
    for (std::size_t m = 0; m < T; ++m) {
        out.expert_of_token[m] = static_cast<int>(fnv1a64(token_ids[m]) % n);
    }
    if (T > 0) {
        const auto counts = out.assigned_counts();
        for (std::size_t i = 0; i < n; ++i) {
            out.f[i] = static_cast<double>(counts[i]) / static_cast<double>(T);
        }
    }
    // Hash routing is deterministic: the routing distribution is one-hot.
    out.P = out.f;
    return out;
}

RoutingOutcome switch_route(const TokenBatch& x, const Matrix& learnable_w) {
    if (x.dim() != learnable_w.cols()) {
        throw ConfigError(fmt::format("switch_route: token dim {} != gating dim {}", x.dim(),
                                      learnable_w.cols()));
    }
    if (!learnable_w.allFinite()) throw DomainError("switch_route: non-finite gating weights");
    return route_top1(x.tokens * learnable_w.transpose());
}

double assignment_entropy(std::span<const int> counts) {
    double total = 0.0;
    for (int c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (int c : counts) {
        if (c > 0) {
            const double p = c / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

int unused_experts(std::span<const int> counts) {
    return static_cast<int>(std::count(counts.begin(), counts.end(), 0));
}

}  // namespace locmoe
