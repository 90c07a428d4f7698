// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "locmoe/quadrature.hpp"
#include "locmoe/rng.hpp"
#include "locmoe/special.hpp"

namespace locmoe {

void CapacityTheoryInput::validate() const {
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw DomainError(fmt::format("capacity: delta must lie in [0, 1], got {}", delta));
    }
    if (dim < 2) throw DomainError(fmt::format("capacity: dim must be >= 2, got {}", dim));
    if (n_experts < 1) throw DomainError(fmt::format("capacity: n_experts must be >= 1, got {}", n_experts));
}

double p_delta(const CapacityTheoryInput& inp) {
    inp.validate();
    return special::reg_incomplete_beta_upper(inp.delta * inp.delta, 0.5, 0.5 * (inp.dim - 1));
}

double log_p_delta(const CapacityTheoryInput& inp) {
    inp.validate();
    return special::log_reg_incomplete_beta_upper(inp.delta * inp.delta, 0.5, 0.5 * (inp.dim - 1));
}

CapacityTheoryResult ec_min(const CapacityTheoryInput& inp) {
    inp.validate();
    CapacityTheoryResult r;
    const double n = inp.n_experts;
    const double d = inp.dim;
    const double d2 = inp.delta * inp.delta;
    const double z = d2 * d / (2.0 - d2);
    const double log_n = std::log(n);

    r.p_delta = p_delta(inp);
    const double log_p = log_p_delta(inp);
    r.infinite = log_p == -std::numeric_limits<double>::infinity();
    r.degenerate = n * r.p_delta > 1.0;

    r.log_ec_min = r.infinite ? std::numeric_limits<double>::infinity() : -log_n - log_p;
    r.log_erfc_bound = -log_n - special::log_erfc(std::sqrt(z));
    r.log_exp_bound = -log_n + z;
    r.ec_min = std::exp(r.log_ec_min);
    r.erfc_bound = std::exp(r.log_erfc_bound);
    r.exp_bound = std::exp(r.log_exp_bound);

    r.chain_applicable = inp.dim >= 256 && inp.delta * std::sqrt(d) >= 1.0;
    r.exact_ge_erfc = r.log_ec_min >= r.log_erfc_bound;
    r.erfc_gt_exp = r.log_erfc_bound > r.log_exp_bound;
    return r;
}

double empirical_capacity_raw(int batch_size, double capacity_factor, int expert_parallel,
                              int n_experts) {
    if (batch_size < 1 || !(capacity_factor > 0.0) || expert_parallel < 1 || n_experts < 1) {
        throw ConfigError(fmt::format(
            "empirical_capacity: all inputs must be positive (b_s={}, c_f={}, ep={}, n={})",
            batch_size, capacity_factor, expert_parallel, n_experts));
    }
    return static_cast<double>(batch_size) * capacity_factor /
           (static_cast<double>(expert_parallel) * static_cast<double>(n_experts));
}

int empirical_capacity(int batch_size, double capacity_factor, int expert_parallel, int n_experts) {
    return static_cast<int>(
        std::ceil(empirical_capacity_raw(batch_size, capacity_factor, expert_parallel, n_experts)));
}

std::vector<CapacityCurvePoint> capacity_curve(int dim, int n_experts, std::span<const double> grid) {
    std::vector<CapacityCurvePoint> out;
    out.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k] > 0.0 && grid[k] < 1.0)) {
            throw ConfigError(fmt::format("capacity_curve: grid point {} outside (0, 1)", grid[k]));
        }
        if (k > 0 && !(grid[k] > grid[k - 1])) {
            throw ConfigError("capacity_curve: grid must be strictly increasing");
        }
        out.push_back({grid[k], ec_min(CapacityTheoryInput{grid[k], dim, n_experts})});
    }
    return out;
}

std::vector<double> parse_grid(const std::string& text) {
    double lo = 0.0, hi = 0.0;
    int count = 0;
    char c1 = 0, c2 = 0;
    char trailing = 0;
    if (std::sscanf(text.c_str(), "%lf%c%lf%c%d%c", &lo, &c1, &hi, &c2, &count, &trailing) != 5 ||
        c1 != ':' || c2 != ':') {
        throw ConfigError(fmt::format("grid '{}' is not of the form lo:hi:count", text));
    }
    if (count < 1 || (count > 1 && !(hi > lo))) {
        throw ConfigError(fmt::format("grid '{}' needs count >= 1 and hi > lo", text));
    }
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        grid[static_cast<std::size_t>(k)] = count == 1 ? lo : lo + (hi - lo) * k / (count - 1);
        if (count > 1 && k == count - 1) grid[static_cast<std::size_t>(k)] = hi;
    }
    return grid;
}

TokenBatch sample_unit_sphere(const SphereSampleConfig& cfg) {
    if (cfg.dim < 2) throw DomainError(fmt::format("sample_unit_sphere: dim must be >= 2, got {}", cfg.dim));
    if (cfg.n_samples < 1) throw ConfigError("sample_unit_sphere: n_samples must be >= 1");
    std::mt19937_64 gen(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(cfg.n_samples, cfg.dim);
    for (int m = 0; m < cfg.n_samples; ++m) {
        double norm = 0.0;
        while (norm == 0.0) {
            for (int j = 0; j < cfg.dim; ++j) x(m, j) = normal(gen);
            norm = x.row(m).norm();
        }
        x.row(m) /= norm;
    }
    TokenBatch batch = TokenBatch::from_rows(std::move(x));
    batch.unit_norm = true;
    return batch;
}

namespace {

constexpr std::int64_t kMcChunk = 1 << 16;

McEstimate finish(std::int64_t hits, std::int64_t n) {
    McEstimate e;
    e.hits = hits;
    e.n_samples = n;
    e.estimate = static_cast<double>(hits) / static_cast<double>(n);
    e.std_err = std::sqrt(e.estimate * (1.0 - e.estimate) / static_cast<double>(n));
    return e;
}

std::int64_t projection_hits(double delta2, int dim, std::int64_t begin, std::int64_t end,
                             std::uint64_t chunk_seed) {
    std::mt19937_64 gen(chunk_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> half_chi2(0.5 * (dim - 1), 1.0);
    std::int64_t hits = 0;
    for (std::int64_t s = begin; s < end; ++s) {
        const double along = normal(gen);
        const double a2 = along * along;
        const double rest2 = 2.0 * half_chi2(gen);
        if (a2 >= delta2 * (a2 + rest2)) ++hits;
    }
    return hits;
}

}  // namespace

McEstimate mc_p_delta(double delta, int dim, std::int64_t n_samples, std::uint64_t seed,
                      int n_threads) {
    CapacityTheoryInput{delta, dim, 1}.validate();
    if (n_samples < 1) throw ConfigError("mc_p_delta: n_samples must be >= 1");
    const double delta2 = delta * delta;
    const std::int64_t n_chunks = (n_samples + kMcChunk - 1) / kMcChunk;
    const int workers = std::max(1, std::min<int>(n_threads, static_cast<int>(n_chunks)));
    std::vector<std::int64_t> per_worker(static_cast<std::size_t>(workers), 0);

    auto run = [&](int w) {
        for (std::int64_t c = w; c < n_chunks; c += workers) {
            const std::int64_t begin = c * kMcChunk;
            const std::int64_t end = std::min(n_samples, begin + kMcChunk);
            per_worker[static_cast<std::size_t>(w)] +=
                projection_hits(delta2, dim, begin, end, rng::derive_seed(seed, static_cast<std::uint64_t>(c)));
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    }
    std::int64_t hits = 0;
    for (auto h : per_worker) hits += h;
    return finish(hits, n_samples);
}

McEstimate mc_p_delta_full(double delta, int dim, std::int64_t n_samples, std::uint64_t seed) {
    CapacityTheoryInput{delta, dim, 1}.validate();
    if (n_samples < 1) throw ConfigError("mc_p_delta_full: n_samples must be >= 1");
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(dim));
    std::int64_t hits = 0;
    for (std::int64_t s = 0; s < n_samples; ++s) {
        double norm2 = 0.0;
        for (auto& x : v) {
            x = normal(gen);
            norm2 += x * x;
        }
        if (std::abs(v[0]) >= delta * std::sqrt(norm2)) ++hits;
    }
    return finish(hits, n_samples);
}

CapAreaCheck cap_area_identity_check(double delta, int dim) {
    if (dim < 3 || dim > 64) {
        throw DomainError(fmt::format("cap_area_identity_check: dim must lie in [3, 64], got {}", dim));
    }
    CapacityTheoryInput{delta, dim, 1}.validate();
    const int power = dim - 2;
    auto integrand = [power](double theta) { return std::pow(std::sin(theta), power); };
    const double phi = std::acos(delta);
    const double cap = integrate(integrand, 0.0, phi, 1e-15);
    const double whole = integrate(integrand, 0.0, std::numbers::pi, 1e-15);
    CapAreaCheck c;
    c.lhs = 2.0 * cap / whole;
    c.rhs = 1.0 - special::reg_incomplete_beta(delta * delta, 0.5, 0.5 * (dim - 1));
    c.abs_err = std::abs(c.lhs - c.rhs);
    return c;
}

void Histogram::add(double x) {
    int bin = static_cast<int>(std::floor((x - lo) / (hi - lo) * kBins));
    bin = std::clamp(bin, 0, kBins - 1);
    ++counts[static_cast<std::size_t>(bin)];
    ++n;
    sum += x;
    sum_sq += x * x;
}

double Histogram::stddev() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
}

const Histogram& CosineHistograms::pair(int a, int b) const {
    if (a > b) std::swap(a, b);
    return token_pairs.at(static_cast<std::size_t>(a * n_experts + b));
}

double CosineHistograms::mean_diagonal() const {
    double s = 0.0;
    std::int64_t n = 0;
    for (int i = 0; i < n_experts; ++i) {
        s += pair(i, i).sum;
        n += pair(i, i).n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

double CosineHistograms::mean_off_diagonal() const {
    double s = 0.0;
    std::int64_t n = 0;
    for (int a = 0; a < n_experts; ++a) {
        for (int b = a + 1; b < n_experts; ++b) {
            s += pair(a, b).sum;
            n += pair(a, b).n;
        }
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

CosineHistograms cosine_histograms(const TokenBatch& tokens, const RoutingOutcome& outcome,
                                   const GatingMatrix& w, int max_tokens_per_expert) {
    if (tokens.size() != outcome.n_tokens() || tokens.dim() != w.dim() ||
        outcome.n_experts() != w.n_experts()) {
        throw ConfigError("cosine_histograms: inconsistent shapes");
    }
    const int n = w.n_experts();
    CosineHistograms h;
    h.n_experts = n;
    h.token_pairs.resize(static_cast<std::size_t>(n * n));
    h.routed.resize(static_cast<std::size_t>(n));
    h.non_routed.resize(static_cast<std::size_t>(n));

    Matrix unit = tokens.tokens;
    for (Eigen::Index m = 0; m < unit.rows(); ++m) {
        const double norm = unit.row(m).norm();
        if (norm > 0.0) unit.row(m) /= norm;
    }
    Matrix wunit = w.weights;
    for (Eigen::Index i = 0; i < wunit.rows(); ++i) {
        const double norm = wunit.row(i).norm();
        if (norm > 0.0) wunit.row(i) /= norm;
    }

    std::vector<std::vector<Eigen::Index>> bucket(static_cast<std::size_t>(n));
    for (Eigen::Index m = 0; m < unit.rows(); ++m) {
        const int e = outcome.expert_of_token[static_cast<std::size_t>(m)];
        auto& b = bucket[static_cast<std::size_t>(e)];
        if (static_cast<int>(b.size()) < max_tokens_per_expert) b.push_back(m);

        const Vector cos_w = wunit * unit.row(m).transpose();
        for (int i = 0; i < n; ++i) {
            auto& hist = i == e ? h.routed : h.non_routed;
            hist[static_cast<std::size_t>(e)].add(cos_w(i));
        }
    }

    for (int a = 0; a < n; ++a) {
        const auto& ba = bucket[static_cast<std::size_t>(a)];
        for (int b = a; b < n; ++b) {
            const auto& bb = bucket[static_cast<std::size_t>(b)];
            auto& hist = h.token_pairs[static_cast<std::size_t>(a * n + b)];
            for (std::size_t i = 0; i < ba.size(); ++i) {
                const std::size_t j0 = a == b ? i + 1 : 0;
                for (std::size_t j = j0; j < bb.size(); ++j) {
                    hist.add(unit.row(ba[i]).dot(unit.row(bb[j])));
                }
            }
        }
    }
    return h;
}

}  // namespace locmoe
