// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "locmoe/capacity.hpp"
#include "locmoe/losses.hpp"
#include "locmoe/rng.hpp"
#include "locmoe/router.hpp"
#include "locmoe/special.hpp"

namespace locmoe::verify {

namespace {

bool faulty(const Options& opts, const std::string& name) { return opts.inject_fault == name; }

// Uniform unit-sphere tokens routed by GrAP: every f_i within 3 sigma of 1/n.
SuiteResult grap_balance(const Options& opts) {
    SuiteResult r{"grap-balance", true, ""};
    constexpr int kTokens = 100'000;
    const int cases[2][2] = {{64, 8}, {128, 16}};
    for (const auto& c : cases) {
        const int d = c[0], n = c[1];
        const TokenBatch x = sample_unit_sphere({d, kTokens, rng::derive_seed(opts.seed, 0x12, static_cast<std::uint64_t>(d))});
        const GatingMatrix w = build_grap_weights(RouterConfig{n, d});
        const Matrix scores = gate_scores(x, w, 0.0);
        RoutingOutcome out = route_top1(scores);
        int all_zero = 0;  // every score clipped by ReLU; the tie goes to expert 0
        for (Eigen::Index m = 0; m < scores.rows(); ++m) all_zero += scores.row(m).maxCoeff() <= 0.0;
        if (faulty(opts, r.name)) out.f[0] += 0.01;
        const double p = 1.0 / n;
        const double sigma = std::sqrt(p * (1.0 - p) / kTokens);
        double worst = 0.0;
        int worst_i = 0;
        for (int i = 0; i < n; ++i) {
            const double z = std::abs(out.f[static_cast<std::size_t>(i)] - p) / sigma;
            if (z > worst) {
                worst = z;
                worst_i = i;
            }
        }
        if (worst > 3.0) r.passed = false;
        r.detail += fmt::format("{}(d={},n={}) max|z|={:.3f} at expert {}, all-zero rows={}", r.detail.empty() ? "" : "; ", d,
                                n, worst, worst_i, all_zero);
    }
    return r;
}

// p_delta at delta = 1/sqrt(d - 3/2) lands near 0.3, and the Monte Carlo
// estimate agrees with the analytic value within 3 binomial sigma.
SuiteResult p_delta_mc(const Options& opts) {
    SuiteResult r{"p-delta-mc", true, ""};
    for (int d : {1024, 4096}) {
        const double p = p_delta({1.0 / std::sqrt(d - 1.5), d, 1});
        if (!(p >= 0.28 && p <= 0.34)) r.passed = false;
        r.detail += fmt::format("p({})={:.6f}; ", d, p);
    }
    double worst = 0.0;
    std::string worst_case;
    int k = 0;
    for (int d : {16, 64, 256, 1024, 4096}) {
        for (double s : {0.5, 1.5}) {
            const double delta = s / std::sqrt(d);
            double p = p_delta({delta, d, 1});
            const McEstimate mc = mc_p_delta(delta, d, opts.mc_samples,
                                             rng::derive_seed(opts.seed, 0x13, static_cast<std::uint64_t>(k++)), opts.threads);
            if (faulty(opts, r.name)) p += 0.01;
            const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(mc.n_samples));
            const double z = std::abs(mc.estimate - p) / sigma;
            if (z > worst) {
                worst = z;
                worst_case = fmt::format("d={} delta={:.5f}", d, delta);
            }
        }
    }
    if (worst > 3.0) r.passed = false;
    r.detail += fmt::format("10 MC cases, max|z|={:.3f} ({})", worst, worst_case);
    return r;
}

// 2 A_cap / A_total by quadrature against the incomplete-beta closed form, and
// I_{1/(d-3/2)}(1/2, (d-1)/2) ~ erf(1/sqrt 2) at d = 4096.
SuiteResult cap_identity(const Options& opts) {
    SuiteResult r{"cap-identity", true, ""};
    double worst = 0.0;
    for (int d = 3; d <= 20; ++d) {
        for (int k = 1; k <= 9; ++k) {
            const CapAreaCheck c = cap_area_identity_check(0.1 * k, d);
            double err = c.abs_err;
            if (faulty(opts, r.name)) err += 1e-5;
            worst = std::max(worst, err);
        }
    }
    if (worst > 1e-6) r.passed = false;
    constexpr int d = 4096;
    const double I = special::reg_incomplete_beta(1.0 / (d - 1.5), 0.5, (d - 1) / 2.0);
    const double target = special::erf(1.0 / std::sqrt(2.0));
    if (std::abs(I - target) > 1e-3) r.passed = false;
    r.detail = fmt::format("max identity err={:.3e} over 162 cases; I(4096)={:.6f} vs erf(1/sqrt2)={:.6f}", worst, I, target);
    return r;
}

// ec_min >= erfc form > exp form wherever d >= 256 and delta sqrt(d) >= 1.
SuiteResult capacity_bounds(const Options& opts) {
    SuiteResult r{"capacity-bounds", true, ""};
    int points = 0, first_fail = 0, second_fail = 0;
    double worst_ratio = 0.0;
    for (int d : {256, 512, 1024, 2048, 4096, 8192}) {
        for (double s : {1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0}) {
            const double delta = s / std::sqrt(d);
            if (delta >= 1.0) continue;
            CapacityTheoryResult c = ec_min({delta, d, 16});
            if (!c.chain_applicable) continue;
            if (faulty(opts, r.name)) c.erfc_gt_exp = false;
            ++points;
            if (!c.exact_ge_erfc) {
                ++first_fail;
                worst_ratio = std::max(worst_ratio, c.log_erfc_bound - c.log_ec_min);
            }
            if (!c.erfc_gt_exp) ++second_fail;
        }
    }
    r.passed = points > 0 && first_fail == 0 && second_fail == 0;
    r.detail = fmt::format("{} points; exact<erfc at {} (max erfc/exact={:.5f}); erfc<=exp at {}", points, first_fail,
                           std::exp(worst_ratio), second_fail);
    return r;
}

// Loss identities plus analytic-vs-finite-difference gradients at 100 points.
SuiteResult grad_check(const Options& opts) {
    SuiteResult r{"grad-check", true, ""};
    constexpr int n = 16;
    const std::vector<double> uniform(n, 1.0 / n);
    const double aux = aux_loss(uniform, uniform, 0.01);
    std::mt19937_64 gen(rng::derive_seed(opts.seed, 0x15));
    std::gamma_distribution<double> g(1.0, 1.0);
    ExpertDistribution D;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += D.probs.emplace_back(g(gen));
    for (auto& v : D.probs) v /= sum;
    const double kl = locality_loss(D, D, 1.0);
    if (std::abs(aux - 0.01) > 1e-12 || std::abs(kl) > 1e-12) r.passed = false;
    r.detail = fmt::format("aux(uniform)-alpha={:.1e}, loc(D,D)={:.1e}", aux - 0.01, kl);
    for (auto rep : check_loss_gradients(100, opts.seed)) {
        if (faulty(opts, r.name)) rep.max_rel_error += 1e-3;
        if (!rep.passed(1e-4)) r.passed = false;
        r.detail += fmt::format("; {} max rel err={:.2e}", rep.name, rep.max_rel_error);
    }
    return r;
}

}  // namespace

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = {"grap-balance", "p-delta-mc", "cap-identity", "capacity-bounds",
                                                   "grad-check"};
    return names;
}

SuiteResult run_suite(const std::string& name, const Options& opts) {
    if (name == "grap-balance") return grap_balance(opts);
    if (name == "p-delta-mc") return p_delta_mc(opts);
    if (name == "cap-identity") return cap_identity(opts);
    if (name == "capacity-bounds") return capacity_bounds(opts);
    if (name == "grad-check") return grad_check(opts);
    throw std::invalid_argument(fmt::format("unknown verify suite '{}'", name));
}

}  // namespace locmoe::verify
