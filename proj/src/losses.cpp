// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "locmoe/router.hpp"

namespace locmoe {

void LossConfig::validate() const {
    if (!(alpha >= 0.0) || !(mu >= 0.0)) {
        throw ConfigError(fmt::format("loss: alpha ({}) and mu ({}) must be >= 0", alpha, mu));
    }
    if (!(epsilon_smooth > 0.0 && epsilon_smooth < 1.0)) {
        throw ConfigError(fmt::format("loss: epsilon_smooth must lie in (0, 1), got {}", epsilon_smooth));
    }
}

void ExpertDistribution::validate() const {
    if (probs.empty()) throw DomainError("distribution is empty");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw DomainError(fmt::format("distribution entry {} is negative", p));
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DomainError(fmt::format("distribution sums to {}, expected 1", sum));
    }
}

namespace {

void check_simplex(std::span<const double> v, const char* what) {
    double sum = 0.0;
    for (double x : v) {
        if (!(x >= 0.0)) throw DomainError(fmt::format("aux_loss: {} has negative entry {}", what, x));
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw DomainError(fmt::format("aux_loss: {} sums to {}, expected 1", what, sum));
    }
}

}  // namespace

double aux_loss(std::span<const double> f, std::span<const double> P, double alpha) {
    if (f.size() != P.size() || f.empty()) throw ConfigError("aux_loss: f and P sizes differ");
    check_simplex(f, "f");
    check_simplex(P, "P");
    double dot = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) dot += f[i] * P[i];
    return alpha * static_cast<double>(f.size()) * dot;
}

std::vector<double> aux_loss_grad(std::span<const double> f, double alpha) {
    std::vector<double> g(f.size());
    const double scale = alpha * static_cast<double>(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) g[i] = scale * f[i];
    return g;
}

ExpertDistribution make_local_target(const ExpertPlacement& placement, int source_node,
                                     double epsilon_smooth) {
    const int n = placement.n_experts();
    if (n == 0) throw ConfigError("make_local_target: empty placement");
    int local = 0;
    for (int e = 0; e < n; ++e) local += placement.node_of(e) == source_node ? 1 : 0;

    ExpertDistribution dist;
    if (local == 0 || local == n) {
        dist.probs.assign(static_cast<std::size_t>(n), 1.0 / n);
        return dist;
    }
    const double local_mass = (1.0 - epsilon_smooth) / local;
    const double remote_mass = epsilon_smooth / (n - local);
    dist.probs.resize(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e) {
        dist.probs[static_cast<std::size_t>(e)] =
            placement.node_of(e) == source_node ? local_mass : remote_mass;
    }
    return dist;
}

double locality_loss(const ExpertDistribution& current, const ExpertDistribution& local,
                     double mu) {
    if (current.size() != local.size()) throw ConfigError("locality_loss: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < current.probs.size(); ++i) {
        const double p = current.probs[i];
        const double q = local.probs[i];
        if (p <= 0.0) continue;
        if (q <= 0.0) {
            throw DomainError(fmt::format(
                "locality_loss: target has zero mass at expert {} where current has {}", i, p));
        }
        kl += p * std::log(p / q);
    }
    // Rounding can leave a tiny negative value when current == local.
    return mu * std::max(kl, 0.0);
}

std::vector<double> locality_loss_grad_logits(std::span<const double> logits,
                                              const ExpertDistribution& local, double mu) {
    if (logits.size() != local.probs.size()) throw ConfigError("locality_loss_grad: size mismatch");
    const Vector z = Eigen::Map<const Vector>(logits.data(), static_cast<Eigen::Index>(logits.size()));
    const Vector p = softmax(z);
    // d KL / d z_i = p_i (ln(p_i / q_i) - KL)
    std::vector<double> log_ratio(logits.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        log_ratio[i] = std::log(p(static_cast<Eigen::Index>(i)) / local.probs[i]);
        kl += p(static_cast<Eigen::Index>(i)) * log_ratio[i];
    }
    std::vector<double> g(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        g[i] = mu * p(static_cast<Eigen::Index>(i)) * (log_ratio[i] - kl);
    }
    return g;
}

double cross_entropy(const Matrix& logits, std::span<const int> targets) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
        throw ConfigError("cross_entropy: one target per row required");
    }
    double total = 0.0;
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        const int c = targets[static_cast<std::size_t>(t)];
        if (c < 0 || c >= logits.cols()) {
            throw ConfigError(fmt::format("cross_entropy: target {} out of range [0, {})", c, logits.cols()));
        }
        const double zmax = logits.row(t).maxCoeff();
        const double lse = zmax + std::log((logits.row(t).array() - zmax).exp().sum());
        total += lse - logits(t, c);
    }
    return total;
}

Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> targets) {
    Matrix g(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        g.row(t) = softmax(logits.row(t).transpose()).transpose();
        g(t, targets[static_cast<std::size_t>(t)]) -= 1.0;
    }
    return g;
}

LossParts task_loss(double aux, double loc, double cross) {
    if (!std::isfinite(aux) || !std::isfinite(loc) || !std::isfinite(cross)) {
        throw DomainError(fmt::format("task_loss: non-finite part (aux={}, loc={}, cross={})", aux, loc, cross));
    }
    return LossParts{aux, loc, cross, aux + loc + cross};
}

double gradient_relative_error(const ScalarFn& loss, const GradFn& grad,
                               std::span<const double> params, double step) {
    std::vector<double> x(params.begin(), params.end());
    const std::vector<double> analytic = grad(x);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double saved = x[k];
        x[k] = saved + step;
        const double up = loss(x);
        x[k] = saved - step;
        const double down = loss(x);
        x[k] = saved;
        const double numeric = (up - down) / (2.0 * step);
        diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
        a2 += analytic[k] * analytic[k];
        n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    if (denom < 1e-12) return std::sqrt(diff2);
    return std::sqrt(diff2) / denom;
}

GradCheckReport grad_check(const std::string& name, const ScalarFn& loss, const GradFn& grad,
                           std::span<const std::vector<double>> points, double step) {
    GradCheckReport report{name, 0.0, 0};
    for (const auto& p : points) {
        report.max_rel_error = std::max(report.max_rel_error, gradient_relative_error(loss, grad, p, step));
        ++report.n_points;
    }
    return report;
}

namespace {

std::vector<double> random_simplex(std::mt19937_64& gen, int n) {
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = expo(gen) + 1e-3;
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= s;
    return v;
}

}  // namespace

std::vector<GradCheckReport> check_loss_gradients(int n_points, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> pick_n(2, 16);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double alpha = 0.01;
    const double mu = 0.01;

    GradCheckReport aux{"aux_loss/P", 0.0, 0};
    GradCheckReport loc{"locality_loss/logits", 0.0, 0};
    GradCheckReport ce{"cross_entropy/logits", 0.0, 0};

    for (int k = 0; k < n_points; ++k) {
        const int n = pick_n(gen);

        // Perturbed P leaves the simplex, so skip aux_loss's input check here.
        const auto f = random_simplex(gen, n);
        const auto P = random_simplex(gen, n);
        auto aux_fn = [&](std::span<const double> p) {
            double dot = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) dot += f[i] * p[i];
            return alpha * static_cast<double>(p.size()) * dot;
        };
        auto aux_grad = [&](std::span<const double>) { return aux_loss_grad(f, alpha); };
        aux.max_rel_error = std::max(aux.max_rel_error, gradient_relative_error(aux_fn, aux_grad, P));
        ++aux.n_points;

        ExpertDistribution target{random_simplex(gen, n)};
        std::vector<double> logits(static_cast<std::size_t>(n));
        for (auto& z : logits) z = normal(gen);
        auto loc_fn = [&](std::span<const double> z) {
            const Vector zz = Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size()));
            const Vector p = softmax(zz);
            return locality_loss(ExpertDistribution{{p.data(), p.data() + p.size()}}, target, mu);
        };
        auto loc_grad = [&](std::span<const double> z) { return locality_loss_grad_logits(z, target, mu); };
        loc.max_rel_error = std::max(loc.max_rel_error, gradient_relative_error(loc_fn, loc_grad, logits));
        ++loc.n_points;

        const int T = 1 + k % 4;
        std::vector<int> targets(static_cast<std::size_t>(T));
        for (auto& t : targets) t = std::uniform_int_distribution<int>(0, n - 1)(gen);
        std::vector<double> flat(static_cast<std::size_t>(T * n));
        for (auto& z : flat) z = 2.0 * normal(gen);
        auto as_matrix = [T, n](std::span<const double> z) {
            return Matrix(Eigen::Map<const Matrix>(z.data(), T, n));
        };
        auto ce_fn = [&](std::span<const double> z) { return cross_entropy(as_matrix(z), targets); };
        auto ce_grad = [&](std::span<const double> z) {
            const Matrix g = cross_entropy_grad(as_matrix(z), targets);
            return std::vector<double>(g.data(), g.data() + g.size());
        };
        ce.max_rel_error = std::max(ce.max_rel_error, gradient_relative_error(ce_fn, ce_grad, flat));
        ++ce.n_points;
    }
    return {aux, loc, ce};
}

}  // namespace locmoe
