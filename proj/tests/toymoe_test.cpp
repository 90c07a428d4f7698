// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "locmoe/capacity.hpp"
#include "locmoe/toymoe.hpp"

#include "forward_oracle.hpp"

using namespace locmoe;

namespace {

std::vector<ExpertParams> random_experts(int n, int d, int h, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<ExpertParams> out;
    for (int e = 0; e < n; ++e) {
        ExpertParams p{Matrix(h, d), Matrix(d, h)};
        for (Eigen::Index k = 0; k < p.w_in.size(); ++k) p.w_in.data()[k] = g(gen);
        for (Eigen::Index k = 0; k < p.w_out.size(); ++k) p.w_out.data()[k] = g(gen);
        out.push_back(std::move(p));
    }
    return out;
}

RouteFn grap_router(int n, int d) {
    const GatingMatrix w = build_grap_weights({n, d});
    return [w](const TokenBatch& b) { return route_top1(gate_scores(b, w, 0.0)); };
}

TokenBatch small_corpus(std::uint64_t seed = 0) { return make_synthetic_corpus({2, 16, 64, 50.0, seed}); }

TrainConfig small_config(RouterKind kind) {
    TrainConfig cfg;
    cfg.router = kind;
    cfg.n_experts = 4;
    cfg.epochs = 3;
    cfg.steps_per_epoch = 4;
    cfg.topology.n_nodes = 2;
    cfg.topology.devices_per_node = 2;
    return cfg;
}

}  // namespace

TEST(Gelu, ExactNormalCdf) {
    EXPECT_EQ(gelu(0.0), 0.0);
    EXPECT_NEAR(gelu(3.0), 2.99595, 1e-5);
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int k = 0; k < 20; ++k) {
        const double x = u(gen);
        EXPECT_NEAR(gelu(x) - x * 0.5 * std::erfc(-x / std::sqrt(2.0)), 0.0, 1e-15);
        const double step = 1e-6;
        EXPECT_NEAR(gelu_grad(x), (gelu(x + step) - gelu(x - step)) / (2 * step), 1e-8);
    }
}

TEST(MoeForward, ZeroOutputWeightsLeaveOnlyDropped) {
    const TokenBatch b = sample_unit_sphere({16, 40, 2});
    auto experts = random_experts(4, 16, 32, 3);
    for (auto& e : experts) e.w_out.setZero();
    const MoeOutput out = moe_forward(b, grap_router(4, 16), experts, 6);
    ASSERT_GT(out.outcome.dropped_count(), 0);
    for (int m = 0; m < b.size(); ++m) {
        if (out.outcome.dropped[static_cast<std::size_t>(m)]) {
            EXPECT_EQ(out.y.row(m), b.tokens.row(m));
        } else {
            EXPECT_EQ(out.y.row(m).norm(), 0.0);
        }
    }
}

TEST(MoeForward, SingleExpertIsPlainFfn) {
    const TokenBatch b = sample_unit_sphere({8, 10, 4});
    const auto experts = random_experts(1, 8, 16, 5);
    const MoeOutput out = moe_forward(b, grap_router(1, 8), experts, 10);
    const Matrix u = b.tokens * experts[0].w_in.transpose();
    const Matrix ffn = u.unaryExpr([](double v) { return gelu(v); }) * experts[0].w_out.transpose();
    EXPECT_LE((out.y - ffn).cwiseAbs().maxCoeff(), 1e-14);
    for (double g : out.outcome.gate_value) EXPECT_EQ(g, 1.0);
}

TEST(MoeForward, MatchesStraightLineOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix x(8, 32);
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> g;
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(gen);
        const TokenBatch b = TokenBatch::from_rows(x);
        const auto experts = random_experts(4, 32, 48, seed + 100);
        const int cap = seed % 2 ? 2 : 8;
        const MoeOutput out = moe_forward(b, grap_router(4, 32), experts, cap);
        std::vector<std::vector<double>> rows;
        for (int m = 0; m < 8; ++m) rows.emplace_back(x.row(m).begin(), x.row(m).end());
        const auto ref = oracle::forward(rows, 4, experts, cap);
        for (int m = 0; m < 8; ++m) {
            for (int j = 0; j < 32; ++j) {
                EXPECT_NEAR(out.y(m, j), ref[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)], 1e-10);
            }
        }
    }
}

TEST(MoeForward, FlopsPerTokenIndependentOfExpertCount) {
    const TokenBatch b = sample_unit_sphere({32, 64, 6});
    for (int n : {1, 2, 4, 8, 16, 32}) {
        const MoeOutput out = moe_forward(b, grap_router(n, 32), random_experts(n, 32, 64, 7), 64);
        EXPECT_EQ(out.expert_calls, 64);
        EXPECT_EQ(out.flops, 64LL * 4 * 64 * 32) << n;
    }
}

TEST(MoeForward, DimensionMismatch) {
    const TokenBatch b = sample_unit_sphere({8, 4, 1});
    EXPECT_THROW(moe_forward(b, grap_router(2, 8), random_experts(2, 6, 4, 1), 4), ConfigError);
    EXPECT_THROW(moe_forward(b, grap_router(2, 8), random_experts(3, 8, 4, 1), 4), ConfigError);
}

TEST(Corpus, ZeroNoiseLimitIsCenters) {
    const TokenBatch c = make_synthetic_corpus({3, 16, 5, 1e14, 9});
    const TokenBatch centers = sample_unit_sphere({16, 3, 9});
    for (int m = 0; m < c.size(); ++m) {
        const int label = c.labels[static_cast<std::size_t>(m)];
        EXPECT_LE((c.tokens.row(m) - centers.tokens.row(label)).norm(), 1e-6);
    }
}

TEST(Corpus, IntraClusterCosineExceedsInter) {
    const TokenBatch c = make_synthetic_corpus({4, 64, 1000, 10.0, 0});
    EXPECT_TRUE(c.unit_norm);
    EXPECT_NO_THROW(c.check_unit_norm());
    ASSERT_EQ(c.size(), 4000);
    const Matrix g = c.tokens.topRows(400) * c.tokens.topRows(400).transpose();
    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    for (int a = 0; a < 400; ++a) {
        for (int b = a + 1; b < 400; ++b) {
            if (c.labels[static_cast<std::size_t>(a)] == c.labels[static_cast<std::size_t>(b)]) {
                intra += g(a, b);
                ++n_intra;
            } else {
                inter += g(a, b);
                ++n_inter;
            }
        }
    }
    EXPECT_GT(intra / n_intra, inter / n_inter);
}

TEST(Corpus, SeededAndValidated) {
    EXPECT_EQ(make_synthetic_corpus({4, 8, 10, 5.0, 3}).tokens, make_synthetic_corpus({4, 8, 10, 5.0, 3}).tokens);
    EXPECT_NE(make_synthetic_corpus({4, 8, 10, 5.0, 3}).tokens, make_synthetic_corpus({4, 8, 10, 5.0, 4}).tokens);
    EXPECT_THROW(make_synthetic_corpus({0, 8, 10, 5.0, 3}), ConfigError);
    EXPECT_THROW(make_synthetic_corpus({2, 8, 10, 0.0, 3}), ConfigError);
}

TEST(RouterKindNames, RoundTrip) {
    for (RouterKind k : {RouterKind::Hash, RouterKind::Switch, RouterKind::Loc}) {
        EXPECT_EQ(parse_router_kind(to_string(k)), k);
    }
    EXPECT_THROW(parse_router_kind("expert-choice"), ConfigError);
}

TEST(Train, ZeroLearningRateIsConstant) {
    const TokenBatch c = small_corpus();
    for (RouterKind k : {RouterKind::Hash, RouterKind::Switch, RouterKind::Loc}) {
        TrainConfig cfg = small_config(k);
        cfg.lr = 0.0;
        const TrainResult r = train(c, cfg);
        ASSERT_FALSE(r.aborted);
        ASSERT_EQ(r.records.size(), 12u);
        for (std::size_t i = 4; i < r.records.size(); ++i) {
            const TrainRecord& a = r.records[i];
            const TrainRecord& b = r.records[i % 4];
            EXPECT_EQ(a.counts, b.counts);
            EXPECT_EQ(a.loss.total, b.loss.total);
            EXPECT_EQ(a.locality, b.locality);
        }
    }
}

TEST(Train, RecordsAreConsistent) {
    const TokenBatch c = small_corpus();
    const TrainResult r = train(c, small_config(RouterKind::Loc));
    ASSERT_FALSE(r.aborted);
    EXPECT_LE(r.grad_check_error, 1e-4);
    int batch_total = 0;
    for (const auto& rec : r.records) {
        int sum = 0;
        for (int v : rec.counts) sum += v;
        if (rec.epoch == 0) batch_total += sum;
        double fs = 0.0;
        for (double v : rec.f) fs += v;
        EXPECT_NEAR(fs, 1.0, 1e-12);
        EXPECT_NEAR(rec.loss.total, rec.loss.aux + rec.loss.loc + rec.loss.cross, 1e-12);
        EXPECT_GE(rec.locality, 0.0);
        EXPECT_LE(rec.locality, 1.0);
    }
    EXPECT_EQ(batch_total, c.size());
    EXPECT_EQ(r.final_outcome.n_tokens(), c.size());
}

TEST(Train, DeterministicForSeed) {
    const TokenBatch c = small_corpus();
    const TrainConfig cfg = small_config(RouterKind::Switch);
    EXPECT_EQ(assignment_report(train(c, cfg).records), assignment_report(train(c, cfg).records));
    EXPECT_EQ(loss_log(train(c, cfg).records), loss_log(train(c, cfg).records));
}

TEST(Train, DivergenceAbortsWithDiagnostic) {
    const TokenBatch c = small_corpus();
    TrainConfig cfg = small_config(RouterKind::Switch);
    cfg.lr = 1e150;
    cfg.epochs = 20;
    const TrainResult r = train(c, cfg);
    ASSERT_TRUE(r.aborted);
    EXPECT_FALSE(r.abort_reason.empty());
    EXPECT_FALSE(std::isfinite(r.records.back().loss.total));
}

TEST(Train, HashCountsEvenEveryEpoch) {
    TrainConfig cfg;
    cfg.router = RouterKind::Hash;
    cfg.epochs = 5;
    const TokenBatch c = make_synthetic_corpus({4, 64, 1000, 100.0, 0});
    for (const EpochSummary& s : epoch_summaries(train(c, cfg).records)) {
        const auto [lo, hi] = std::minmax_element(s.counts.begin(), s.counts.end());
        const double mean = static_cast<double>(c.size()) / cfg.n_experts;
        EXPECT_LT((*hi - *lo) / mean, 0.1) << "epoch " << s.epoch;
    }
}

TEST(Train, LocConfigurationUsesEveryExpertAndSettles) {
    TrainConfig cfg;
    cfg.router = RouterKind::Loc;
    const TokenBatch c = make_synthetic_corpus({4, 64, 1000, 100.0, 0});
    const TrainResult r = train(c, cfg);
    ASSERT_FALSE(r.aborted);
    EXPECT_LE(r.grad_check_error, 1e-4);
    const auto epochs = epoch_summaries(r.records);
    ASSERT_EQ(epochs.size(), 50u);
    EXPECT_EQ(epochs.back().unused_fraction, 0.0);
    const double tol = 0.05 * std::log(16.0);
    for (std::size_t k = epochs.size() - 9; k < epochs.size(); ++k) {
        EXPECT_GE(epochs[k].entropy, epochs[k - 1].entropy - tol) << "epoch " << k;
    }

    const std::string csv = assignment_report(r.records);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 50 * 8);
    EXPECT_EQ(csv.rfind("epoch,step,router,entropy,unused_fraction,locality_fraction,dropped,count_0,", 0), 0u);
}

TEST(Summaries, UniformAndCollapsed) {
    TrainRecord a;
    a.counts = {5, 5, 5, 5};
    TrainRecord b = a;
    b.epoch = 1;
    b.counts = {20, 0, 0, 0};
    const auto s = epoch_summaries({a, b});
    ASSERT_EQ(s.size(), 2u);
    EXPECT_NEAR(s[0].entropy, std::log(4.0), 1e-15);
    EXPECT_EQ(s[0].unused_fraction, 0.0);
    EXPECT_EQ(s[1].entropy, 0.0);
    EXPECT_EQ(s[1].unused_fraction, 0.75);
}
