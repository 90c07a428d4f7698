// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion. With an argument N it
// runs criterion N only. Exit status is 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "forward_oracle.hpp"
#include "locmoe/capacity.hpp"
#include "locmoe/cli.hpp"
#include "locmoe/commsim.hpp"
#include "locmoe/losses.hpp"
#include "locmoe/toymoe.hpp"
#include "locmoe/verify.hpp"

namespace fs = std::filesystem;
using namespace locmoe;

namespace {

struct Check {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Check from_suite(const std::string& name) {
    const verify::SuiteResult r = verify::run_suite(name, verify::Options{});
    return {r.passed, r.detail};
}

// Training runs on the default corpus, shared by criteria 6 and 7.
class DefaultRuns {
public:
    const TokenBatch& corpus() {
        if (!corpus_) corpus_ = make_synthetic_corpus(SyntheticCorpusConfig{});
        return *corpus_;
    }

    const TrainResult& get(const std::string& key) {
        auto it = runs_.find(key);
        if (it != runs_.end()) return it->second;
        TrainConfig cfg;
        if (key == "hash") cfg.router = RouterKind::Hash;
        if (key == "switch" || key == "switch-no-aux") cfg.router = RouterKind::Switch;
        if (key == "switch-no-aux") cfg.losses.alpha = 0.0;
        if (key == "loc") cfg.router = RouterKind::Loc;
        return runs_.emplace(key, train(corpus(), cfg)).first->second;
    }

private:
    std::optional<TokenBatch> corpus_;
    std::map<std::string, TrainResult> runs_;
};

DefaultRuns& runs() {
    static DefaultRuns r;
    return r;
}

Check criterion_p_delta() {
    const auto t0 = Clock::now();
    Check c = from_suite("p-delta-mc");
    const double s = seconds_since(t0);
    c.detail += fmt::format("; {:.1f} s (limit 30 s)", s);
    c.passed = c.passed && s < 30.0;
    return c;
}

Check criterion_toy_training() {
    const auto t0 = Clock::now();
    const double ln16 = std::log(16.0);

    const TrainResult& hash = runs().get("hash");
    double worst_spread = 0.0;
    for (const EpochSummary& s : epoch_summaries(hash.records)) {
        const auto [lo, hi] = std::minmax_element(s.counts.begin(), s.counts.end());
        double total = 0.0;
        for (int v : s.counts) total += v;
        worst_spread = std::max(worst_spread, (*hi - *lo) / (total / static_cast<double>(s.counts.size())));
    }
    const bool a = !hash.aborted && worst_spread < 0.1;

    const TrainResult& loc = runs().get("loc");
    const TrainResult& noaux = runs().get("switch-no-aux");
    const EpochSummary loc_final = epoch_summaries(loc.records).back();
    const EpochSummary sw_final = epoch_summaries(noaux.records).back();
    const int sw_unused = unused_experts(sw_final.counts);
    const bool b = !noaux.aborted && (sw_unused >= 1 || sw_final.entropy < loc_final.entropy);
    const int loc_unused = unused_experts(loc_final.counts);
    const bool c = !loc.aborted && loc_unused == 0 && loc_final.entropy >= 0.9 * ln16;

    const double s = seconds_since(t0);
    return {a && b && c && s < 120.0,
            fmt::format("(a) hash worst spread {:.4f} < 0.1 {}; (b) no-aux switch unused {}, H {:.3f} vs loc {:.3f} {}; "
                        "(c) loc unused {}, H {:.3f} >= {:.3f} {}; {:.1f} s (limit 120 s)",
                        worst_spread, a ? "ok" : "FAIL", sw_unused, sw_final.entropy, loc_final.entropy,
                        b ? "ok" : "FAIL", loc_unused, loc_final.entropy, 0.9 * ln16, c ? "ok" : "FAIL", s)};
}

Check criterion_comm_model() {
    const ClusterTopology topo;
    std::mt19937_64 gen(0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    // (a) tp = 1 equals plain, bit for bit.
    bool a = true;
    for (int k = 0; k < 50; ++k) {
        Matrix v(16, 16);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 1e6 * u(gen);
        a = a && groupwise_alltoall_cost(v, topo, 1).seconds == alltoall_cost(v, topo);
    }

    // (b) majority inter-node volume: inter pairs carry four times the intra load.
    Matrix heavy(16, 16);
    double inter = 0.0;
    for (int s = 0; s < 16; ++s) {
        for (int t = 0; t < 16; ++t) {
            heavy(s, t) = (topo.same_node(s, t) ? 2.5e5 : 1e6) * (0.5 + u(gen));
            if (!topo.same_node(s, t)) inter += heavy(s, t);
        }
    }
    const double plain = alltoall_cost(heavy, topo);
    const double grouped = groupwise_alltoall_cost(heavy, topo, 8).seconds;
    const double inter_share = inter / heavy.sum();
    const bool b = inter_share > 0.5 && grouped < plain;

    // (c) relocate remote tokens of the paired switch run onto their source node.
    const TrainResult& sw = runs().get("switch");
    const TrainResult& loc = runs().get("loc");
    RoutingOutcome moved = sw.final_outcome;
    const ExpertPlacement& placement = sw.placement;
    const SourceMap& src = sw.source_map;
    std::vector<std::vector<int>> experts_on_node(static_cast<std::size_t>(topo.n_nodes));
    for (int e = 0; e < placement.n_experts(); ++e) experts_on_node[static_cast<std::size_t>(placement.node_of(e))].push_back(e);
    std::uniform_int_distribution<int> pick_token(0, moved.n_tokens() - 1);
    double cost = alltoall_cost(build_volume_matrix(moved, placement, topo, defaults::kTokenBytes, src), topo);
    double frac = locality_fraction(moved, placement, topo, src);
    const double start_cost = cost, start_frac = frac;
    int relocations = 0, violations = 0;
    while (relocations < 100) {
        const auto m = static_cast<std::size_t>(pick_token(gen));
        const int node = topo.node_of(src.device_of_token[m]);
        if (placement.node_of(moved.expert_of_token[m]) == node) continue;
        const auto& local = experts_on_node[static_cast<std::size_t>(node)];
        moved.expert_of_token[m] = local[static_cast<std::size_t>(gen() % local.size())];
        const double next_cost = alltoall_cost(build_volume_matrix(moved, placement, topo, defaults::kTokenBytes, src), topo);
        const double next_frac = locality_fraction(moved, placement, topo, src);
        if (!(next_frac > frac) || next_cost > cost) ++violations;
        cost = next_cost;
        frac = next_frac;
        ++relocations;
    }
    const bool c = !sw.aborted && violations == 0;

    // (d) paired runs on the same corpus, seed and placement.
    const double loc_frac = locality_fraction(loc.final_outcome, loc.placement, topo, loc.source_map);
    const double sw_frac = locality_fraction(sw.final_outcome, sw.placement, topo, sw.source_map);
    const bool d = !loc.aborted && !sw.aborted && loc_frac >= sw_frac;

    return {a && b && c && d,
            fmt::format("(a) tp=1 == plain {}; (b) inter share {:.2f}, groupwise {:.3e} s < plain {:.3e} s {}; "
                        "(c) 100 relocations, locality {:.3f}->{:.3f}, cost {:.3e}->{:.3e} s, {} violations {}; "
                        "(d) loc locality {:.3f} >= switch {:.3f} {}",
                        a ? "ok" : "FAIL", inter_share, grouped, plain, b ? "ok" : "FAIL", start_frac, frac,
                        start_cost, cost, violations, c ? "ok" : "FAIL", loc_frac, sw_frac, d ? "ok" : "FAIL")};
}

int cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"locmoe"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Check criterion_determinism() {
    const fs::path root = fs::temp_directory_path() / "locmoe_acceptance_determinism";
    fs::remove_all(root);
    const std::vector<std::vector<std::string>> commands = {
        {"--seed", "7", "--out", "train.csv", "train-toy", "--router", "loc", "--epochs", "50"},
        {"--seed", "7", "--out", "switch.csv", "train-toy", "--router", "switch", "--epochs", "10"},
        {"--seed", "7", "--out", "grid.csv", "capacity", "--grid", "0.01:0.5:50", "--dim", "512", "--experts", "16"},
        {"--seed", "7", "--out", "mc.json", "capacity", "--delta", "0.05", "--dim", "1024", "--mc-samples", "200000",
         "--threads", "4"},
        {"--seed", "7", "--out", "route.csv", "route-sim", "--router", "grap", "--histograms"},
        {"--seed", "7", "--out", "comm.csv", "comm-sim", "--volumes", "from-run", "--epochs", "5"},
        {"--seed", "7", "--out", "verify.csv", "verify", "--only", "p-delta-mc", "--mc-samples", "100000"},
    };
    int files = 0;
    std::vector<std::string> problems;
    for (const char* run : {"a", "b"}) {
        fs::create_directories(root / run);
        for (auto cmd : commands) {
            cmd[3] = (root / run / cmd[3]).string();
            const int code = cli(cmd);
            if (code != cli::kExitOk) problems.push_back(fmt::format("{} exited {}", cmd[4], code));
        }
    }
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        const fs::path twin = root / "b" / entry.path().filename();
        ++files;
        if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) {
            problems.push_back(entry.path().filename().string() + " differs");
        }
    }
    const auto count_b = std::distance(fs::directory_iterator(root / "b"), fs::directory_iterator{});
    if (count_b != files) problems.push_back("artifact sets differ");
    fs::remove_all(root);
    std::string detail = fmt::format("{} commands x 2 runs, {} artifacts compared byte for byte", commands.size(), files);
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty() && files > 0, detail};
}

Check criterion_forward_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> g;
        const int n = 4 << (seed % 3);
        const int d = 64, h = 96;
        Matrix x(8, d);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(gen);
        std::vector<ExpertParams> experts;
        for (int e = 0; e < n; ++e) {
            ExpertParams p{Matrix(h, d), Matrix(d, h)};
            for (Eigen::Index k = 0; k < p.w_in.size(); ++k) p.w_in.data()[k] = 0.2 * g(gen);
            for (Eigen::Index k = 0; k < p.w_out.size(); ++k) p.w_out.data()[k] = 0.2 * g(gen);
            experts.push_back(std::move(p));
        }
        const GatingMatrix w = build_grap_weights({n, d});
        const RouteFn router = [&w](const TokenBatch& b) { return route_top1(gate_scores(b, w, 0.0)); };
        const int cap = seed % 2 ? 1 : 8;
        const MoeOutput out = moe_forward(TokenBatch::from_rows(x), router, experts, cap);
        std::vector<std::vector<double>> rows;
        for (int m = 0; m < 8; ++m) rows.emplace_back(x.row(m).begin(), x.row(m).end());
        const auto ref = oracle::forward(rows, n, experts, cap);
        for (int m = 0; m < 8; ++m) {
            for (int j = 0; j < d; ++j) {
                worst = std::max(worst, std::abs(out.y(m, j) - ref[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)]));
            }
        }
    }

    const TokenBatch batch = sample_unit_sphere({64, 256, 1});
    std::vector<double> per_token;
    for (int n : {1, 2, 4, 8, 16, 32, 64}) {
        std::vector<ExpertParams> experts(static_cast<std::size_t>(n), ExpertParams{Matrix::Ones(256, 64), Matrix::Ones(64, 256)});
        const GatingMatrix w = build_grap_weights({n, 64});
        const MoeOutput out = moe_forward(batch, [&w](const TokenBatch& b) { return route_top1(gate_scores(b, w, 0.0)); },
                                          experts, 256);
        per_token.push_back(static_cast<double>(out.flops) / static_cast<double>(out.expert_calls));
    }
    const bool flat = std::all_of(per_token.begin(), per_token.end(), [&](double f) { return f == per_token.front(); });
    return {worst <= 1e-10 && flat,
            fmt::format("max |y - oracle| = {:.2e} over 20 batches (tol 1e-10); FLOPs per served token {} for n in 1..64{}",
                        worst, per_token.front(), flat ? "" : " (varies)")};
}

struct Criterion {
    int id;
    std::string title;
    std::function<Check()> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> list = {
        {1, "p_delta near 0.3 and Monte Carlo agreement", criterion_p_delta},
        {2, "cap-area identity and erf value", [] { return from_suite("cap-identity"); }},
        {3, "capacity bound chain", [] { return from_suite("capacity-bounds"); }},
        {4, "orthogonal gating balance", [] { return from_suite("grap-balance"); }},
        {5, "loss contracts and gradients", [] { return from_suite("grad-check"); }},
        {6, "toy training load distribution", criterion_toy_training},
        {7, "communication model", criterion_comm_model},
        {8, "CLI determinism", criterion_determinism},
        {9, "forward pass oracle and FLOPs", criterion_forward_oracle},
    };
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    std::optional<int> only;
    if (argc > 2) {
        std::cerr << "usage: locmoe_acceptance [criterion]\n";
        return 2;
    }
    if (argc == 2) only = std::atoi(argv[1]);

    bool all = true;
    int ran = 0;
    for (const Criterion& c : criteria()) {
        if (only && *only != c.id) continue;
        ++ran;
        const auto t0 = Clock::now();
        Check r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, fmt::format("threw: {}", e.what())};
        }
        all = all && r.passed;
        std::cout << fmt::format("criterion {} {} {} ({:.1f} s): {}\n", c.id, r.passed ? "PASS" : "FAIL", c.title,
                                 seconds_since(t0), r.detail)
                  << std::flush;
    }
    if (ran == 0) {
        std::cerr << "no criterion " << argv[1] << "\n";
        return 2;
    }
    return all ? 0 : 1;
}
