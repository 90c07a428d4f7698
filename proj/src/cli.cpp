// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "locmoe/capacity.hpp"
#include "locmoe/commsim.hpp"
#include "locmoe/csv.hpp"
#include "locmoe/rng.hpp"
#include "locmoe/router.hpp"
#include "locmoe/toymoe.hpp"
#include "locmoe/verify.hpp"

namespace locmoe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Runtime failure that still produced a diagnostic for the user.
struct RunFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --config reads JSON: top-level keys are global flags, nested objects are
// subcommand sections, e.g. {"seed": 7, "train-toy": {"epochs": 10}}.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::ParseError(fmt::format("config file is not valid JSON: {}", e.what()), kExitUsage);
        }
        if (!j.is_object()) throw CLI::ParseError("config file must hold a JSON object", kExitUsage);
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

  private:
    static json dump(const CLI::App* app, bool default_also) {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string& name = opt->get_lnames()[0];
            if (opt->get_type_size() != 0) {
                if (opt->count() > 0) {
                    j[name] = opt->results().size() == 1 ? json(opt->results()[0]) : json(opt->results());
                } else if (default_also && !opt->get_default_str().empty()) {
                    j[name] = opt->get_default_str();
                }
            } else if (opt->count() > 0 || default_also) {
                j[name] = opt->count() > 0;
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) j[sub->get_name()] = dump(sub, default_also);
        return j;
    }

    static void flatten(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto sub = parents;
                sub.push_back(key);
                flatten(value, sub, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

struct Global {
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
};

struct Artifact {
    fs::path path;
    std::string content;
};

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    p += suffix;
    return p;
}

json meta(const std::string& command, const Global& g, json config) {
    return json{{"tool", "locmoe"}, {"version", kToolVersion}, {"command", command}, {"seed", g.seed},
                {"config", std::move(config)}};
}

// Writes every artifact or none: existing files abort the batch unless --force.
void emit(const Global& g, const std::vector<Artifact>& artifacts) {
    if (!g.force) {
        for (const auto& a : artifacts) {
            if (fs::exists(a.path)) {
                throw RunFailure(fmt::format("refusing to overwrite {} (pass --force)", a.path.string()));
            }
        }
    }
    for (const auto& a : artifacts) {
        if (a.path.has_parent_path()) fs::create_directories(a.path.parent_path());
        std::ofstream f(a.path, std::ios::binary | std::ios::trunc);
        f << a.content;
        if (!f) throw RunFailure(fmt::format("cannot write {}", a.path.string()));
    }
}

// Main artifact to --out (plus sidecars) or to stdout when --out is absent.
void deliver(const Global& g, std::ostream& out, const std::string& main_content, const json& meta_json,
             std::vector<Artifact> extra = {}) {
    if (g.out.empty()) {
        out << main_content;
        return;
    }
    const fs::path path = g.out;
    std::vector<Artifact> artifacts{{path, main_content}, {with_suffix(path, ".meta.json"), meta_json.dump(2) + "\n"}};
    for (auto& a : extra) artifacts.push_back(std::move(a));
    emit(g, artifacts);
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json_result(const CapacityTheoryResult& r) {
    return json{{"p_delta", r.p_delta},
                {"ec_min", nullable(r.ec_min)},
                {"erfc_bound", nullable(r.erfc_bound)},
                {"exp_bound", nullable(r.exp_bound)},
                {"log_ec_min", nullable(r.log_ec_min)},
                {"log_erfc_bound", nullable(r.log_erfc_bound)},
                {"log_exp_bound", nullable(r.log_exp_bound)},
                {"infinite", r.infinite},
                {"degenerate", r.degenerate},
                {"chain_applicable", r.chain_applicable},
                {"exact_ge_erfc", r.exact_ge_erfc},
                {"erfc_gt_exp", r.erfc_gt_exp}};
}

json to_json_mc(const McEstimate& mc, double analytic) {
    const double sigma = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(mc.n_samples));
    return json{{"estimate", mc.estimate}, {"std_err", mc.std_err}, {"hits", mc.hits}, {"n_samples", mc.n_samples},
                {"z", sigma > 0.0 ? (mc.estimate - analytic) / sigma : 0.0}};
}

// ---- capacity ----

struct CapacityArgs {
    double delta = -1.0;
    int dim = 0;
    int experts = 16;
    std::string grid;
    std::int64_t mc_samples = 0;
    int threads = 1;
    int histogram_tokens = 0;
};

void cmd_capacity(const CapacityArgs& a, const Global& g, std::ostream& out) {
    const int modes = (a.delta >= 0.0) + !a.grid.empty() + (a.histogram_tokens > 0);
    if (modes != 1) throw ConfigError("capacity: give exactly one of --delta, --grid, --histograms");
    json cfg{{"dim", a.dim}, {"experts", a.experts}, {"mc_samples", a.mc_samples}};

    if (a.delta >= 0.0) {
        const CapacityTheoryInput inp{a.delta, a.dim, a.experts};
        const CapacityTheoryResult r = ec_min(inp);
        cfg["delta"] = a.delta;
        json j = to_json_result(r);
        j["input"] = json{{"delta", a.delta}, {"dim", a.dim}, {"experts", a.experts}};
        if (a.mc_samples > 0) {
            j["mc"] = to_json_mc(mc_p_delta(a.delta, a.dim, a.mc_samples, g.seed, a.threads), r.p_delta);
        }
        j["meta"] = meta("capacity", g, cfg);
        const std::string text = j.dump(2) + "\n";
        if (g.out.empty()) {
            out << text;
        } else {
            emit(g, {{g.out, text}});
        }
        return;
    }

    if (!a.grid.empty()) {
        const std::vector<double> grid = parse_grid(a.grid);
        cfg["grid"] = a.grid;
        std::vector<std::string> header = {"delta", "p_delta", "ec_min", "erfc_bound", "exp_bound", "log_ec_min",
                                           "log_erfc_bound", "log_exp_bound", "chain_applicable", "exact_ge_erfc",
                                           "erfc_gt_exp"};
        if (a.mc_samples > 0) {
            for (const char* h : {"mc_estimate", "mc_std_err"}) header.emplace_back(h);
        }
        std::string text = csv::row(header);
        std::uint64_t k = 0;
        for (const auto& pt : capacity_curve(a.dim, a.experts, grid)) {
            const auto& r = pt.result;
            std::vector<std::string> row = {csv::num(pt.delta), csv::num(r.p_delta), csv::num(r.ec_min),
                                            csv::num(r.erfc_bound), csv::num(r.exp_bound), csv::num(r.log_ec_min),
                                            csv::num(r.log_erfc_bound), csv::num(r.log_exp_bound),
                                            csv::num(int{r.chain_applicable}), csv::num(int{r.exact_ge_erfc}),
                                            csv::num(int{r.erfc_gt_exp})};
            if (a.mc_samples > 0) {
                const McEstimate mc = mc_p_delta(pt.delta, a.dim, a.mc_samples, rng::derive_seed(g.seed, k++), a.threads);
                row.push_back(csv::num(mc.estimate));
                row.push_back(csv::num(mc.std_err));
            }
            text += csv::row(row);
        }
        deliver(g, out, text, meta("capacity", g, cfg));
        return;
    }

    // Cosine histograms of GrAP routing over uniform unit-sphere tokens.
    cfg["histogram_tokens"] = a.histogram_tokens;
    const TokenBatch x = sample_unit_sphere({a.dim, a.histogram_tokens, g.seed});
    const GatingMatrix w = build_grap_weights(RouterConfig{a.experts, a.dim});
    const RoutingOutcome o = route_top1(gate_scores(x, w, 0.0));
    const CosineHistograms h = cosine_histograms(x, o, w);
    std::string text = csv::row({"kind", "a", "b", "bin_lo", "bin_hi", "count"});
    auto emit_hist = [&text](const std::string& kind, int a_, int b_, const Histogram& hist) {
        const double width = (hist.hi - hist.lo) / Histogram::kBins;
        for (int k = 0; k < Histogram::kBins; ++k) {
            text += csv::row({kind, csv::num(a_), csv::num(b_), csv::num(hist.lo + k * width),
                              csv::num(hist.lo + (k + 1) * width),
                              csv::num(static_cast<long long>(hist.counts[static_cast<std::size_t>(k)]))});
        }
    };
    for (int i = 0; i < a.experts; ++i) {
        for (int j = i; j < a.experts; ++j) emit_hist("token_pair", i, j, h.pair(i, j));
    }
    for (int i = 0; i < a.experts; ++i) {
        emit_hist("routed", i, i, h.routed[static_cast<std::size_t>(i)]);
        emit_hist("non_routed", i, -1, h.non_routed[static_cast<std::size_t>(i)]);
    }
    json m = meta("capacity", g, cfg);
    m["summary"] = json{{"mean_diagonal", h.mean_diagonal()}, {"mean_off_diagonal", h.mean_off_diagonal()}};
    deliver(g, out, text, m);
}

// ---- verify ----

struct VerifyArgs {
    std::vector<std::string> only;
    std::string inject_fault;
    std::int64_t mc_samples = 1'000'000;
    int threads = 1;
};

int cmd_verify(const VerifyArgs& a, const Global& g, std::ostream& out) {
    const auto& names = verify::suite_names();
    for (const auto& n : a.only) {
        if (std::find(names.begin(), names.end(), n) == names.end()) {
            throw ConfigError(fmt::format("verify: unknown suite '{}'", n));
        }
    }
    if (!a.inject_fault.empty() && std::find(names.begin(), names.end(), a.inject_fault) == names.end()) {
        throw ConfigError(fmt::format("verify: unknown suite '{}' for --inject-fault", a.inject_fault));
    }
    if (a.mc_samples < 1) throw ConfigError("verify: --mc-samples must be >= 1");
    const std::vector<std::string>& run = a.only.empty() ? names : a.only;
    const verify::Options opts{g.seed, a.mc_samples, a.threads, a.inject_fault};

    bool all = true;
    std::string table = csv::row({"suite", "status", "detail"});
    for (const auto& n : run) {
        const auto r = verify::run_suite(n, opts);
        all = all && r.passed;
        out << fmt::format("{:<16} {}  {}\n", r.name, r.passed ? "PASS" : "FAIL", r.detail);
        table += csv::row({r.name, r.passed ? "pass" : "fail", r.detail});
    }
    if (!g.out.empty()) {
        json cfg{{"only", run}, {"mc_samples", a.mc_samples}, {"inject_fault", a.inject_fault}};
        emit(g, {{g.out, table}, {with_suffix(g.out, ".meta.json"), meta("verify", g, cfg).dump(2) + "\n"}});
    }
    return all ? kExitOk : kExitFailure;
}

// ---- route-sim ----

struct RouteSimArgs {
    std::string router = "grap";
    std::string corpus = "sphere";
    int tokens = 10'000;
    int dim = 64;
    int experts = 16;
    int clusters = 4;
    double capacity_factor = 0.0;
    double noise_std = 0.0;
    bool histograms = false;
};

void cmd_route_sim(const RouteSimArgs& a, const Global& g, std::ostream& out) {
    RouterConfig rc{a.experts, a.dim};
    rc.noise_std = a.noise_std;
    rc.validate();
    if (a.tokens < 1) throw ConfigError("route-sim: --tokens must be >= 1");
    if (a.capacity_factor < 0.0) throw ConfigError("route-sim: --capacity-factor must be >= 0");

    TokenBatch x;
    if (a.corpus == "sphere") {
        x = sample_unit_sphere({a.dim, a.tokens, g.seed});
    } else if (a.corpus == "clusters") {
        if (a.clusters < 1 || a.tokens % a.clusters != 0) {
            throw ConfigError(fmt::format("route-sim: --tokens {} must be a multiple of --clusters {}", a.tokens, a.clusters));
        }
        x = make_synthetic_corpus({a.clusters, a.dim, a.tokens / a.clusters, 100.0, g.seed});
    } else {
        throw ConfigError(fmt::format("route-sim: unknown corpus '{}'", a.corpus));
    }

    GatingMatrix w;
    RoutingOutcome o;
    if (a.router == "grap") {
        w = build_grap_weights(rc);
        o = route_top1(gate_scores(x, w, a.noise_std, rng::derive_seed(g.seed, 0x7)));
    } else if (a.router == "switch") {
        std::mt19937_64 gen(rng::derive_seed(g.seed, 0x5));
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(a.dim));
        w.weights = Matrix(a.experts, a.dim);
        for (Eigen::Index i = 0; i < w.weights.size(); ++i) w.weights.data()[i] = normal(gen);
        o = switch_route(x, w.weights);
    } else if (a.router == "hash") {
        o = hash_route(x.token_ids, a.experts);
    } else {
        throw ConfigError(fmt::format("route-sim: unknown router '{}' (expected grap, switch or hash)", a.router));
    }
    if (a.histograms && a.router == "hash") throw ConfigError("route-sim: --histograms needs a gating matrix (grap or switch)");
    int cap = 0;
    if (a.capacity_factor > 0.0) {
        cap = empirical_capacity(a.tokens, a.capacity_factor, 1, a.experts);
        o = apply_capacity(std::move(o), cap);
    }

    const auto assigned = o.assigned_counts();
    const auto served = o.served_counts();
    std::string text = csv::row({"expert", "assigned", "served", "dropped", "f", "P"});
    for (int i = 0; i < a.experts; ++i) {
        const auto k = static_cast<std::size_t>(i);
        text += csv::row({csv::num(i), csv::num(assigned[k]), csv::num(served[k]), csv::num(assigned[k] - served[k]),
                          csv::num(o.f[k]), csv::num(o.P[k])});
    }
    json cfg{{"router", a.router}, {"corpus", a.corpus}, {"tokens", a.tokens}, {"dim", a.dim}, {"experts", a.experts},
             {"clusters", a.clusters}, {"capacity_factor", a.capacity_factor}, {"capacity", cap},
             {"noise_std", a.noise_std}};
    json m = meta("route-sim", g, cfg);
    m["summary"] = json{{"entropy", assignment_entropy(assigned)}, {"unused_experts", unused_experts(assigned)},
                        {"dropped", o.dropped_count()}};

    std::vector<Artifact> extra;
    if (a.histograms) {
        if (g.out.empty()) throw ConfigError("route-sim: --histograms needs --out");
        const CosineHistograms h = cosine_histograms(x, o, w);
        std::string hist = csv::row({"a", "b", "n", "mean", "stddev"});
        for (int i = 0; i < a.experts; ++i) {
            for (int j = i; j < a.experts; ++j) {
                const Histogram& p = h.pair(i, j);
                hist += csv::row({csv::num(i), csv::num(j), csv::num(static_cast<long long>(p.n)), csv::num(p.mean()),
                                  csv::num(p.stddev())});
            }
        }
        m["summary"]["mean_diagonal_cosine"] = h.mean_diagonal();
        m["summary"]["mean_off_diagonal_cosine"] = h.mean_off_diagonal();
        extra.push_back({with_suffix(g.out, ".cosines.csv"), hist});
    }
    deliver(g, out, text, m, std::move(extra));
}

// ---- train-toy ----

struct ToyArgs {
    std::string router = "loc";
    int epochs = 50;
    int steps = 8;
    double lr = 0.01;
    double router_lr_scale = 2000.0;
    double alpha = 0.01;
    double mu = 0.01;
    int clusters = 4;
    int tokens_per_cluster = 1000;
    double concentration = 100.0;
    int dim = 64;
    int experts = 16;
    int nodes = 2;
    int devices_per_node = 8;
    double capacity_factor = 1.25;
};

SyntheticCorpusConfig corpus_config(const ToyArgs& a, std::uint64_t seed) {
    return {a.clusters, a.dim, a.tokens_per_cluster, a.concentration, seed};
}

TrainConfig train_config(const ToyArgs& a, RouterKind kind, std::uint64_t seed, const ClusterTopology& topo) {
    TrainConfig c;
    c.router = kind;
    c.n_experts = a.experts;
    c.epochs = a.epochs;
    c.steps_per_epoch = a.steps;
    c.lr = a.lr;
    c.router_lr_scale = a.router_lr_scale;
    c.capacity_factor = a.capacity_factor;
    c.losses.alpha = a.alpha;
    c.losses.mu = a.mu;
    c.topology = topo;
    c.seed = seed;
    return c;
}

json toy_json(const ToyArgs& a) {
    return json{{"router", a.router}, {"epochs", a.epochs}, {"steps", a.steps}, {"lr", a.lr},
                {"router_lr_scale", a.router_lr_scale}, {"alpha", a.alpha}, {"mu", a.mu},
                {"clusters", a.clusters}, {"tokens_per_cluster", a.tokens_per_cluster},
                {"concentration", a.concentration}, {"dim", a.dim}, {"experts", a.experts}, {"nodes", a.nodes},
                {"devices_per_node", a.devices_per_node}, {"capacity_factor", a.capacity_factor}};
}

json summary_json(const TrainResult& r) {
    json j{{"grad_check_max_rel_error", r.grad_check_error}, {"aborted", r.aborted}};
    if (r.aborted) j["abort_reason"] = r.abort_reason;
    const auto s = epoch_summaries(r.records);
    if (!s.empty()) {
        j["final_entropy"] = s.back().entropy;
        j["final_unused_fraction"] = s.back().unused_fraction;
        j["final_locality"] = s.back().locality;
    }
    return j;
}

int cmd_train_toy(const ToyArgs& a, const Global& g, std::ostream& out, std::ostream& err) {
    ClusterTopology topo;
    topo.n_nodes = a.nodes;
    topo.devices_per_node = a.devices_per_node;
    const RouterKind kind = parse_router_kind(a.router);
    const TokenBatch corpus = make_synthetic_corpus(corpus_config(a, g.seed));
    const TrainResult r = train(corpus, train_config(a, kind, g.seed, topo));

    json m = meta("train-toy", g, toy_json(a));
    m["summary"] = summary_json(r);
    const std::string report = assignment_report(r.records);
    if (g.out.empty()) {
        out << report;
    } else {
        deliver(g, out, report, m, {{with_suffix(g.out, ".losses.csv"), loss_log(r.records)}});
    }
    if (r.aborted) {
        err << "train-toy: aborted: " << r.abort_reason << "\n";
        return kExitFailure;
    }
    if (!(r.grad_check_error <= 1e-4)) {
        err << fmt::format("train-toy: gradient check failed (max rel err {:.3e})\n", r.grad_check_error);
        return kExitFailure;
    }
    return kExitOk;
}

// ---- comm-sim ----

struct CommArgs {
    std::string topology;
    std::string placement;
    std::string volumes = "from-run";
    int tp_group = defaults::kTpGroup;
    double overlap = defaults::kOverlapRatio;
    double token_bytes = defaults::kTokenBytes;
    ToyArgs toy;
};

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(fmt::format("cannot open {}", path));
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

Matrix read_volume_csv(const std::string& path, int n_devices) {
    std::ifstream f(path);
    if (!f) throw ConfigError(fmt::format("cannot open {}", path));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw ConfigError(fmt::format("{}: non-numeric volume '{}'", path, cell));
            }
        }
        rows.push_back(std::move(row));
    }
    if (static_cast<int>(rows.size()) != n_devices) {
        throw ConfigError(fmt::format("{}: expected {} rows, got {}", path, n_devices, rows.size()));
    }
    Matrix v(n_devices, n_devices);
    for (int s = 0; s < n_devices; ++s) {
        const auto& row = rows[static_cast<std::size_t>(s)];
        if (static_cast<int>(row.size()) != n_devices) {
            throw ConfigError(fmt::format("{}: row {} has {} entries, expected {}", path, s, row.size(), n_devices));
        }
        for (int t = 0; t < n_devices; ++t) {
            if (!(row[static_cast<std::size_t>(t)] >= 0.0)) throw ConfigError(fmt::format("{}: negative volume", path));
            v(s, t) = row[static_cast<std::size_t>(t)];
        }
    }
    return v;
}

int cmd_comm_sim(const CommArgs& a, const Global& g, std::ostream& out, std::ostream& err) {
    ClusterTopology topo;
    if (!a.topology.empty()) topo = read_json_file(a.topology).get<ClusterTopology>();
    topo.validate();
    CommSimConfig cfg;
    cfg.topology = topo;
    cfg.tp_group = a.tp_group;
    cfg.overlap_ratio = a.overlap;
    cfg.token_bytes = a.token_bytes;
    if (!(a.token_bytes > 0.0)) throw ConfigError("comm-sim: --token-bytes must be > 0");
    if (!(a.overlap >= 0.0 && a.overlap <= 1.0)) throw ConfigError("comm-sim: --overlap must lie in [0, 1]");
    if (a.tp_group < 1 || topo.devices_per_node % a.tp_group != 0) {
        throw ConfigError(fmt::format("comm-sim: --tp-group {} must divide devices_per_node {}", a.tp_group,
                                      topo.devices_per_node));
    }

    json config{{"topology", topo}, {"tp_group", a.tp_group}, {"overlap", a.overlap}, {"token_bytes", a.token_bytes},
                {"volumes", a.volumes}};

    if (a.volumes != "from-run") {
        const Matrix v = read_volume_csv(a.volumes, topo.n_devices());
        const double plain = alltoall_cost(v, topo);
        const GroupwiseCost gw = groupwise_alltoall_cost(v, topo, a.tp_group);
        std::string text = csv::row({"total_bytes", "plain_seconds", "groupwise_seconds", "alltoall_phase_seconds",
                                     "allgather_phase_seconds", "dispatched_bytes", "replicated_bytes"});
        text += csv::row({csv::num(v.sum()), csv::num(plain), csv::num(gw.seconds), csv::num(gw.alltoall_seconds),
                          csv::num(gw.allgather_seconds), csv::num(gw.plan.dispatched_bytes),
                          csv::num(gw.plan.replicated_bytes)});
        deliver(g, out, text, meta("comm-sim", g, config));
        return kExitOk;
    }

    ToyArgs toy = a.toy;
    toy.nodes = topo.n_nodes;
    toy.devices_per_node = topo.devices_per_node;
    config["train"] = toy_json(toy);
    config["train"].erase("router");

    ExpertPlacement placement = ExpertPlacement::round_robin(toy.experts, topo);
    if (!a.placement.empty()) placement = read_json_file(a.placement).get<ExpertPlacement>();
    placement.validate(topo);
    if (placement.n_experts() != toy.experts) {
        throw ConfigError(fmt::format("comm-sim: placement has {} experts, --experts is {}", placement.n_experts(),
                                      toy.experts));
    }
    config["placement"] = placement;

    const TokenBatch corpus = make_synthetic_corpus(corpus_config(toy, g.seed));
    std::vector<NamedOutcome> runs;
    json summaries = json::object();
    bool ok = true;
    for (RouterKind kind : {RouterKind::Hash, RouterKind::Switch, RouterKind::Loc}) {
        TrainConfig tc = train_config(toy, kind, g.seed, topo);
        tc.placement = placement;
        const TrainResult r = train(corpus, tc);
        summaries[to_string(kind)] = summary_json(r);
        if (r.aborted) {
            err << fmt::format("comm-sim: {} run aborted: {}\n", to_string(kind), r.abort_reason);
            ok = false;
            continue;
        }
        runs.push_back({to_string(kind), r.final_outcome});
    }
    if (!ok) return kExitFailure;
    const SourceMap map = default_source_map(corpus, topo);
    const auto rows = compare_strategies(runs, placement, map, cfg);
    json m = meta("comm-sim", g, config);
    m["runs"] = summaries;
    deliver(g, out, strategies_csv(rows), m);
    return kExitOk;
}

void add_toy_flags(CLI::App* sub, ToyArgs& t, bool with_router) {
    if (with_router) {
        sub->add_option("--router", t.router, "hash, switch or loc")
            ->check(CLI::IsMember({"hash", "switch", "loc"}))
            ->capture_default_str();
    }
    sub->add_option("--epochs", t.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--steps", t.steps, "gradient steps per epoch")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--lr", t.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--router-lr-scale", t.router_lr_scale, "router step is lr times this")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--alpha", t.alpha, "auxiliary loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--mu", t.mu, "locality loss weight")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--clusters", t.clusters)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--tokens-per-cluster", t.tokens_per_cluster)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--concentration", t.concentration)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--dim", t.dim)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--experts", t.experts)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--capacity-factor", t.capacity_factor)->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"LocMoE routing, capacity and communication lab", "locmoe"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with flag values; command-line flags win");

    Global g;
    app.add_option("--seed", g.seed, "RNG seed")->capture_default_str();
    app.add_option("--out", g.out, "output file (sidecars are written next to it)");
    app.add_flag("--force", g.force, "overwrite existing outputs");

    CapacityArgs cap;
    auto* c = app.add_subcommand("capacity", "p_delta, ec_min and the bound chain");
    c->add_option("--delta", cap.delta, "cosine threshold")->check(CLI::Range(0.0, 1.0));
    c->add_option("--dim", cap.dim, "token dimension")->required()->check(CLI::Range(2, 1 << 24));
    c->add_option("--experts", cap.experts)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--grid", cap.grid, "lo:hi:count delta grid, CSV output");
    c->add_option("--mc-samples", cap.mc_samples, "Monte Carlo samples (0 = none)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    c->add_option("--threads", cap.threads)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--histograms", cap.histogram_tokens, "uniform tokens for GrAP cosine histograms (CSV)")
        ->check(CLI::PositiveNumber);

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify", "run the numerical oracle suites");
    v->add_option("--only", ver.only, "suite name (repeatable)");
    v->add_option("--inject-fault", ver.inject_fault, "test hook: perturb one suite so it fails");
    v->add_option("--mc-samples", ver.mc_samples)->capture_default_str();
    v->add_option("--threads", ver.threads)->check(CLI::PositiveNumber)->capture_default_str();

    RouteSimArgs rs;
    auto* r = app.add_subcommand("route-sim", "route a synthetic batch once and report per-expert load");
    r->add_option("--router", rs.router)->check(CLI::IsMember({"grap", "switch", "hash"}))->capture_default_str();
    r->add_option("--corpus", rs.corpus)->check(CLI::IsMember({"sphere", "clusters"}))->capture_default_str();
    r->add_option("--tokens", rs.tokens)->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--dim", rs.dim)->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--experts", rs.experts)->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--clusters", rs.clusters)->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--capacity-factor", rs.capacity_factor, "0 disables capacity")->capture_default_str();
    r->add_option("--noise-std", rs.noise_std)->check(CLI::NonNegativeNumber)->capture_default_str();
    r->add_flag("--histograms", rs.histograms, "write <stem>.cosines.csv");

    ToyArgs toy;
    auto* t = app.add_subcommand("train-toy", "train the toy MoE layer and log assignments");
    add_toy_flags(t, toy, true);
    t->add_option("--nodes", toy.nodes)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--devices-per-node", toy.devices_per_node)->check(CLI::PositiveNumber)->capture_default_str();

    CommArgs comm;
    auto* cs = app.add_subcommand("comm-sim", "model All-to-All cost per routing strategy");
    cs->add_option("--topology", comm.topology, "topology JSON file");
    cs->add_option("--placement", comm.placement, "placement JSON file");
    cs->add_option("--volumes", comm.volumes, "D x D volume CSV, or from-run")->capture_default_str();
    cs->add_option("--tp-group", comm.tp_group)->check(CLI::PositiveNumber)->capture_default_str();
    cs->add_option("--overlap", comm.overlap)->capture_default_str();
    cs->add_option("--token-bytes", comm.token_bytes)->capture_default_str();
    add_toy_flags(cs, comm.toy, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c->parsed()) {
            cmd_capacity(cap, g, out);
            return kExitOk;
        }
        if (v->parsed()) return cmd_verify(ver, g, out);
        if (r->parsed()) {
            cmd_route_sim(rs, g, out);
            return kExitOk;
        }
        if (t->parsed()) return cmd_train_toy(toy, g, out, err);
        if (cs->parsed()) return cmd_comm_sim(comm, g, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace locmoe::cli
