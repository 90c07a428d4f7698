// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/commsim.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "locmoe/csv.hpp"

namespace locmoe {

double CommPlan::total_seconds() const {
    double s = 0.0;
    for (const auto& p : phases) s += p.seconds;
    return s;
}

double CommPlan::phase_bytes() const {
    double b = 0.0;
    for (const auto& p : phases) b += p.bytes();
    return b;
}

Matrix build_volume_matrix(const RoutingOutcome& outcome, const ExpertPlacement& placement,
                           const ClusterTopology& topo, double token_bytes,
                           const SourceMap& source_map) {
    const int D = topo.n_devices();
    if (source_map.device_of_token.size() != outcome.expert_of_token.size()) {
        throw ConfigError(fmt::format("build_volume_matrix: {} tokens but {} source entries",
                                      outcome.expert_of_token.size(), source_map.device_of_token.size()));
    }
    Matrix v = Matrix::Zero(D, D);
    for (std::size_t m = 0; m < outcome.expert_of_token.size(); ++m) {
        if (outcome.dropped[m]) continue;
        const int e = outcome.expert_of_token[m];
        if (e < 0 || e >= placement.n_experts()) {
            throw ConfigError(fmt::format("build_volume_matrix: expert {} has no placement", e));
        }
        const int s = source_map.device_of_token[m];
        if (s < 0 || s >= D) throw ConfigError(fmt::format("build_volume_matrix: bad source device {}", s));
        v(s, placement.global_device(e, topo)) += token_bytes;
    }
    return v;
}

double alltoall_cost(const Matrix& volume, const ClusterTopology& topo) {
    const int D = topo.n_devices();
    if (volume.rows() != D || volume.cols() != D) {
        throw ConfigError(fmt::format("alltoall_cost: volume is {}x{}, cluster has {} devices",
                                      volume.rows(), volume.cols(), D));
    }
    double total = 0.0;
    for (int r = 1; r < D; ++r) {
        double round = 0.0;
        for (int s = 0; s < D; ++s) {
            const int t = (s + r) % D;
            const bool local = topo.same_node(s, t);
            const double lat = local ? topo.intra_latency : topo.inter_latency;
            const double bw = local ? topo.intra_bw : topo.inter_bw;
            round = std::max(round, lat + volume(s, t) / bw);
        }
        total += round;
    }
    return total;
}

double ring_allgather_cost(double total_shard_bytes, int group_size, const ClusterTopology& topo) {
    if (group_size <= 1) return 0.0;
    const double g = group_size;
    return (g - 1.0) / g * total_shard_bytes / topo.intra_bw + (g - 1.0) * topo.intra_latency;
}

GroupwiseCost groupwise_alltoall_cost(const Matrix& volume, const ClusterTopology& topo,
                                      int tp_group_size) {
    if (tp_group_size < 1 || topo.devices_per_node % tp_group_size != 0) {
        throw ConfigError(fmt::format("groupwise_alltoall_cost: tp group {} does not divide {} devices per node",
                                      tp_group_size, topo.devices_per_node));
    }
    const int D = topo.n_devices();
    const int g = tp_group_size;

    GroupwiseCost out;
    out.plan.volume = volume;

    CommPhase a2a;
    a2a.kind = PhaseKind::all_to_all;
    for (int s = 0; s < D; ++s) a2a.participants.push_back(s);
    a2a.volume = volume / static_cast<double>(g);
    a2a.seconds = alltoall_cost(a2a.volume, topo);
    out.alltoall_seconds = a2a.seconds;
    out.plan.dispatched_bytes = a2a.bytes();

    const Vector received = a2a.volume.colwise().sum().transpose();
    out.plan.phases.push_back(std::move(a2a));

    if (g > 1) {
        CommPhase gather;
        gather.kind = PhaseKind::all_gather;
        gather.volume = Matrix::Zero(D, D);
        double slowest = 0.0;
        for (int first = 0; first < D; first += g) {
            double shard_bytes = 0.0;
            for (int t = first; t < first + g; ++t) {
                gather.participants.push_back(t);
                shard_bytes += received(t);
                for (int peer = first; peer < first + g; ++peer) {
                    if (peer != t) gather.volume(t, peer) = received(t);
                }
            }
            slowest = std::max(slowest, ring_allgather_cost(shard_bytes, g, topo));
        }
        gather.seconds = slowest;
        out.allgather_seconds = slowest;
        out.plan.replicated_bytes = gather.bytes();
        out.plan.phases.push_back(std::move(gather));
    }
    out.seconds = out.alltoall_seconds + out.allgather_seconds;
    return out;
}

double locality_fraction(const RoutingOutcome& outcome, const ExpertPlacement& placement,
                         const ClusterTopology& topo, const SourceMap& source_map) {
    const auto T = outcome.expert_of_token.size();
    if (source_map.device_of_token.size() != T) throw ConfigError("locality_fraction: source map size mismatch");
    if (T == 0) return 0.0;
    std::size_t local = 0;
    for (std::size_t m = 0; m < T; ++m) {
        const int src_node = topo.node_of(source_map.device_of_token[m]);
        if (placement.node_of(outcome.expert_of_token[m]) == src_node) ++local;
    }
    return static_cast<double>(local) / static_cast<double>(T);
}

double visible_comm_seconds(double comm_seconds, double compute_seconds, double overlap_ratio) {
    return std::max(0.0, comm_seconds - overlap_ratio * compute_seconds);
}

std::vector<StrategyRow> compare_strategies(const std::vector<NamedOutcome>& runs,
                                            const ExpertPlacement& placement,
                                            const SourceMap& source_map,
                                            const CommSimConfig& cfg) {
    cfg.topology.validate();
    placement.validate(cfg.topology);
    std::vector<StrategyRow> rows;
    for (const auto& run : runs) {
        if (run.outcome.n_tokens() != static_cast<int>(source_map.device_of_token.size()) ||
            (!rows.empty() && run.outcome.n_tokens() != runs.front().outcome.n_tokens())) {
            throw ConfigError(fmt::format("compare_strategies: run '{}' has {} tokens, expected {}",
                                          run.router, run.outcome.n_tokens(),
                                          source_map.device_of_token.size()));
        }
        StrategyRow row;
        row.router = run.router;
        const Matrix v = build_volume_matrix(run.outcome, placement, cfg.topology, cfg.token_bytes, source_map);
        row.plain_seconds = alltoall_cost(v, cfg.topology);
        row.groupwise_seconds = groupwise_alltoall_cost(v, cfg.topology, cfg.tp_group).seconds;
        row.locality = locality_fraction(run.outcome, placement, cfg.topology, source_map);

        std::vector<double> per_device(static_cast<std::size_t>(cfg.topology.n_devices()), 0.0);
        const auto served = run.outcome.served_counts();
        for (int e = 0; e < placement.n_experts(); ++e) {
            per_device[static_cast<std::size_t>(placement.global_device(e, cfg.topology))] +=
                served[static_cast<std::size_t>(e)] * cfg.flops_per_token / cfg.device_flops;
        }
        row.compute_seconds = *std::max_element(per_device.begin(), per_device.end());
        row.visible_comm_seconds =
            visible_comm_seconds(row.groupwise_seconds, row.compute_seconds,
                                 cfg.overlap_ratio);
        const double epoch = row.compute_seconds + row.visible_comm_seconds;
        row.comm_share = epoch > 0.0 ? row.visible_comm_seconds / epoch : 0.0;
        const auto counts = run.outcome.assigned_counts();
        row.entropy = assignment_entropy(counts);
        row.unused_experts = unused_experts(counts);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string strategies_csv(const std::vector<StrategyRow>& rows) {
    std::string out = csv::row({"router", "locality_fraction", "plain_alltoall_s", "groupwise_alltoall_s",
                                "compute_s", "visible_comm_s", "comm_share", "entropy", "unused_experts"});
    for (const auto& r : rows) {
        out += csv::row({csv::field(r.router), csv::num(r.locality), csv::num(r.plain_seconds),
                         csv::num(r.groupwise_seconds), csv::num(r.compute_seconds),
                         csv::num(r.visible_comm_seconds), csv::num(r.comm_share), csv::num(r.entropy),
                         csv::num(r.unused_experts)});
    }
    return out;
}

}  // namespace locmoe
