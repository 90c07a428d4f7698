// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cost model for token dispatch on a two-tier cluster. All-to-All uses a ring
// schedule of D-1 serialized rounds; in round r device s sends to (s + r) mod D
// and the round lasts as long as its slowest pair.

#pragma once

#include <string>
#include <vector>

#include "locmoe/common.hpp"
#include "locmoe/defaults.hpp"
#include "locmoe/router.hpp"
#include "locmoe/topology.hpp"

namespace locmoe {

enum class PhaseKind { all_to_all, all_gather };

struct CommPhase {
    PhaseKind kind = PhaseKind::all_to_all;
    std::vector<int> participants;
    Matrix volume;  // D x D bytes
    double seconds = 0.0;

    double bytes() const { return volume.sum(); }
};

struct CommPlan {
    Matrix volume;  // input dispatch matrix
    std::vector<CommPhase> phases;
    double dispatched_bytes = 0.0;  // bytes moved by the All-to-All phase
    double replicated_bytes = 0.0;  // bytes added by All-Gather replication

    double total_seconds() const;
    double phase_bytes() const;
};

// Entry (s, t) = token_bytes * #served tokens from device s whose expert is on t.
Matrix build_volume_matrix(const RoutingOutcome& outcome, const ExpertPlacement& placement,
                           const ClusterTopology& topo, double token_bytes,
                           const SourceMap& source_map);

double alltoall_cost(const Matrix& volume, const ClusterTopology& topo);

// Ring All-Gather of `total_shard_bytes` across a group of g intra-node devices.
double ring_allgather_cost(double total_shard_bytes, int group_size, const ClusterTopology& topo);

struct GroupwiseCost {
    double seconds = 0.0;
    double alltoall_seconds = 0.0;
    double allgather_seconds = 0.0;
    CommPlan plan;
};

// Each device sends 1/g of its volume (its share of the tensor-parallel group's
// traffic), then every TP group all-gathers the shards it received.
GroupwiseCost groupwise_alltoall_cost(const Matrix& volume, const ClusterTopology& topo,
                                      int tp_group_size);

double locality_fraction(const RoutingOutcome& outcome, const ExpertPlacement& placement,
                         const ClusterTopology& topo, const SourceMap& source_map);

// Communication left visible after overlapping with expert compute.
double visible_comm_seconds(double comm_seconds, double compute_seconds, double overlap_ratio);

struct CommSimConfig {
    ClusterTopology topology;
    double token_bytes = defaults::kTokenBytes;
    double flops_per_token = defaults::kFlopsPerToken;
    double device_flops = defaults::kDeviceFlops;
    double overlap_ratio = defaults::kOverlapRatio;
    int tp_group = defaults::kTpGroup;
};

struct NamedOutcome {
    std::string router;
    RoutingOutcome outcome;
};

struct StrategyRow {
    std::string router;
    double locality = 0.0;
    double plain_seconds = 0.0;
    double groupwise_seconds = 0.0;
    double compute_seconds = 0.0;
    double visible_comm_seconds = 0.0;
    double comm_share = 0.0;  // visible comm / (compute + visible comm)
    double entropy = 0.0;
    int unused_experts = 0;
};

std::vector<StrategyRow> compare_strategies(const std::vector<NamedOutcome>& runs,
                                            const ExpertPlacement& placement,
                                            const SourceMap& source_map,
                                            const CommSimConfig& cfg);

std::string strategies_csv(const std::vector<StrategyRow>& rows);

}  // namespace locmoe
