// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "locmoe/defaults.hpp"

namespace locmoe {

// Two-tier cluster: `n_nodes` hosts, each with `devices_per_node` accelerators.
// Bandwidths in bytes/s, latencies in seconds.
struct ClusterTopology {
    int n_nodes = defaults::kNodes;
    int devices_per_node = defaults::kDevicesPerNode;
    double intra_bw = defaults::kIntraBandwidth;
    double inter_bw = defaults::kInterBandwidth;
    double intra_latency = defaults::kIntraLatency;
    double inter_latency = defaults::kInterLatency;

    int n_devices() const { return n_nodes * devices_per_node; }
    int node_of(int device) const { return device / devices_per_node; }
    bool same_node(int a, int b) const { return node_of(a) == node_of(b); }

    void validate() const;
};

struct DeviceSlot {
    int node = 0;
    int device = 0;  // index within the node
};

// Expert -> (node, local device). Every expert lives on exactly one device.
struct ExpertPlacement {
    std::vector<DeviceSlot> slots;

    int n_experts() const { return static_cast<int>(slots.size()); }
    int node_of(int expert) const { return slots.at(expert).node; }
    int global_device(int expert, const ClusterTopology& topo) const;

    void validate(const ClusterTopology& topo) const;

    // Experts dealt round-robin over devices in global device order.
    static ExpertPlacement round_robin(int n_experts, const ClusterTopology& topo);
};

// Token -> global source device.
struct SourceMap {
    std::vector<int> device_of_token;
};

void to_json(nlohmann::json& j, const ClusterTopology& t);
void from_json(const nlohmann::json& j, ClusterTopology& t);
void to_json(nlohmann::json& j, const ExpertPlacement& p);
void from_json(const nlohmann::json& j, ExpertPlacement& p);

}  // namespace locmoe
