// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/topology.hpp"

#include <fmt/format.h>

#include "locmoe/common.hpp"

namespace locmoe {

void ClusterTopology::validate() const {
    if (n_nodes < 1 || devices_per_node < 1) {
        throw ConfigError(fmt::format("topology: n_nodes ({}) and devices_per_node ({}) must be positive",
                                      n_nodes, devices_per_node));
    }
    if (!(inter_bw > 0.0) || !(intra_bw > inter_bw)) {
        throw ConfigError(fmt::format("topology: need intra_bw > inter_bw > 0 (got {}, {})",
                                      intra_bw, inter_bw));
    }
    if (!(intra_latency >= 0.0) || !(inter_latency >= 0.0)) {
        throw ConfigError("topology: latencies must be >= 0");
    }
}

int ExpertPlacement::global_device(int expert, const ClusterTopology& topo) const {
    const auto& s = slots.at(static_cast<std::size_t>(expert));
    return s.node * topo.devices_per_node + s.device;
}

void ExpertPlacement::validate(const ClusterTopology& topo) const {
    if (slots.empty()) throw ConfigError("placement: no experts");
    for (std::size_t e = 0; e < slots.size(); ++e) {
        const auto& s = slots[e];
        if (s.node < 0 || s.node >= topo.n_nodes || s.device < 0 || s.device >= topo.devices_per_node) {
            throw ConfigError(fmt::format("placement: expert {} placed on ({}, {}) outside the {}x{} cluster",
                                          e, s.node, s.device, topo.n_nodes, topo.devices_per_node));
        }
    }
}

ExpertPlacement ExpertPlacement::round_robin(int n_experts, const ClusterTopology& topo) {
    ExpertPlacement p;
    p.slots.resize(static_cast<std::size_t>(n_experts));
    for (int e = 0; e < n_experts; ++e) {
        const int dev = e % topo.n_devices();
        p.slots[static_cast<std::size_t>(e)] = DeviceSlot{dev / topo.devices_per_node, dev % topo.devices_per_node};
    }
    return p;
}

void to_json(nlohmann::json& j, const ClusterTopology& t) {
    j = nlohmann::json{{"n_nodes", t.n_nodes},
                       {"devices_per_node", t.devices_per_node},
                       {"intra_bw", t.intra_bw},
                       {"inter_bw", t.inter_bw},
                       {"intra_latency", t.intra_latency},
                       {"inter_latency", t.inter_latency}};
}

void from_json(const nlohmann::json& j, ClusterTopology& t) {
    j.at("n_nodes").get_to(t.n_nodes);
    j.at("devices_per_node").get_to(t.devices_per_node);
    j.at("intra_bw").get_to(t.intra_bw);
    j.at("inter_bw").get_to(t.inter_bw);
    j.at("intra_latency").get_to(t.intra_latency);
    j.at("inter_latency").get_to(t.inter_latency);
}

void to_json(nlohmann::json& j, const ExpertPlacement& p) {
    auto experts = nlohmann::json::array();
    for (const auto& s : p.slots) experts.push_back({{"node", s.node}, {"device", s.device}});
    j = nlohmann::json{{"experts", experts}};
}

void from_json(const nlohmann::json& j, ExpertPlacement& p) {
    p.slots.clear();
    for (const auto& e : j.at("experts")) {
        p.slots.push_back(DeviceSlot{e.at("node").get<int>(), e.at("device").get<int>()});
    }
}

}  // namespace locmoe
