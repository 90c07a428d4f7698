// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale trainable MoE layer over a synthetic clustered corpus. Experts
// are GeLU FFNs; the router is hash, switch (learned dense gate) or loc
// (frozen GrAP gate behind a learned d x d projection). The projection sees
// only the auxiliary and locality losses; the summed cross-entropy reaches
// the experts and head, and the switch gate through the gate value. A linear head over the layer output
// classifies the cluster label and supplies the cross-entropy term.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "locmoe/commsim.hpp"
#include "locmoe/losses.hpp"
#include "locmoe/router.hpp"
#include "locmoe/topology.hpp"

namespace locmoe {

double gelu(double x);
double gelu_grad(double x);

struct ExpertParams {
    Matrix w_in;   // h x d
    Matrix w_out;  // d x h

    int hidden() const { return static_cast<int>(w_in.rows()); }
    int dim() const { return static_cast<int>(w_in.cols()); }
};

using RouteFn = std::function<RoutingOutcome(const TokenBatch&)>;

struct MoeOutput {
    Matrix y;  // T x d
    RoutingOutcome outcome;
    std::int64_t expert_calls = 0;  // expert FFN evaluations (one per served token)
    std::int64_t flops = 0;         // multiply-adds x 2 spent in expert FFNs
};

// y_m = gate_m * W_out GeLU(W_in x_m) for served tokens, y_m = x_m for dropped.
MoeOutput moe_forward(const TokenBatch& batch, const RouteFn& router,
                      std::span<const ExpertParams> experts, int cap);

struct SyntheticCorpusConfig {
    int n_clusters = 4;
    int dim = 64;
    int tokens_per_cluster = 1000;
    double concentration = 100.0;  // per-coordinate noise variance is 1 / concentration
    std::uint64_t seed = 0;

    void validate() const;
};

// Cluster centers uniform on the sphere; tokens are normalized noisy copies,
// interleaved in a seeded random order. ids are 0..T-1, labels are cluster ids.
TokenBatch make_synthetic_corpus(const SyntheticCorpusConfig& cfg);

enum class RouterKind { Hash, Switch, Loc };

std::string to_string(RouterKind kind);
RouterKind parse_router_kind(const std::string& s);

struct TrainConfig {
    RouterKind router = RouterKind::Loc;
    int n_experts = 16;
    int hidden = 0;  // 0 means 4 * dim
    int epochs = 50;
    int steps_per_epoch = 8;
    double lr = 0.01;
    double router_lr_scale = 2000.0;  // switch gate and loc projection step is lr * router_lr_scale
    double capacity_factor = 1.25;
    LossConfig losses;
    ClusterTopology topology;
    ExpertPlacement placement;  // empty means round-robin over devices
    std::uint64_t seed = 0;
    int grad_check_coords = 12;  // sampled coordinates per parameter tensor

    void validate(int dim) const;
};

struct TrainRecord {
    int epoch = 0;
    int step = 0;
    RouterKind router = RouterKind::Loc;
    std::vector<int> counts;  // tokens assigned per expert (before capacity drops)
    std::vector<double> f;
    std::vector<double> P;
    LossParts loss;
    double cross_mean = 0.0;  // per-token cross-entropy, logging only
    double locality = 0.0;
    int dropped = 0;
};

struct TrainResult {
    std::vector<TrainRecord> records;
    RoutingOutcome final_outcome;  // whole corpus, final epoch
    SourceMap source_map;
    ExpertPlacement placement;
    double grad_check_error = 0.0;  // max relative error on the 4-token probe
    bool aborted = false;
    std::string abort_reason;
};

// Token source devices: cluster label picks the node, token id the device.
SourceMap default_source_map(const TokenBatch& corpus, const ClusterTopology& topo);

TrainResult train(const TokenBatch& corpus, const TrainConfig& cfg);

struct EpochSummary {
    int epoch = 0;
    std::vector<int> counts;
    double entropy = 0.0;
    double unused_fraction = 0.0;
    double locality = 0.0;
};

std::vector<EpochSummary> epoch_summaries(const std::vector<TrainRecord>& records);

// One row per record: counts per expert plus entropy, unused fraction, locality.
std::string assignment_report(const std::vector<TrainRecord>& records);
// One row per record: epoch, step, l_aux, l_loc, l_cross, l_task.
std::string loss_log(const std::vector<TrainRecord>& records);

}  // namespace locmoe
