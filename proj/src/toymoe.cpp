// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "locmoe/toymoe.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "locmoe/capacity.hpp"
#include "locmoe/csv.hpp"
#include "locmoe/rng.hpp"

namespace locmoe {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

namespace {

Matrix apply_gelu(const Matrix& u) { return u.unaryExpr([](double v) { return gelu(v); }); }

// Row indices of served tokens, grouped by expert.
std::vector<std::vector<Eigen::Index>> group_by_expert(const RoutingOutcome& outcome) {
    std::vector<std::vector<Eigen::Index>> groups(outcome.f.size());
    for (std::size_t m = 0; m < outcome.expert_of_token.size(); ++m) {
        if (!outcome.dropped[m]) groups[static_cast<std::size_t>(outcome.expert_of_token[m])].push_back(static_cast<Eigen::Index>(m));
    }
    return groups;
}

Matrix gather_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
    return out;
}

}  // namespace

MoeOutput moe_forward(const TokenBatch& batch, const RouteFn& router,
                      std::span<const ExpertParams> experts, int cap) {
    MoeOutput out;
    out.outcome = router(batch);
    if (out.outcome.n_tokens() != batch.size()) throw ConfigError("moe_forward: router returned wrong token count");
    if (out.outcome.n_experts() != static_cast<int>(experts.size())) {
        throw ConfigError(fmt::format("moe_forward: router has {} experts, {} parameter sets given",
                                      out.outcome.n_experts(), experts.size()));
    }
    for (const auto& e : experts) {
        if (e.dim() != batch.dim() || e.w_out.rows() != batch.dim() || e.w_out.cols() != e.hidden()) {
            throw ConfigError("moe_forward: expert shapes do not match token dim");
        }
    }
    out.outcome = apply_capacity(std::move(out.outcome), cap);
    out.y = batch.tokens;

    const auto groups = group_by_expert(out.outcome);
    for (std::size_t e = 0; e < groups.size(); ++e) {
        if (groups[e].empty()) continue;
        const auto& p = experts[e];
        const Matrix xe = gather_rows(batch.tokens, groups[e]);
        const Matrix ye = apply_gelu(xe * p.w_in.transpose()) * p.w_out.transpose();
        for (std::size_t k = 0; k < groups[e].size(); ++k) {
            const Eigen::Index m = groups[e][k];
            out.y.row(m) = out.outcome.gate_value[static_cast<std::size_t>(m)] * ye.row(static_cast<Eigen::Index>(k));
        }
        const auto calls = static_cast<std::int64_t>(groups[e].size());
        out.expert_calls += calls;
        out.flops += calls * 4LL * p.hidden() * p.dim();
    }
    return out;
}

void SyntheticCorpusConfig::validate() const {
    if (n_clusters < 1 || dim < 2 || tokens_per_cluster < 1) {
        throw ConfigError(fmt::format("corpus: need n_clusters>=1, dim>=2, tokens_per_cluster>=1 (got {}, {}, {})",
                                      n_clusters, dim, tokens_per_cluster));
    }
    if (!(concentration > 0.0)) throw ConfigError("corpus: concentration must be > 0");
}

TokenBatch make_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
    cfg.validate();
    const TokenBatch centers = sample_unit_sphere({cfg.dim, cfg.n_clusters, cfg.seed});
    std::mt19937_64 gen(rng::derive_seed(cfg.seed, 1));
    std::normal_distribution<double> noise(0.0, 1.0 / std::sqrt(cfg.concentration));

    const int T = cfg.n_clusters * cfg.tokens_per_cluster;
    std::vector<int> order(static_cast<std::size_t>(T));
    for (int m = 0; m < T; ++m) order[static_cast<std::size_t>(m)] = m % cfg.n_clusters;
    std::shuffle(order.begin(), order.end(), gen);

    Matrix x(T, cfg.dim);
    for (int m = 0; m < T; ++m) {
        const int c = order[static_cast<std::size_t>(m)];
        for (int j = 0; j < cfg.dim; ++j) x(m, j) = centers.tokens(c, j) + noise(gen);
        x.row(m).normalize();
    }
    TokenBatch batch = TokenBatch::from_rows(std::move(x));
    batch.labels = std::move(order);
    batch.unit_norm = true;
    return batch;
}

std::string to_string(RouterKind kind) {
    switch (kind) {
        case RouterKind::Hash: return "hash";
        case RouterKind::Switch: return "switch";
        case RouterKind::Loc: return "loc";
    }
    return "unknown";
}

RouterKind parse_router_kind(const std::string& s) {
    if (s == "hash") return RouterKind::Hash;
    if (s == "switch") return RouterKind::Switch;
    if (s == "loc") return RouterKind::Loc;
    throw ConfigError(fmt::format("unknown router kind '{}' (expected hash, switch or loc)", s));
}

void TrainConfig::validate(int dim) const {
    RouterConfig{n_experts, dim}.validate();
    losses.validate();
    topology.validate();
    if (epochs < 0 || steps_per_epoch < 1) throw ConfigError("train: epochs >= 0 and steps_per_epoch >= 1 required");
    if (!(lr >= 0.0) || !(router_lr_scale >= 0.0)) throw ConfigError("train: lr and router_lr_scale must be >= 0");
    if (!(capacity_factor > 0.0)) throw ConfigError("train: capacity_factor must be > 0");
    if (!placement.slots.empty()) {
        placement.validate(topology);
        if (placement.n_experts() != n_experts) {
            throw ConfigError(fmt::format("train: placement has {} experts, config has {}",
                                          placement.n_experts(), n_experts));
        }
    }
}

SourceMap default_source_map(const TokenBatch& corpus, const ClusterTopology& topo) {
    SourceMap map;
    map.device_of_token.resize(static_cast<std::size_t>(corpus.size()));
    for (int m = 0; m < corpus.size(); ++m) {
        const int label = corpus.labels.empty() ? 0 : corpus.labels[static_cast<std::size_t>(m)];
        const int node = label % topo.n_nodes;
        const auto local = static_cast<int>(corpus.token_ids[static_cast<std::size_t>(m)] %
                                            static_cast<std::uint64_t>(topo.devices_per_node));
        map.device_of_token[static_cast<std::size_t>(m)] = node * topo.devices_per_node + local;
    }
    return map;
}

namespace {

struct Params {
    std::vector<ExpertParams> experts;
    Matrix head;       // C x d
    Vector head_bias;  // C
    Matrix gate;       // n x d, switch router
    Matrix proj;       // d x d, loc router

    static Params zeros_like(const Params& p) {
        Params z;
        for (const auto& e : p.experts) {
            z.experts.push_back({Matrix::Zero(e.w_in.rows(), e.w_in.cols()), Matrix::Zero(e.w_out.rows(), e.w_out.cols())});
        }
        z.head = Matrix::Zero(p.head.rows(), p.head.cols());
        z.head_bias = Vector::Zero(p.head_bias.size());
        z.gate = Matrix::Zero(p.gate.rows(), p.gate.cols());
        z.proj = Matrix::Zero(p.proj.rows(), p.proj.cols());
        return z;
    }

    void step(double lr, double router_lr, const Params& g) {
        for (std::size_t e = 0; e < experts.size(); ++e) {
            experts[e].w_in -= lr * g.experts[e].w_in;
            experts[e].w_out -= lr * g.experts[e].w_out;
        }
        head -= lr * g.head;
        head_bias -= lr * g.head_bias;
        gate -= router_lr * g.gate;
        proj -= router_lr * g.proj;
    }
};

struct Batch {
    Matrix x;
    std::vector<int> labels;
    std::vector<std::uint64_t> ids;
    std::vector<int> src_device;
    std::vector<int> src_node;
};

struct Context {
    RouterKind router;
    int n_experts;
    int n_classes;
    double capacity_factor;
    bool enforce_capacity = true;
    LossConfig losses;
    GatingMatrix grap;
    std::vector<ExpertDistribution> local_targets;  // per node
    int n_nodes;
};

struct Evaluation {
    LossParts loss;
    double cross_mean = 0.0;
    RoutingOutcome outcome;
};

Evaluation evaluate(const Params& p, const Batch& b, const Context& ctx, Params* grad) {
    const Eigen::Index T = b.x.rows();
    const int n = ctx.n_experts;
    const double Td = static_cast<double>(T);

    // Routing.
    Matrix pre;    // pre-ReLU GrAP scores (loc) or raw scores (switch)
    Matrix probs;  // T x n softmax probabilities
    Matrix z;      // projected tokens (loc)
    RoutingOutcome outcome;
    if (ctx.router == RouterKind::Hash) {
        outcome = hash_route(b.ids, n);
    } else {
        if (ctx.router == RouterKind::Switch) {
            pre = b.x * p.gate.transpose();
            outcome = route_top1(pre);
            probs.resize(T, n);
            for (Eigen::Index m = 0; m < T; ++m) probs.row(m) = softmax(pre.row(m).transpose()).transpose();
        } else {
            z = b.x * p.proj.transpose();
            pre = z * ctx.grap.weights.transpose();
            const Matrix scores = pre.cwiseMax(0.0);
            outcome = route_top1(scores);
            probs.resize(T, n);
            for (Eigen::Index m = 0; m < T; ++m) probs.row(m) = softmax(scores.row(m).transpose()).transpose();
        }
    }
    if (ctx.enforce_capacity) {
        const int cap = empirical_capacity(static_cast<int>(T), ctx.capacity_factor, 1, n);
        outcome = apply_capacity(std::move(outcome), cap);
    }

    // Experts.
    const auto groups = group_by_expert(outcome);
    std::vector<Matrix> xs(groups.size()), us(groups.size()), acts(groups.size()), vs(groups.size());
    Matrix y = b.x;
    for (std::size_t e = 0; e < groups.size(); ++e) {
        if (groups[e].empty()) continue;
        xs[e] = gather_rows(b.x, groups[e]);
        us[e] = xs[e] * p.experts[e].w_in.transpose();
        acts[e] = apply_gelu(us[e]);
        vs[e] = acts[e] * p.experts[e].w_out.transpose();
        for (std::size_t k = 0; k < groups[e].size(); ++k) {
            const Eigen::Index m = groups[e][k];
            y.row(m) = outcome.gate_value[static_cast<std::size_t>(m)] * vs[e].row(static_cast<Eigen::Index>(k));
        }
    }

    // Head and losses.
    Matrix logits = y * p.head.transpose();
    logits.rowwise() += p.head_bias.transpose();
    const double cross = cross_entropy(logits, b.labels);

    double aux = 0.0;
    if (ctx.router != RouterKind::Hash && ctx.losses.alpha > 0.0) {
        aux = aux_loss(outcome.f, outcome.P, ctx.losses.alpha);
    }

    // One current distribution per source node, weighted by its token share.
    std::vector<Vector> node_dist(static_cast<std::size_t>(ctx.n_nodes), Vector::Zero(n));
    std::vector<int> node_tokens(static_cast<std::size_t>(ctx.n_nodes), 0);
    double loc = 0.0;
    const bool use_loc = ctx.router == RouterKind::Loc && ctx.losses.mu > 0.0;
    if (use_loc) {
        for (Eigen::Index m = 0; m < T; ++m) {
            const auto k = static_cast<std::size_t>(b.src_node[static_cast<std::size_t>(m)]);
            node_dist[k] += probs.row(m).transpose();
            ++node_tokens[k];
        }
        for (std::size_t k = 0; k < node_dist.size(); ++k) {
            if (node_tokens[k] == 0) continue;
            node_dist[k] /= node_tokens[k];
            const ExpertDistribution current{{node_dist[k].data(), node_dist[k].data() + n}};
            loc += node_tokens[k] / Td * locality_loss(current, ctx.local_targets[k], ctx.losses.mu);
        }
    }

    Evaluation ev;
    ev.loss = task_loss(aux, loc, cross);
    ev.cross_mean = T > 0 ? cross / Td : 0.0;
    ev.outcome = outcome;
    if (!grad) return ev;

    // Backward.
    const Matrix dlogits = cross_entropy_grad(logits, b.labels);
    grad->head = dlogits.transpose() * y;
    grad->head_bias = dlogits.colwise().sum().transpose();
    const Matrix dy = dlogits * p.head;

    Matrix dprobs = Matrix::Zero(T, n);
    for (std::size_t e = 0; e < groups.size(); ++e) {
        auto& ge = grad->experts[e];
        ge.w_in.setZero();
        ge.w_out.setZero();
        if (groups[e].empty()) continue;
        Matrix dv(static_cast<Eigen::Index>(groups[e].size()), b.x.cols());
        for (std::size_t k = 0; k < groups[e].size(); ++k) {
            const Eigen::Index m = groups[e][k];
            const auto kk = static_cast<Eigen::Index>(k);
            const double gate = outcome.gate_value[static_cast<std::size_t>(m)];
            dv.row(kk) = gate * dy.row(m);
            // The loc projection is steered by the routing regularizers only.
            if (ctx.router == RouterKind::Switch) dprobs(m, e) += dy.row(m).dot(vs[e].row(kk));
        }
        ge.w_out = dv.transpose() * acts[e];
        const Matrix du = (dv * p.experts[e].w_out).cwiseProduct(us[e].unaryExpr([](double v) { return gelu_grad(v); }));
        ge.w_in = du.transpose() * xs[e];
    }

    grad->gate.setZero();
    grad->proj.setZero();
    if (ctx.router == RouterKind::Hash) return ev;

    if (aux > 0.0) {
        const auto daux = aux_loss_grad(outcome.f, ctx.losses.alpha);
        for (Eigen::Index m = 0; m < T; ++m) {
            for (int i = 0; i < n; ++i) dprobs(m, i) += daux[static_cast<std::size_t>(i)] / Td;
        }
    }
    if (use_loc) {
        // d KL(D || Q) / d D_i = ln(D_i / Q_i) + 1, and D averages the node's rows.
        for (std::size_t k = 0; k < node_dist.size(); ++k) {
            if (node_tokens[k] == 0) continue;
            Vector g(n);
            for (int i = 0; i < n; ++i) {
                g(i) = ctx.losses.mu / Td *
                       (std::log(node_dist[k](i) / ctx.local_targets[k].probs[static_cast<std::size_t>(i)]) + 1.0);
            }
            for (Eigen::Index m = 0; m < T; ++m) {
                if (static_cast<std::size_t>(b.src_node[static_cast<std::size_t>(m)]) == k) dprobs.row(m) += g.transpose();
            }
        }
    }

    // Softmax backward, row by row.
    Matrix dscores(T, n);
    for (Eigen::Index m = 0; m < T; ++m) {
        const double inner = probs.row(m).dot(dprobs.row(m));
        dscores.row(m) = probs.row(m).cwiseProduct((dprobs.row(m).array() - inner).matrix());
    }

    if (ctx.router == RouterKind::Switch) {
        grad->gate = dscores.transpose() * b.x;
    } else {
        const Matrix dpre = dscores.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        const Matrix dz = dpre * ctx.grap.weights;
        grad->proj = dz.transpose() * b.x;
    }
    return ev;
}

Batch slice(const TokenBatch& corpus, const SourceMap& map, const ClusterTopology& topo,
            Eigen::Index begin, Eigen::Index end) {
    Batch b;
    b.x = corpus.tokens.middleRows(begin, end - begin);
    for (Eigen::Index m = begin; m < end; ++m) {
        const auto mm = static_cast<std::size_t>(m);
        b.labels.push_back(corpus.labels[mm]);
        b.ids.push_back(corpus.token_ids[mm]);
        b.src_device.push_back(map.device_of_token[mm]);
        b.src_node.push_back(topo.node_of(map.device_of_token[mm]));
    }
    return b;
}

Params init_params(const TrainConfig& cfg, int dim, int hidden, int n_classes) {
    std::mt19937_64 gen(rng::derive_seed(cfg.seed, 0x5eed));
    auto randn = [&gen](Eigen::Index r, Eigen::Index c, double std) {
        std::normal_distribution<double> normal(0.0, std);
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(gen);
        }
        return m;
    };
    Params p;
    for (int e = 0; e < cfg.n_experts; ++e) {
        ExpertParams ep;
        ep.w_in = randn(hidden, dim, 1.0 / std::sqrt(dim));
        ep.w_out = randn(dim, hidden, 1.0 / std::sqrt(hidden));
        p.experts.push_back(std::move(ep));
    }
    p.head = randn(n_classes, dim, 1.0 / std::sqrt(dim));
    p.head_bias = Vector::Zero(n_classes);
    // Drawn for every router kind so all kinds share expert and head initialization.
    p.gate = randn(cfg.n_experts, dim, 0.1 / std::sqrt(dim));
    p.proj = Matrix::Identity(dim, dim);
    return p;
}

// One parameter tensor exposed to the finite-difference probe.
struct Probe {
    std::string name;
    std::function<Matrix&(Params&)> tensor;
    bool regularizers_only = false;  // loc projection: compared against L_aux + L_loc
};

double probe_gradients(Params& p, const Batch& probe, const Context& ctx, const TrainConfig& cfg) {
    Params g = Params::zeros_like(p);
    const Evaluation base = evaluate(p, probe, ctx, &g);

    std::vector<Probe> probes;
    probes.push_back({"head", [](Params& q) -> Matrix& { return q.head; }});
    if (ctx.router == RouterKind::Switch) probes.push_back({"gate", [](Params& q) -> Matrix& { return q.gate; }});
    if (ctx.router == RouterKind::Loc) probes.push_back({"proj", [](Params& q) -> Matrix& { return q.proj; }, true});
    std::vector<int> used = base.outcome.expert_of_token;
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    for (int e : used) {
        const auto ee = static_cast<std::size_t>(e);
        probes.push_back({fmt::format("w_in[{}]", e), [ee](Params& q) -> Matrix& { return q.experts[ee].w_in; }});
        probes.push_back({fmt::format("w_out[{}]", e), [ee](Params& q) -> Matrix& { return q.experts[ee].w_out; }});
    }

    std::mt19937_64 gen(rng::derive_seed(cfg.seed, 0x9c));
    double worst = 0.0;
    for (const auto& pr : probes) {
        Matrix& w = pr.tensor(p);
        const Matrix& gw = pr.tensor(g);
        std::vector<Eigen::Index> all(static_cast<std::size_t>(w.size()));
        std::iota(all.begin(), all.end(), Eigen::Index{0});
        std::vector<Eigen::Index> coords;
        std::sample(all.begin(), all.end(), std::back_inserter(coords), cfg.grad_check_coords, gen);

        std::vector<double> start, analytic;
        for (auto k : coords) {
            start.push_back(w.data()[k]);
            analytic.push_back(gw.data()[k]);
        }
        auto loss_fn = [&](std::span<const double> v) {
            for (std::size_t i = 0; i < coords.size(); ++i) w.data()[coords[i]] = v[i];
            const LossParts l = evaluate(p, probe, ctx, nullptr).loss;
            for (std::size_t i = 0; i < coords.size(); ++i) w.data()[coords[i]] = start[i];
            return pr.regularizers_only ? l.aux + l.loc : l.total;
        };
        auto grad_fn = [&](std::span<const double>) { return analytic; };
        worst = std::max(worst, gradient_relative_error(loss_fn, grad_fn, start));
    }
    return worst;
}

}  // namespace

TrainResult train(const TokenBatch& corpus, const TrainConfig& cfg) {
    if (corpus.labels.size() != static_cast<std::size_t>(corpus.size())) {
        throw ConfigError("train: corpus must be labeled");
    }
    const int dim = corpus.dim();
    cfg.validate(dim);
    const int hidden = cfg.hidden > 0 ? cfg.hidden : 4 * dim;
    const int n_classes = 1 + *std::max_element(corpus.labels.begin(), corpus.labels.end());

    TrainResult result;
    result.placement = cfg.placement.slots.empty() ? ExpertPlacement::round_robin(cfg.n_experts, cfg.topology)
                                                   : cfg.placement;
    result.source_map = default_source_map(corpus, cfg.topology);

    Context ctx{cfg.router, cfg.n_experts, n_classes, cfg.capacity_factor, true, cfg.losses,
                build_grap_weights(RouterConfig{cfg.n_experts, dim}), {}, cfg.topology.n_nodes};
    for (int k = 0; k < cfg.topology.n_nodes; ++k) {
        ctx.local_targets.push_back(make_local_target(result.placement, k, cfg.losses.epsilon_smooth));
    }

    Params params = init_params(cfg, dim, hidden, n_classes);
    {
        const Eigen::Index probe_size = std::min<Eigen::Index>(4, corpus.size());
        Context probe_ctx = ctx;
        probe_ctx.enforce_capacity = false;
        const Batch probe = slice(corpus, result.source_map, cfg.topology, 0, probe_size);
        result.grad_check_error = probe_gradients(params, probe, probe_ctx, cfg);
    }

    const Eigen::Index T = corpus.size();
    const int steps = cfg.steps_per_epoch;
    std::vector<Batch> batches;
    for (int s = 0; s < steps; ++s) {
        batches.push_back(slice(corpus, result.source_map, cfg.topology, T * s / steps, T * (s + 1) / steps));
    }

    Params grads = Params::zeros_like(params);
    RoutingOutcome last_epoch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RoutingOutcome epoch_outcome;
        std::vector<double> p_sum(static_cast<std::size_t>(cfg.n_experts), 0.0);
        for (int s = 0; s < steps; ++s) {
            const Batch& b = batches[static_cast<std::size_t>(s)];
            TrainRecord rec;
            rec.epoch = epoch;
            rec.step = s;
            rec.router = cfg.router;
            Evaluation ev;
            try {
                ev = evaluate(params, b, ctx, &grads);
            } catch (const DomainError& err) {
                rec.loss = LossParts{NAN, NAN, NAN, NAN};
                result.records.push_back(rec);
                result.aborted = true;
                result.abort_reason = fmt::format("epoch {} step {}: {}", epoch, s, err.what());
                return result;
            }
            rec.counts = ev.outcome.assigned_counts();
            rec.f = ev.outcome.f;
            rec.P = ev.outcome.P;
            rec.loss = ev.loss;
            rec.cross_mean = ev.cross_mean;
            rec.dropped = ev.outcome.dropped_count();
            SourceMap step_map{b.src_device};
            rec.locality = locality_fraction(ev.outcome, result.placement, cfg.topology, step_map);
            result.records.push_back(rec);

            for (std::size_t i = 0; i < p_sum.size(); ++i) p_sum[i] += ev.outcome.P[i] * static_cast<double>(b.x.rows());
            auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
            append(epoch_outcome.expert_of_token, ev.outcome.expert_of_token);
            append(epoch_outcome.gate_value, ev.outcome.gate_value);
            append(epoch_outcome.dropped, ev.outcome.dropped);

            params.step(cfg.lr, cfg.lr * cfg.router_lr_scale, grads);
        }
        epoch_outcome.f.assign(static_cast<std::size_t>(cfg.n_experts), 0.0);
        epoch_outcome.P = p_sum;
        const auto counts = epoch_outcome.assigned_counts();
        for (std::size_t i = 0; i < p_sum.size(); ++i) {
            epoch_outcome.f[i] = static_cast<double>(counts[i]) / static_cast<double>(T);
            epoch_outcome.P[i] /= static_cast<double>(T);
        }
        last_epoch = std::move(epoch_outcome);
    }
    result.final_outcome = std::move(last_epoch);
    return result;
}

std::vector<EpochSummary> epoch_summaries(const std::vector<TrainRecord>& records) {
    std::vector<EpochSummary> out;
    std::vector<double> local_tokens;
    for (const auto& r : records) {
        if (out.empty() || out.back().epoch != r.epoch) {
            out.push_back(EpochSummary{r.epoch, std::vector<int>(r.counts.size(), 0), 0.0, 0.0, 0.0});
            local_tokens.push_back(0.0);
        }
        auto& s = out.back();
        int tokens = 0;
        for (std::size_t i = 0; i < r.counts.size(); ++i) {
            s.counts[i] += r.counts[i];
            tokens += r.counts[i];
        }
        local_tokens.back() += r.locality * tokens;
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto& s = out[k];
        int total = 0;
        for (int c : s.counts) total += c;
        s.entropy = assignment_entropy(s.counts);
        s.unused_fraction = s.counts.empty() ? 0.0 : static_cast<double>(unused_experts(s.counts)) / static_cast<double>(s.counts.size());
        s.locality = total > 0 ? local_tokens[k] / total : 0.0;
    }
    return out;
}

std::string assignment_report(const std::vector<TrainRecord>& records) {
    if (records.empty()) return {};
    const std::size_t n = records.front().counts.size();
    std::vector<std::string> header = {"epoch", "step", "router", "entropy", "unused_fraction", "locality_fraction",
                                       "dropped"};
    for (std::size_t i = 0; i < n; ++i) header.push_back(fmt::format("count_{}", i));
    std::string out = csv::row(header);
    for (const auto& r : records) {
        std::vector<std::string> fields = {
            csv::num(r.epoch), csv::num(r.step), to_string(r.router), csv::num(assignment_entropy(r.counts)),
            csv::num(r.counts.empty() ? 0.0 : static_cast<double>(unused_experts(r.counts)) / static_cast<double>(r.counts.size())),
            csv::num(r.locality), csv::num(r.dropped)};
        for (int c : r.counts) fields.push_back(csv::num(c));
        out += csv::row(fields);
    }
    return out;
}

std::string loss_log(const std::vector<TrainRecord>& records) {
    std::string out = csv::row({"epoch", "step", "l_aux", "l_loc", "l_cross", "l_task"});
    for (const auto& r : records) {
        out += csv::row({csv::num(r.epoch), csv::num(r.step), csv::num(r.loss.aux), csv::num(r.loss.loc),
                         csv::num(r.loss.cross), csv::num(r.loss.total)});
    }
    return out;
}

}  // namespace locmoe
