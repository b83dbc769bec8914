// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loralab/autograd.hpp"
#include "loralab/rng.hpp"
#include "loralab/tensor.hpp"

namespace loralab {

// ---------------------------------------------------------------------------
// Slots
// ---------------------------------------------------------------------------

// Every attention and feed-forward projection carries an adapter slot.
enum class ProjRole { q = 0, k, v, o, ffn_up, ffn_down };

inline constexpr std::array<ProjRole, 6> kAllRoles = {ProjRole::q, ProjRole::k, ProjRole::v,
                                                      ProjRole::o, ProjRole::ffn_up, ProjRole::ffn_down};

inline const char* role_name(ProjRole r) {
    switch (r) {
        case ProjRole::q: return "q";
        case ProjRole::k: return "k";
        case ProjRole::v: return "v";
        case ProjRole::o: return "o";
        case ProjRole::ffn_up: return "ffn_up";
        case ProjRole::ffn_down: return "ffn_down";
    }
    return "?";
}

inline ProjRole role_from_name(const std::string& s) {
    for (ProjRole r : kAllRoles)
        if (s == role_name(r)) return r;
    throw std::invalid_argument("unknown projection role: " + s);
}

struct SlotSpec {
    int layer = 0;
    ProjRole role = ProjRole::q;
    int d_in = 0;
    int d_out = 0;
};

// ---------------------------------------------------------------------------
// Adapter state
// ---------------------------------------------------------------------------

enum class AdapterVariant { lora, moe_vanilla, moe_shared_expert, moe_shared_a, moe_rank_wise, comp };

inline const char* variant_name(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::lora: return "lora";
        case AdapterVariant::moe_vanilla: return "vanilla";
        case AdapterVariant::moe_shared_expert: return "shared_expert";
        case AdapterVariant::moe_shared_a: return "shared_a";
        case AdapterVariant::moe_rank_wise: return "rank_wise";
        case AdapterVariant::comp: return "comp";
    }
    return "?";
}

inline AdapterVariant variant_from_name(const std::string& s) {
    for (AdapterVariant v : {AdapterVariant::lora, AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                             AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise, AdapterVariant::comp})
        if (s == variant_name(v)) return v;
    throw std::invalid_argument("unknown adapter variant: " + s);
}

inline bool variant_has_gate(AdapterVariant v) { return v != AdapterVariant::lora; }

// Low-rank factor pair. A: (r, d_in), B: (d_out, r); the applied delta is
// (alpha/r) * B * A * x. Routed experts under the shared-A variant carry no
// A of their own.
struct LoraFactors {
    std::optional<ParamGroup> A;
    ParamGroup B;
};

// Single-layer gate: omega = softmax(weight * x + bias), per token.
struct GateParams {
    ParamGroup weight;  // (n_out, d_in)
    ParamGroup bias;    // (n_out)
    int n_out() const { return weight.value.shape[0]; }
};

struct SlotAdapter {
    AdapterVariant variant = AdapterVariant::lora;
    int layer = 0;
    ProjRole role = ProjRole::q;
    int d_in = 0, d_out = 0, rank = 0, n_experts = 1;
    double alpha = 1.0;
    std::vector<LoraFactors> experts;          // 1 for plain lora, k otherwise
    std::optional<ParamGroup> shared_a;        // shared-A variant
    std::optional<LoraFactors> shared_expert;  // shared-expert variant
    std::optional<GateParams> gate;

    double scale_mult() const { return alpha / static_cast<double>(rank); }

    std::string prefix() const { return "layer" + std::to_string(layer) + "." + role_name(role); }
};

// Whole-model adapter set plus its construction metadata.
struct AdapterState {
    AdapterVariant variant = AdapterVariant::lora;
    int rank = 0;
    int n_experts = 1;
    double alpha = 1.0;
    bool pooled_gate = false;  // ablation: per-sequence mean-pooled routing
    std::vector<SlotAdapter> slots;

    SlotAdapter& slot(int layer, ProjRole role) {
        for (auto& s : slots)
            if (s.layer == layer && s.role == role) return s;
        throw std::out_of_range("AdapterState: no slot layer" + std::to_string(layer) + "." + role_name(role));
    }
    const SlotAdapter& slot(int layer, ProjRole role) const {
        return const_cast<AdapterState*>(this)->slot(layer, role);
    }

    // deterministic parameter ordering: slot-major, experts, shared, gate
    std::vector<ParamGroup*> params() {
        std::vector<ParamGroup*> out;
        for (auto& s : slots) {
            for (auto& e : s.experts) {
                if (e.A) out.push_back(&*e.A);
                out.push_back(&e.B);
            }
            if (s.shared_a) out.push_back(&*s.shared_a);
            if (s.shared_expert) {
                out.push_back(&*s.shared_expert->A);
                out.push_back(&s.shared_expert->B);
            }
            if (s.gate) {
                out.push_back(&s.gate->weight);
                out.push_back(&s.gate->bias);
            }
        }
        return out;
    }

    std::vector<ParamGroup*> trainable_params() {
        std::vector<ParamGroup*> out;
        for (ParamGroup* p : params())
            if (p->trainable) out.push_back(p);
        return out;
    }

    size_t trainable_scalar_count() {
        size_t n = 0;
        for (ParamGroup* p : trainable_params()) n += p->numel();
        return n;
    }

    void zero_grad() {
        for (ParamGroup* p : params()) p->zero_grad();
    }
};

namespace detail {

// A starts small-random, B starts zero: the initial delta is exactly zero.
inline ParamGroup init_a(const std::string& name, int rank, int d_in, Rng& rng) {
    const double bound = 0.1 / std::sqrt(static_cast<double>(d_in));
    return ParamGroup(name, random_uniform({rank, d_in}, -bound, bound, rng));
}

inline ParamGroup init_b(const std::string& name, int d_out, int rank) {
    return ParamGroup(name, Tensor::zeros({d_out, rank}));
}

inline GateParams init_gate(const std::string& prefix, int n_out, int d_in) {
    GateParams g;
    g.weight = ParamGroup(prefix + ".gate.weight", Tensor::zeros({n_out, d_in}));
    g.bias = ParamGroup(prefix + ".gate.bias", Tensor::zeros({n_out}));
    return g;
}

// Routed variants need asymmetric gates from the start: with a zero gate,
// zero B, and a shared A, every expert receives identical gradients and the
// softmax Jacobian kills the constant, so routing would stay uniform
// forever. B = 0 alone already guarantees an exactly zero initial delta.
inline GateParams init_gate_random(const std::string& prefix, int n_out, int d_in, Rng& rng) {
    GateParams g;
    const double bound = 0.1 / std::sqrt(static_cast<double>(d_in));
    g.weight = ParamGroup(prefix + ".gate.weight", random_uniform({n_out, d_in}, -bound, bound, rng));
    g.bias = ParamGroup(prefix + ".gate.bias", Tensor::zeros({n_out}));
    return g;
}

}  // namespace detail

inline AdapterState make_adapter_state(const std::vector<SlotSpec>& slot_specs, AdapterVariant variant, int rank,
                                       int n_experts, double alpha, uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("make_adapter_state: rank must be >= 1");
    const bool is_moe = variant != AdapterVariant::lora;
    // k = 1 is a degenerate but well-defined mixture, used by tests; training
    // configs enforce k >= 2
    if (is_moe && n_experts < 1) throw std::invalid_argument("make_adapter_state: MoE needs k >= 1");

    AdapterState state;
    state.variant = variant;
    state.rank = rank;
    state.n_experts = is_moe ? n_experts : 1;
    state.alpha = alpha;

    Rng rng = derive_rng(seed, std::string("adapters:") + variant_name(variant));
    for (const auto& spec : slot_specs) {
        SlotAdapter s;
        s.variant = variant;
        s.layer = spec.layer;
        s.role = spec.role;
        s.d_in = spec.d_in;
        s.d_out = spec.d_out;
        s.rank = rank;
        s.n_experts = state.n_experts;
        s.alpha = alpha;
        const std::string pre = s.prefix();
        for (int e = 0; e < state.n_experts; ++e) {
            LoraFactors f;
            const std::string ep = pre + ".expert" + std::to_string(e);
            if (variant != AdapterVariant::moe_shared_a) f.A = detail::init_a(ep + ".A", rank, spec.d_in, rng);
            f.B = detail::init_b(ep + ".B", spec.d_out, rank);
            if (variant == AdapterVariant::comp) {  // composition experts are frozen
                if (f.A) f.A->trainable = false;
                f.B.trainable = false;
            }
            s.experts.push_back(std::move(f));
        }
        if (variant == AdapterVariant::moe_shared_a) s.shared_a = detail::init_a(pre + ".shared.A", rank, spec.d_in, rng);
        if (variant == AdapterVariant::moe_shared_expert) {
            LoraFactors f;
            f.A = detail::init_a(pre + ".shared.A", rank, spec.d_in, rng);
            f.B = detail::init_b(pre + ".shared.B", spec.d_out, rank);
            s.shared_expert = std::move(f);
        }
        if (variant_has_gate(variant)) {
            const int arity = variant == AdapterVariant::moe_rank_wise ? state.n_experts * rank : state.n_experts;
            s.gate = variant == AdapterVariant::comp ? detail::init_gate(pre, arity, spec.d_in)
                                                     : detail::init_gate_random(pre, arity, spec.d_in, rng);
        }
        state.slots.push_back(std::move(s));
    }
    return state;
}

// Composition: k pre-trained single-discipline LoRA states are frozen as
// experts; only a fresh gate trains on the multi-discipline corpus.
inline AdapterState make_composition(const std::vector<AdapterState>& discipline_loras, uint64_t seed) {
    if (discipline_loras.size() < 2) throw std::invalid_argument("make_composition: need at least two experts");
    for (const auto& st : discipline_loras) {
        if (st.variant != AdapterVariant::lora) throw std::invalid_argument("make_composition: experts must be plain LoRA");
        if (st.slots.size() != discipline_loras[0].slots.size() || st.rank != discipline_loras[0].rank)
            throw std::invalid_argument("make_composition: expert shapes are incompatible");
    }
    const AdapterState& proto = discipline_loras[0];
    AdapterState state;
    state.variant = AdapterVariant::comp;
    state.rank = proto.rank;
    state.n_experts = static_cast<int>(discipline_loras.size());
    state.alpha = proto.alpha;

    (void)seed;  // gate starts at zero; seed kept for interface symmetry
    for (size_t si = 0; si < proto.slots.size(); ++si) {
        const SlotAdapter& ps = proto.slots[si];
        SlotAdapter s;
        s.variant = AdapterVariant::comp;
        s.layer = ps.layer;
        s.role = ps.role;
        s.d_in = ps.d_in;
        s.d_out = ps.d_out;
        s.rank = ps.rank;
        s.n_experts = state.n_experts;
        s.alpha = ps.alpha;
        const std::string pre = s.prefix();
        for (size_t e = 0; e < discipline_loras.size(); ++e) {
            const SlotAdapter& es = discipline_loras[e].slots[si];
            if (es.layer != ps.layer || es.role != ps.role || es.d_in != ps.d_in || es.d_out != ps.d_out)
                throw std::invalid_argument("make_composition: expert slot mismatch");
            LoraFactors f;
            f.A = *es.experts[0].A;
            f.A->name = pre + ".expert" + std::to_string(e) + ".A";
            f.A->trainable = false;
            f.B = es.experts[0].B;
            f.B.name = pre + ".expert" + std::to_string(e) + ".B";
            f.B.trainable = false;
            s.experts.push_back(std::move(f));
        }
        s.gate = detail::init_gate(pre, state.n_experts, s.d_in);
        state.slots.push_back(std::move(s));
    }
    return state;
}

// ---------------------------------------------------------------------------
// Delta functions (tape-recorded, so gradients flow through them)
// ---------------------------------------------------------------------------

// Mean routing weights observed at one slot, per discipline; filled by the
// routing probe.
struct RoutingCapture {
    int layer = -1;
    ProjRole role = ProjRole::ffn_up;
    std::vector<double> sum;  // per expert
    size_t rows = 0;

    void observe(const Tensor& omega) {
        if (sum.empty()) sum.assign(static_cast<size_t>(omega.cols()), 0.0);
        for (int i = 0; i < omega.rows(); ++i) {
            for (int j = 0; j < omega.cols(); ++j) sum[static_cast<size_t>(j)] += omega.at(i, j);
            rows += 1;
        }
    }

    std::vector<double> mean() const {
        std::vector<double> out = sum;
        for (double& v : out) v /= static_cast<double>(rows ? rows : 1);
        return out;
    }
};

namespace detail {

inline Var lora_pair_delta(Tape& tape, Var x, Var a_leaf, Var b_leaf, double mult) {
    return tape.scale(tape.matmul_nt(tape.matmul_nt(x, a_leaf), b_leaf), mult);
}

}  // namespace detail

// delta = (alpha/r) * B (A x), tokens as rows
inline Var lora_delta(Tape& tape, Var x, SlotAdapter& s) {
    if (!s.experts[0].A) throw std::runtime_error("lora_delta: missing A factor");
    return detail::lora_pair_delta(tape, x, tape.leaf(*s.experts[0].A), tape.leaf(s.experts[0].B), s.scale_mult());
}

// omega = softmax(W x + b); one row per token (or a single row when pooled)
inline Var gate_weights(Tape& tape, Var x, SlotAdapter& s, bool pooled, RoutingCapture* capture = nullptr,
                        std::vector<Var>* omega_sink = nullptr) {
    if (!s.gate) throw std::runtime_error("gate_weights: slot " + s.prefix() + " has no gate");
    Var gin = pooled ? tape.mean_rows(x) : x;
    Var logits = tape.add_rowvec(tape.matmul_nt(gin, tape.leaf(s.gate->weight)), tape.leaf(s.gate->bias));
    Var omega = tape.softmax_rows(logits);
    if (capture && capture->layer == s.layer && capture->role == s.role) capture->observe(tape.value(omega));
    if (omega_sink) omega_sink->push_back(omega);
    return omega;
}

namespace detail {

// Sum of per-expert deltas with rows scaled by the expert's gate column.
// The gate column is applied to the rank-space activation (before B), which
// keeps the arithmetic bit-identical to rank-wise routing at r = 1.
inline Var routed_sum(Tape& tape, Var x, SlotAdapter& s, Var omega, double mult) {
    Var total{-1};
    for (int e = 0; e < s.n_experts; ++e) {
        if (!s.experts[static_cast<size_t>(e)].A) throw std::runtime_error("routed_sum: expert missing A factor");
        Var h = tape.matmul_nt(x, tape.leaf(*s.experts[static_cast<size_t>(e)].A));
        Var weighted = tape.rowscale(h, tape.slice_cols(omega, e, 1));
        Var d = tape.matmul_nt(weighted, tape.leaf(s.experts[static_cast<size_t>(e)].B));
        total = total.idx < 0 ? d : tape.add(total, d);
    }
    return tape.scale(total, mult);
}

}  // namespace detail

// Vanilla mixture: sum_i omega_i * (alpha/r) * B_i (A_i x)
inline Var moe_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false, RoutingCapture* capture = nullptr,
                    std::vector<Var>* omega_sink = nullptr) {
    if (s.variant != AdapterVariant::moe_vanilla && s.variant != AdapterVariant::comp)
        throw std::runtime_error("moe_delta: variant mismatch at " + s.prefix());
    Var omega = gate_weights(tape, x, s, pooled, capture, omega_sink);
    return detail::routed_sum(tape, x, s, omega, s.scale_mult());
}

// Always-on shared expert at unit weight, plus the routed mixture over the
// k gated experts.
inline Var shared_expert_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false,
                               RoutingCapture* capture = nullptr, std::vector<Var>* omega_sink = nullptr) {
    if (s.variant != AdapterVariant::moe_shared_expert) throw std::runtime_error("shared_expert_delta: variant mismatch");
    if (!s.shared_expert) throw std::runtime_error("shared_expert_delta: missing shared expert");
    Var shared = detail::lora_pair_delta(tape, x, tape.leaf(*s.shared_expert->A), tape.leaf(s.shared_expert->B),
                                         s.scale_mult());
    Var omega = gate_weights(tape, x, s, pooled, capture, omega_sink);
    return tape.add(shared, detail::routed_sum(tape, x, s, omega, s.scale_mult()));
}

// Shared-A mixture: h = A x once, then route only the B projections.
inline Var shared_a_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false, RoutingCapture* capture = nullptr,
                    std::vector<Var>* omega_sink = nullptr) {
    if (s.variant != AdapterVariant::moe_shared_a) throw std::runtime_error("shared_a_delta: variant mismatch");
    if (!s.shared_a) throw std::runtime_error("shared_a_delta: missing shared A");
    Var omega = gate_weights(tape, x, s, pooled, capture, omega_sink);
    Var h = tape.matmul_nt(x, tape.leaf(*s.shared_a));
    Var total{-1};
    for (int e = 0; e < s.n_experts; ++e) {
        Var weighted = tape.rowscale(h, tape.slice_cols(omega, e, 1));
        Var d = tape.matmul_nt(weighted, tape.leaf(s.experts[static_cast<size_t>(e)].B));
        total = total.idx < 0 ? d : tape.add(total, d);
    }
    return tape.scale(total, s.scale_mult());
}

// Rank-wise routing: one softmax over all k*r rank components. The total
// routed mass is rescaled by r so that components tied within an expert
// reduce exactly to the vanilla mixture; the multiplier is then
// (alpha/r) * r = alpha.
inline Var rank_wise_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false, RoutingCapture* capture = nullptr,
                    std::vector<Var>* omega_sink = nullptr) {
    if (s.variant != AdapterVariant::moe_rank_wise) throw std::runtime_error("rank_wise_delta: variant mismatch");
    if (!s.gate || s.gate->n_out() != s.n_experts * s.rank)
        throw std::runtime_error("rank_wise_delta: gate arity must be k*r at " + s.prefix());
    Var omega = gate_weights(tape, x, s, pooled, capture, omega_sink);
    Var total{-1};
    for (int e = 0; e < s.n_experts; ++e) {
        Var h = tape.matmul_nt(x, tape.leaf(*s.experts[static_cast<size_t>(e)].A));
        Var w = tape.slice_cols(omega, e * s.rank, s.rank);
        Var d = tape.matmul_nt(tape.mul(h, w), tape.leaf(s.experts[static_cast<size_t>(e)].B));
        total = total.idx < 0 ? d : tape.add(total, d);
    }
    return tape.scale(total, s.alpha);
}

// Same arithmetic as the vanilla mixture; experts are frozen so gradients
// reach only the gate.
inline Var comp_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false, RoutingCapture* capture = nullptr,
                    std::vector<Var>* omega_sink = nullptr) {
    if (s.variant != AdapterVariant::comp) throw std::runtime_error("comp_delta: variant mismatch");
    return moe_delta(tape, x, s, pooled, capture, omega_sink);
}

// Variant dispatch used by the model forward pass.
inline Var adapter_delta(Tape& tape, Var x, SlotAdapter& s, bool pooled = false, RoutingCapture* capture = nullptr,
                         std::vector<Var>* omega_sink = nullptr) {
    switch (s.variant) {
        case AdapterVariant::lora: return lora_delta(tape, x, s);
        case AdapterVariant::moe_vanilla: return moe_delta(tape, x, s, pooled, capture, omega_sink);
        case AdapterVariant::moe_shared_expert: return shared_expert_delta(tape, x, s, pooled, capture, omega_sink);
        case AdapterVariant::moe_shared_a: return shared_a_delta(tape, x, s, pooled, capture, omega_sink);
        case AdapterVariant::moe_rank_wise: return rank_wise_delta(tape, x, s, pooled, capture, omega_sink);
        case AdapterVariant::comp: return comp_delta(tape, x, s, pooled, capture, omega_sink);
    }
    throw std::runtime_error("adapter_delta: unknown variant");
}

// ---------------------------------------------------------------------------
// Merging and parameter accounting
// ---------------------------------------------------------------------------

// W + (alpha/r) * B * A, plain tensor math (no tape)
inline Tensor merge(const Tensor& w, const ParamGroup& a, const ParamGroup& b, int rank, double alpha) {
    const int r = a.value.shape[0], d_in = a.value.shape[1], d_out = b.value.shape[0];
    if (b.value.shape[1] != r || w.shape != std::vector<int>{d_out, d_in})
        throw std::invalid_argument("merge: shape mismatch");
    Tensor out = w;
    const double mult = alpha / static_cast<double>(rank);
    for (int i = 0; i < d_out; ++i)
        for (int j = 0; j < d_in; ++j) {
            double s = 0.0;
            for (int p = 0; p < r; ++p) s += b.value.at(i, p) * a.value.at(p, j);
            out.at(i, j) += mult * s;
        }
    return out;
}

inline Tensor merge(const Tensor& w, const SlotAdapter& s) {
    if (s.variant != AdapterVariant::lora) throw std::invalid_argument("merge: only plain LoRA merges into the base");
    return merge(w, *s.experts[0].A, s.experts[0].B, s.rank, s.alpha);
}

enum class Strategy { full, lora, lora_moe, lora_comp };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::full: return "full";
        case Strategy::lora: return "lora";
        case Strategy::lora_moe: return "lora_moe";
        case Strategy::lora_comp: return "lora_comp";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
    for (Strategy v : {Strategy::full, Strategy::lora, Strategy::lora_moe, Strategy::lora_comp})
        if (s == strategy_name(v)) return v;
    throw std::invalid_argument("unknown strategy: " + s);
}

struct TrainableCount {
    size_t count = 0;
    size_t base_total = 0;
    double fraction() const { return base_total ? static_cast<double>(count) / static_cast<double>(base_total) : 0.0; }
};

// Closed-form trainable-parameter count. Per slot:
//   lora:           r (d_in + d_out)
//   vanilla MoE:    k r (d_in + d_out) + gate(k)
//   shared expert:  (k+1) r (d_in + d_out) + gate(k)
//   shared A:       r d_in + k r d_out + gate(k)
//   rank-wise:      k r (d_in + d_out) + gate(k r)
//   composition:    gate(k) only
// where gate(n) = n d_in + n.
inline TrainableCount trainable_param_count(const std::vector<SlotSpec>& slots, size_t base_total, Strategy strategy,
                                            AdapterVariant variant, int rank, int k) {
    TrainableCount out;
    out.base_total = base_total;
    if (strategy == Strategy::full) {
        out.count = base_total;
        return out;
    }
    const auto r = static_cast<size_t>(rank);
    const auto ke = static_cast<size_t>(k);
    for (const auto& s : slots) {
        const auto din = static_cast<size_t>(s.d_in);
        const auto dout = static_cast<size_t>(s.d_out);
        const auto gate = [&](size_t arity) { return arity * din + arity; };
        if (strategy == Strategy::lora) {
            out.count += r * (din + dout);
            continue;
        }
        if (strategy == Strategy::lora_comp) {
            out.count += gate(ke);
            continue;
        }
        switch (variant) {
            case AdapterVariant::moe_vanilla: out.count += ke * r * (din + dout) + gate(ke); break;
            case AdapterVariant::moe_shared_expert: out.count += (ke + 1) * r * (din + dout) + gate(ke); break;
            case AdapterVariant::moe_shared_a: out.count += r * din + ke * r * dout + gate(ke); break;
            case AdapterVariant::moe_rank_wise: out.count += ke * r * (din + dout) + gate(ke * r); break;
            default: throw std::invalid_argument("trainable_param_count: unknown MoE variant");
        }
    }
    return out;
}

}  // namespace loralab
