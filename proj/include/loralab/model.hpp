// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "loralab/adapters.hpp"
#include "loralab/autograd.hpp"
#include "loralab/rng.hpp"
#include "loralab/tensor.hpp"

namespace loralab {

struct ModelConfig {
    int n_layers = 2;
    int d_model = 32;
    int n_heads = 4;
    int vocab_size = 0;
    int max_seq = 16;
    int ffn_mult = 4;
    uint64_t seed = 1;

    int d_ffn() const { return ffn_mult * d_model; }
    int d_head() const { return d_model / n_heads; }

    void validate() const {
        if (n_layers < 1 || d_model < 1 || n_heads < 1 || max_seq < 2 || ffn_mult < 1)
            throw std::invalid_argument("ModelConfig: dimensions must be positive");
        if (d_model % n_heads != 0) throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
        if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size too small for control tokens");
    }
};

// Decoder-only pre-norm transformer, learned positional embeddings, no
// projection biases. Small enough that the whole suite stays CPU-friendly.
struct BaseModel {
    struct Layer {
        ParamGroup ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w_up, w_down;
    };

    ModelConfig config;
    ParamGroup tok_embed;  // (V, d)
    ParamGroup pos_embed;  // (max_seq, d)
    std::vector<Layer> layers;
    ParamGroup lnf_g, lnf_b;
    ParamGroup head;  // (V, d)

    std::vector<ParamGroup*> params() {
        std::vector<ParamGroup*> out = {&tok_embed, &pos_embed};
        for (auto& l : layers)
            for (ParamGroup* p : {&l.ln1_g, &l.ln1_b, &l.wq, &l.wk, &l.wv, &l.wo, &l.ln2_g, &l.ln2_b, &l.w_up, &l.w_down})
                out.push_back(p);
        out.push_back(&lnf_g);
        out.push_back(&lnf_b);
        out.push_back(&head);
        return out;
    }

    size_t param_count() {
        size_t n = 0;
        for (ParamGroup* p : params()) n += p->numel();
        return n;
    }

    void set_trainable(bool t) {
        for (ParamGroup* p : params()) p->trainable = t;
    }

    void zero_grad() {
        for (ParamGroup* p : params()) p->zero_grad();
    }
};

inline size_t base_param_count_formula(const ModelConfig& c) {
    const auto d = static_cast<size_t>(c.d_model);
    const auto v = static_cast<size_t>(c.vocab_size);
    const auto f = static_cast<size_t>(c.d_ffn());
    const size_t per_layer = 4 * d * d + 2 * d * f + 4 * d;
    return v * d + static_cast<size_t>(c.max_seq) * d + static_cast<size_t>(c.n_layers) * per_layer + 2 * d + v * d;
}

inline BaseModel init_base(const ModelConfig& config) {
    config.validate();
    BaseModel m;
    m.config = config;
    Rng rng = derive_rng(config.seed, "init_base");
    const int d = config.d_model;
    const double wstd = 0.08;
    m.tok_embed = ParamGroup("tok_embed", random_normal({config.vocab_size, d}, 0.0, wstd, rng));
    m.pos_embed = ParamGroup("pos_embed", random_normal({config.max_seq, d}, 0.0, wstd, rng));
    for (int l = 0; l < config.n_layers; ++l) {
        BaseModel::Layer layer;
        const std::string pre = "layer" + std::to_string(l) + ".";
        layer.ln1_g = ParamGroup(pre + "ln1.g", Tensor::full({d}, 1.0));
        layer.ln1_b = ParamGroup(pre + "ln1.b", Tensor::zeros({d}));
        layer.wq = ParamGroup(pre + "q.w", random_normal({d, d}, 0.0, wstd, rng));
        layer.wk = ParamGroup(pre + "k.w", random_normal({d, d}, 0.0, wstd, rng));
        layer.wv = ParamGroup(pre + "v.w", random_normal({d, d}, 0.0, wstd, rng));
        layer.wo = ParamGroup(pre + "o.w", random_normal({d, d}, 0.0, wstd, rng));
        layer.ln2_g = ParamGroup(pre + "ln2.g", Tensor::full({d}, 1.0));
        layer.ln2_b = ParamGroup(pre + "ln2.b", Tensor::zeros({d}));
        layer.w_up = ParamGroup(pre + "ffn_up.w", random_normal({config.d_ffn(), d}, 0.0, wstd, rng));
        layer.w_down = ParamGroup(pre + "ffn_down.w", random_normal({d, config.d_ffn()}, 0.0, wstd, rng));
        m.layers.push_back(std::move(layer));
    }
    m.lnf_g = ParamGroup("lnf.g", Tensor::full({d}, 1.0));
    m.lnf_b = ParamGroup("lnf.b", Tensor::zeros({d}));
    m.head = ParamGroup("head.w", random_normal({config.vocab_size, d}, 0.0, 0.02, rng));
    return m;
}

// All adapter slots, with the projection dimensions adapters need.
inline std::vector<SlotSpec> adapter_slots(const ModelConfig& c) {
    std::vector<SlotSpec> out;
    for (int l = 0; l < c.n_layers; ++l)
        for (ProjRole r : kAllRoles) {
            SlotSpec s;
            s.layer = l;
            s.role = r;
            s.d_in = (r == ProjRole::ffn_down) ? c.d_ffn() : c.d_model;
            s.d_out = (r == ProjRole::ffn_up) ? c.d_ffn() : c.d_model;
            out.push_back(s);
        }
    return out;
}

inline AdapterState make_adapters_for(const ModelConfig& c, AdapterVariant variant, int rank, int n_experts,
                                      double alpha, uint64_t seed) {
    return make_adapter_state(adapter_slots(c), variant, rank, n_experts, alpha, seed);
}

namespace detail {

inline Tensor causal_mask(int len) {
    Tensor m = Tensor::zeros({len, len});
    for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j) m.at(i, j) = -1e30;
    return m;
}

inline Var project(Tape& tape, Var x, ParamGroup& w, AdapterState* adapters, int layer, ProjRole role,
                   RoutingCapture* capture, std::vector<Var>* omega_sink) {
    Var y = tape.matmul_nt(x, tape.leaf(w));
    if (adapters) {
        Var delta = adapter_delta(tape, x, adapters->slot(layer, role), adapters->pooled_gate, capture, omega_sink);
        y = tape.add(y, delta);
    }
    return y;
}

}  // namespace detail

// Teacher-forced forward pass over one token sequence; returns logits with
// shape (len, vocab). With no adapters this is the pure base model.
inline Var forward(Tape& tape, BaseModel& m, AdapterState* adapters, const std::vector<int>& tokens,
                   RoutingCapture* capture = nullptr, std::vector<Var>* omega_sink = nullptr) {
    const auto& c = m.config;
    const int len = static_cast<int>(tokens.size());
    if (len < 1) throw std::invalid_argument("forward: empty sequence");
    if (len > c.max_seq) throw std::invalid_argument("forward: sequence exceeds max_seq");
    for (int t : tokens)
        if (t < 0 || t >= c.vocab_size) throw std::invalid_argument("forward: token id out of vocabulary");

    std::vector<int> positions(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) positions[static_cast<size_t>(i)] = i;

    Var x = tape.add(tape.embed_rows(tape.leaf(m.tok_embed), tokens),
                     tape.embed_rows(tape.leaf(m.pos_embed), positions));
    Var mask = tape.constant(detail::causal_mask(len));
    const int dh = c.d_head();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int l = 0; l < c.n_layers; ++l) {
        auto& layer = m.layers[static_cast<size_t>(l)];
        Var h = tape.layer_norm(x, tape.leaf(layer.ln1_g), tape.leaf(layer.ln1_b));
        Var q = detail::project(tape, h, layer.wq, adapters, l, ProjRole::q, capture, omega_sink);
        Var k = detail::project(tape, h, layer.wk, adapters, l, ProjRole::k, capture, omega_sink);
        Var v = detail::project(tape, h, layer.wv, adapters, l, ProjRole::v, capture, omega_sink);
        std::vector<Var> heads;
        for (int hd = 0; hd < c.n_heads; ++hd) {
            Var qi = tape.slice_cols(q, hd * dh, dh);
            Var ki = tape.slice_cols(k, hd * dh, dh);
            Var vi = tape.slice_cols(v, hd * dh, dh);
            Var scores = tape.add(tape.scale(tape.matmul_nt(qi, ki), att_scale), mask);
            heads.push_back(tape.matmul(tape.softmax_rows(scores), vi));
        }
        Var att = tape.concat_cols(heads);
        x = tape.add(x, detail::project(tape, att, layer.wo, adapters, l, ProjRole::o, capture, omega_sink));

        Var h2 = tape.layer_norm(x, tape.leaf(layer.ln2_g), tape.leaf(layer.ln2_b));
        Var up = tape.gelu(detail::project(tape, h2, layer.w_up, adapters, l, ProjRole::ffn_up, capture, omega_sink));
        x = tape.add(x, detail::project(tape, up, layer.w_down, adapters, l, ProjRole::ffn_down, capture, omega_sink));
    }
    Var xf = tape.layer_norm(x, tape.leaf(m.lnf_g), tape.leaf(m.lnf_b));
    return tape.matmul_nt(xf, tape.leaf(m.head));
}

inline Tensor forward_logits(BaseModel& m, AdapterState* adapters, const std::vector<int>& tokens,
                             RoutingCapture* capture = nullptr) {
    Tape tape(false);
    return tape.value(forward(tape, m, adapters, tokens, capture));
}

namespace detail {

inline double log_softmax_at(const Tensor& logits, int row, int col) {
    const int c = logits.cols();
    double mx = logits.at(row, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(row, j));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(logits.at(row, j) - mx);
    return logits.at(row, col) - mx - std::log(sum);
}

}  // namespace detail

// Summed token log-likelihood of `continuation` after `context`, teacher
// forced in a single pass.
inline double continuation_loglik(BaseModel& m, AdapterState* adapters, const std::vector<int>& context,
                                  const std::vector<int>& continuation) {
    if (continuation.empty()) throw std::invalid_argument("continuation_loglik: empty continuation");
    std::vector<int> seq = context;
    seq.insert(seq.end(), continuation.begin(), continuation.end());
    const Tensor logits = forward_logits(m, adapters, seq);
    double ll = 0.0;
    for (size_t i = 0; i < continuation.size(); ++i) {
        const int row = static_cast<int>(context.size() + i) - 1;
        ll += detail::log_softmax_at(logits, row, continuation[i]);
    }
    return ll;
}

// Highest summed log-likelihood wins; ties break toward the lowest index.
// The answer delimiter sits between prompt and option, matching training.
inline int score_options(BaseModel& m, AdapterState* adapters, const std::vector<int>& prompt,
                         const std::vector<std::vector<int>>& options, int ans_id) {
    if (options.size() < 2) throw std::invalid_argument("score_options: need at least two options");
    std::vector<int> context = prompt;
    context.push_back(ans_id);
    int best = 0;
    double best_ll = -1e300;
    for (size_t i = 0; i < options.size(); ++i) {
        const double ll = continuation_loglik(m, adapters, context, options[i]);
        if (ll > best_ll) {
            best_ll = ll;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Greedy decoding until <eos>, max_new tokens, or the context window fills.
// Ties in the argmax break toward the lowest token id.
inline std::vector<int> greedy_decode(BaseModel& m, AdapterState* adapters, const std::vector<int>& prompt,
                                      int max_new, int eos_id) {
    if (max_new < 1) throw std::invalid_argument("greedy_decode: max_new must be >= 1");
    std::vector<int> seq = prompt;
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(seq.size()) >= m.config.max_seq) break;
        const Tensor logits = forward_logits(m, adapters, seq);
        const int last = logits.rows() - 1;
        int arg = 0;
        double best = logits.at(last, 0);
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(last, j) > best) {
                best = logits.at(last, j);
                arg = j;
            }
        if (arg == eos_id) break;
        out.push_back(arg);
        seq.push_back(arg);
    }
    return out;
}

}  // namespace loralab
