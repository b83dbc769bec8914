// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loralab/adapters.hpp"
#include "loralab/checkpoint.hpp"
#include "loralab/data.hpp"
#include "loralab/model.hpp"
#include "loralab/optim.hpp"
#include "loralab/vocab.hpp"

namespace loralab {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    Strategy strategy = Strategy::lora;
    AdapterVariant variant = AdapterVariant::moe_vanilla;  // used by lora_moe
    double lr = 1e-4;
    double weight_decay = 0.01;
    double warmup_ratio = 0.1;
    int epochs = 1;
    int batch = 128;  // effective batch size via gradient accumulation
    uint64_t seed = 1;
    int rank = 16;
    int experts = 5;
    double alpha = 32.0;
    bool pooled_gate = false;
    double grad_clip = 0.0;     // off unless > 0
    double aux_balance = 0.0;   // load-balance penalty weight, off by default
    bool lm_all_positions = false;  // pretraining trains every position

    // Reference hyperparameters: full tuning 7e-6 / 0.1 / 0.05, PEFT
    // 1e-4 / 0.01 / 0.1, one epoch, effective batch 128. Everything is
    // overridable; overrides are listed in the RunRecord.
    static TrainConfig preset(Strategy s, AdapterVariant v = AdapterVariant::moe_vanilla) {
        TrainConfig c;
        c.strategy = s;
        c.variant = v;
        if (s == Strategy::full) {
            c.lr = 7e-6;
            c.weight_decay = 0.1;
            c.warmup_ratio = 0.05;
        } else {
            c.lr = 1e-4;
            c.weight_decay = 0.01;
            c.warmup_ratio = 0.1;
        }
        c.epochs = 1;
        c.batch = 128;
        return c;
    }

    nlohmann::json to_json() const {
        return {{"strategy", strategy_name(strategy)},
                {"variant", variant_name(variant)},
                {"lr", lr},
                {"weight_decay", weight_decay},
                {"warmup_ratio", warmup_ratio},
                {"epochs", epochs},
                {"batch", batch},
                {"seed", seed},
                {"rank", rank},
                {"experts", experts},
                {"alpha", alpha},
                {"pooled_gate", pooled_gate},
                {"grad_clip", grad_clip},
                {"aux_balance", aux_balance},
                {"lm_all_positions", lm_all_positions}};
    }

    std::vector<std::string> deviations_from_preset() const {
        const TrainConfig ref = preset(strategy, variant);
        std::vector<std::string> out;
        auto note = [&](const char* field, double got, double want) {
            if (got != want)
                out.push_back(std::string(field) + "=" + std::to_string(got) + " (preset " + std::to_string(want) + ")");
        };
        note("lr", lr, ref.lr);
        note("weight_decay", weight_decay, ref.weight_decay);
        note("warmup_ratio", warmup_ratio, ref.warmup_ratio);
        note("epochs", epochs, ref.epochs);
        note("batch", batch, ref.batch);
        return out;
    }

    void validate() const {
        if (lr <= 0.0 || epochs < 1 || batch < 1 || rank < 1) throw std::invalid_argument("TrainConfig: invalid values");
        if (strategy == Strategy::lora_moe && experts < 2)
            throw std::invalid_argument("TrainConfig: lora_moe requires experts >= 2");
        if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) throw std::invalid_argument("TrainConfig: warmup_ratio out of range");
    }
};

struct RunRecord {
    std::string run_id;
    nlohmann::json config;
    std::vector<double> loss_trace;  // mean loss per optimizer update
    std::string checkpoint_path;
    double wall_seconds = 0.0;
    std::vector<std::string> deviations;

    nlohmann::json to_json() const {
        return {{"run_id", run_id},       {"config", config},
                {"loss_trace", loss_trace}, {"checkpoint", checkpoint_path},
                {"wall_seconds", wall_seconds}, {"deviations", deviations}};
    }
};

inline void save_run_record(const RunRecord& r, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_run_record: cannot open " + path);
    f << r.to_json().dump(2) << "\n";
}

inline std::string make_run_id(const TrainConfig& cfg, const Corpus& corpus) {
    std::string key = cfg.to_json().dump();
    key += "|seed=" + std::to_string(cfg.seed);
    for (const auto& line : corpus.transform_log) key += "|" + line;
    key += "|n=" + std::to_string(corpus.samples.size());
    return hex64(fnv1a64(key));
}

// ---------------------------------------------------------------------------
// Sample encoding and losses
// ---------------------------------------------------------------------------

// Training sequence: prompt ++ <ans> ++ answer ++ <eos>
struct EncodedSample {
    std::vector<int> tokens;
    size_t prompt_len = 0;
};

inline EncodedSample encode_training_sample(const Sample& s, const Vocab& vocab) {
    EncodedSample e;
    e.prompt_len = s.prompt.size();
    for (const auto& t : s.prompt) e.tokens.push_back(vocab.id(t));
    e.tokens.push_back(vocab.ans_id());
    for (const auto& t : s.answer) e.tokens.push_back(vocab.id(t));
    e.tokens.push_back(vocab.eos_id());
    return e;
}

// Mean next-token cross entropy; by default only positions from the answer
// delimiter onward carry loss.
inline Var sequence_loss(Tape& tape, BaseModel& model, AdapterState* adapters, const EncodedSample& e,
                         bool all_positions, std::vector<Var>* omega_sink = nullptr) {
    const int len = static_cast<int>(e.tokens.size());
    if (len < 2) throw std::invalid_argument("sequence_loss: sequence too short");
    Var logits = forward(tape, model, adapters, e.tokens, nullptr, omega_sink);
    std::vector<int> targets(static_cast<size_t>(len), 0);
    std::vector<double> weights(static_cast<size_t>(len), 0.0);
    for (int i = 0; i + 1 < len; ++i) {
        targets[static_cast<size_t>(i)] = e.tokens[static_cast<size_t>(i) + 1];
        const size_t predicted = static_cast<size_t>(i) + 1;
        weights[static_cast<size_t>(i)] = (all_positions || predicted >= e.prompt_len) ? 1.0 : 0.0;
    }
    return tape.cross_entropy(logits, targets, weights);
}

// No-grad mean loss over a corpus (mean over samples of per-sample loss).
inline double corpus_loss(BaseModel& model, AdapterState* adapters, const Corpus& corpus, const Vocab& vocab,
                          bool all_positions = true) {
    if (corpus.samples.empty()) throw std::invalid_argument("corpus_loss: empty corpus");
    double total = 0.0;
    for (const auto& s : corpus.samples) {
        Tape tape(false);
        const EncodedSample e = encode_training_sample(s, vocab);
        total += tape.value(sequence_loss(tape, model, adapters, e, all_positions)).data[0];
    }
    return total / static_cast<double>(corpus.samples.size());
}

// ---------------------------------------------------------------------------
// The training loop
// ---------------------------------------------------------------------------

struct TrainOutput {
    std::optional<AdapterState> adapters;  // empty for full tuning
    RunRecord record;
};

namespace detail {

// squared distance of each gate's mean routing from uniform
inline Var balance_penalty(Tape& tape, const std::vector<Var>& omegas) {
    Var total{-1};
    for (Var omega : omegas) {
        const int k = tape.value(omega).cols();
        Var mean = tape.mean_rows(omega);
        Var centered = tape.add(mean, tape.constant(Tensor::full({1, k}, -1.0 / static_cast<double>(k))));
        Var sq = tape.sum(tape.mul(centered, centered));
        total = total.idx < 0 ? sq : tape.add(total, sq);
    }
    return total;
}

}  // namespace detail

inline TrainOutput train(BaseModel& model, const Corpus& corpus, const Vocab& vocab, TrainConfig cfg,
                         const std::string& checkpoint_path = "", AdapterState* comp_initial = nullptr) {
    cfg.validate();
    if (corpus.samples.empty()) throw std::invalid_argument("train: empty corpus");
    const auto t0 = std::chrono::steady_clock::now();

    std::optional<AdapterState> adapters;
    switch (cfg.strategy) {
        case Strategy::full:
            model.set_trainable(true);
            break;
        case Strategy::lora:
            model.set_trainable(false);
            adapters = make_adapters_for(model.config, AdapterVariant::lora, cfg.rank, 1, cfg.alpha,
                                         derive_rng(cfg.seed, "adapter-init").next_u64());
            break;
        case Strategy::lora_moe:
            model.set_trainable(false);
            adapters = make_adapters_for(model.config, cfg.variant, cfg.rank, cfg.experts, cfg.alpha,
                                         derive_rng(cfg.seed, "adapter-init").next_u64());
            break;
        case Strategy::lora_comp:
            if (!comp_initial) throw std::invalid_argument("train: lora_comp requires pre-trained expert adapters");
            model.set_trainable(false);
            adapters = *comp_initial;
            break;
    }
    if (adapters) adapters->pooled_gate = cfg.pooled_gate;

    std::vector<ParamGroup*> trainables;
    if (cfg.strategy == Strategy::full) {
        trainables = model.params();
    } else {
        trainables = adapters->trainable_params();
    }
    for (ParamGroup* p : model.params()) p->zero_grad();
    if (adapters) adapters->zero_grad();

    std::vector<EncodedSample> encoded;
    encoded.reserve(corpus.samples.size());
    for (const auto& s : corpus.samples) encoded.push_back(encode_training_sample(s, vocab));

    const long n = static_cast<long>(encoded.size());
    const long updates_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const long total_updates = static_cast<long>(cfg.epochs) * updates_per_epoch;

    AdamW opt(trainables);
    AdapterState* adapter_ptr = adapters ? &*adapters : nullptr;
    const bool want_aux = cfg.aux_balance > 0.0 && adapter_ptr && variant_has_gate(adapter_ptr->variant);

    RunRecord record;
    record.run_id = make_run_id(cfg, corpus);
    record.config = cfg.to_json();
    record.config["corpus_provenance"] = corpus.transform_log;
    record.config["corpus_samples"] = corpus.samples.size();
    record.deviations = cfg.deviations_from_preset();

    long update_idx = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(encoded.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = derive_rng(cfg.seed, "order:" + std::to_string(epoch));
        shuffle_rng.shuffle(order);

        double batch_loss = 0.0;
        int batch_count = 0;
        for (size_t pos = 0; pos < order.size(); ++pos) {
            const EncodedSample& e = encoded[order[pos]];
            Tape tape;
            std::vector<Var> omegas;
            Var loss = sequence_loss(tape, model, adapter_ptr, e, cfg.lm_all_positions, want_aux ? &omegas : nullptr);
            if (want_aux && !omegas.empty())
                loss = tape.add(loss, tape.scale(detail::balance_penalty(tape, omegas), cfg.aux_balance));
            batch_loss += tape.value(loss).data[0];
            tape.backward(loss);
            batch_count += 1;
            if (batch_count == cfg.batch || pos + 1 == order.size()) {
                update_idx += 1;
                // midpoint sampling keeps the first and last updates nonzero
                const double lr = lr_schedule_at(static_cast<double>(update_idx) - 0.5, total_updates,
                                                 cfg.warmup_ratio, cfg.lr);
                const double scale = 1.0 / static_cast<double>(batch_count);
                if (cfg.grad_clip > 0.0) {
                    // clip acts on the mean gradient; fold the scale first
                    for (ParamGroup* p : trainables)
                        for (double& g : p->grad.data) g *= scale;
                    AdamW::clip_gradients(trainables, cfg.grad_clip, 1.0);
                    opt.step(lr, cfg.weight_decay, 1.0);
                } else {
                    opt.step(lr, cfg.weight_decay, scale);
                }
                for (ParamGroup* p : trainables) p->zero_grad();
                record.loss_trace.push_back(batch_loss / batch_count);
                batch_loss = 0.0;
                batch_count = 0;
            }
        }
    }

    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!checkpoint_path.empty()) {
        if (adapters)
            save_adapters(checkpoint_path, *adapters);
        else
            save_base(checkpoint_path, model, vocab);
        record.checkpoint_path = checkpoint_path;
    }

    TrainOutput out;
    out.adapters = std::move(adapters);
    out.record = std::move(record);
    return out;
}

// ---------------------------------------------------------------------------
// Orchestration entry points
// ---------------------------------------------------------------------------

struct PretrainResult {
    RunRecord record;
    double initial_heldout_loss = 0.0;
    double final_heldout_loss = 0.0;
};

// Desk-scale stand-in for an instruction-tuned base: language-model the
// general corpus with full tuning, verifying held-out improvement.
inline PretrainResult pretrain_base(BaseModel& model, const Corpus& general, const Corpus& heldout, const Vocab& vocab,
                                    TrainConfig cfg, const std::string& checkpoint_path = "") {
    if (general.samples.empty()) throw std::invalid_argument("pretrain_base: empty general corpus");
    cfg.strategy = Strategy::full;
    cfg.lm_all_positions = true;
    PretrainResult out;
    out.initial_heldout_loss = corpus_loss(model, nullptr, heldout, vocab, true);
    TrainOutput run = train(model, general, vocab, cfg, checkpoint_path);
    out.record = std::move(run.record);
    out.final_heldout_loss = corpus_loss(model, nullptr, heldout, vocab, true);
    if (!std::isfinite(out.final_heldout_loss)) throw std::runtime_error("pretrain_base: divergence (loss not finite)");
    return out;
}

struct DisciplineLora {
    std::string discipline;
    AdapterState adapters;
    RunRecord record;
};

// One independent LoRA run per discipline, identical hyperparameters. When
// an expected discipline list is given, a missing or empty discipline is an
// error naming it.
inline std::vector<DisciplineLora> train_discipline_loras(BaseModel& model, const Corpus& corpus, const Vocab& vocab,
                                                          TrainConfig cfg,
                                                          const std::vector<std::string>& expected = {}) {
    auto disciplines = expected.empty() ? corpus.disciplines() : expected;
    if (disciplines.empty()) throw std::invalid_argument("train_discipline_loras: empty corpus");
    std::vector<DisciplineLora> out;
    for (const auto& d : disciplines) {
        Corpus sub;
        sub.seed = corpus.seed;
        sub.transform_log = corpus.transform_log;
        for (const auto& s : corpus.samples)
            if (s.discipline == d) sub.samples.push_back(s);
        sub.log("filter discipline=" + d);
        if (sub.samples.empty()) throw std::runtime_error("train_discipline_loras: discipline " + d + " has no samples");
        TrainConfig sub_cfg = cfg;
        sub_cfg.strategy = Strategy::lora;
        try {
            TrainOutput run = train(model, sub, vocab, sub_cfg);
            out.push_back({d, std::move(*run.adapters), std::move(run.record)});
        } catch (const std::exception& e) {
            throw std::runtime_error("train_discipline_loras: discipline " + d + " failed: " + e.what());
        }
    }
    return out;
}

// Composition: freeze the discipline experts, train only the gates on the
// multi-discipline corpus.
inline TrainOutput train_comp_gate(BaseModel& model, const std::vector<AdapterState>& expert_states,
                                   const Corpus& corpus, const Vocab& vocab, TrainConfig cfg,
                                   const std::string& checkpoint_path = "") {
    AdapterState comp = make_composition(expert_states, cfg.seed);
    cfg.strategy = Strategy::lora_comp;
    cfg.experts = comp.n_experts;
    cfg.rank = comp.rank;
    cfg.alpha = comp.alpha;
    return train(model, corpus, vocab, cfg, checkpoint_path, &comp);
}

}  // namespace loralab
