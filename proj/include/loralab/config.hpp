// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loralab/adapters.hpp"
#include "loralab/data.hpp"
#include "loralab/model.hpp"
#include "loralab/train.hpp"

namespace loralab {

// Configuration problems exit with a distinct code at the CLI boundary.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat INI-style experiment file: [model] / [data] / [pretrain] / [train] /
// [eval] / [out] sections, key = value lines, '#' comments. Unknown sections
// or keys are rejected with their full path.
struct ExperimentConfig {
    ModelConfig model;
    struct Data {
        int total_train = 1500;
        int test_per_discipline = 120;
        int general_pretrain = 2000;
        int general_heldout = 100;
        int general_mix = 400;
        int general_test = 150;
        double marker_extra_prob = 0.5;
        std::vector<double> shares = {60.7, 21.6, 1.6, 14.9, 1.2};
        uint64_t seed = 1;
    } data;
    struct Pretrain {
        double lr = 3e-3;
        int epochs = 12;
        int batch = 16;
        double weight_decay = 0.1;
        double warmup_ratio = 0.05;
    } pretrain;
    TrainConfig train = TrainConfig::preset(Strategy::lora);
    struct Eval {
        int max_new = 8;
    } eval;
    struct Recipe {
        double ft_lr = 1e-3;
        int mix_percent = 70;
    } recipe;
    std::string out_dir = "results";

    GeneralSpec general_spec() const {
        GeneralSpec g;
        g.pretrain_size = data.general_pretrain;
        g.heldout_size = data.general_heldout;
        g.mix_pool_size = data.general_mix;
        g.test_size = data.general_test;
        g.marker_extra_prob = data.marker_extra_prob;
        return g;
    }

    std::vector<DisciplineSpec> discipline_specs() const { return default_discipline_specs(data.total_train, data.shares); }

    TrainConfig pretrain_config() const {
        TrainConfig c = TrainConfig::preset(Strategy::full);
        c.lr = pretrain.lr;
        c.epochs = pretrain.epochs;
        c.batch = pretrain.batch;
        c.weight_decay = pretrain.weight_decay;
        c.warmup_ratio = pretrain.warmup_ratio;
        c.lm_all_positions = true;
        c.seed = model.seed;
        return c;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

struct IniValue {
    std::string raw;
    int line = 0;
    bool used = false;
};

inline double parse_double(const std::string& path, const std::string& raw) {
    try {
        size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: " + path + ": cannot parse number '" + raw + "'");
    }
}

inline int parse_int(const std::string& path, const std::string& raw) {
    try {
        size_t pos = 0;
        const long v = std::stol(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config: " + path + ": cannot parse integer '" + raw + "'");
    }
}

inline bool parse_bool(const std::string& path, const std::string& raw) {
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    throw ConfigError("config: " + path + ": cannot parse boolean '" + raw + "'");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in, const std::string& name = "<config>") {
    std::map<std::string, detail::IniValue> values;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line.substr(0, line.find('#')));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("config: " + name + ":" + std::to_string(lineno) + ": malformed section");
            section = detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + name + ":" + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("config: " + name + ":" + std::to_string(lineno) + ": key outside any section");
        const std::string key = section + "." + detail::trim(t.substr(0, eq));
        if (values.count(key)) throw ConfigError("config: " + name + ": duplicate key " + key);
        values[key] = {detail::trim(t.substr(eq + 1)), lineno, false};
    }

    ExperimentConfig cfg;
    auto take = [&](const std::string& path) -> detail::IniValue* {
        auto it = values.find(path);
        if (it == values.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    };
    auto get_int = [&](const std::string& path, int& dst) {
        if (auto* v = take(path)) dst = detail::parse_int(path, v->raw);
    };
    auto get_double = [&](const std::string& path, double& dst) {
        if (auto* v = take(path)) dst = detail::parse_double(path, v->raw);
    };
    auto get_bool = [&](const std::string& path, bool& dst) {
        if (auto* v = take(path)) dst = detail::parse_bool(path, v->raw);
    };
    auto get_u64 = [&](const std::string& path, uint64_t& dst) {
        if (auto* v = take(path)) dst = static_cast<uint64_t>(detail::parse_int(path, v->raw));
    };

    get_int("model.n_layers", cfg.model.n_layers);
    get_int("model.d_model", cfg.model.d_model);
    get_int("model.n_heads", cfg.model.n_heads);
    get_int("model.max_seq", cfg.model.max_seq);
    get_int("model.ffn_mult", cfg.model.ffn_mult);
    get_u64("model.seed", cfg.model.seed);

    get_int("data.total_train", cfg.data.total_train);
    get_int("data.test_per_discipline", cfg.data.test_per_discipline);
    get_int("data.general_pretrain", cfg.data.general_pretrain);
    get_int("data.general_heldout", cfg.data.general_heldout);
    get_int("data.general_mix", cfg.data.general_mix);
    get_int("data.general_test", cfg.data.general_test);
    get_double("data.marker_extra_prob", cfg.data.marker_extra_prob);
    get_u64("data.seed", cfg.data.seed);
    if (auto* v = take("data.shares")) {
        std::vector<double> shares;
        std::stringstream ss(v->raw);
        std::string part;
        while (std::getline(ss, part, ',')) shares.push_back(detail::parse_double("data.shares", detail::trim(part)));
        if (shares.size() != 5) throw ConfigError("config: data.shares: exactly five comma-separated shares expected");
        cfg.data.shares = shares;
    }

    get_double("pretrain.lr", cfg.pretrain.lr);
    get_int("pretrain.epochs", cfg.pretrain.epochs);
    get_int("pretrain.batch", cfg.pretrain.batch);
    get_double("pretrain.weight_decay", cfg.pretrain.weight_decay);
    get_double("pretrain.warmup_ratio", cfg.pretrain.warmup_ratio);

    if (auto* v = take("train.strategy")) {
        try {
            cfg.train = TrainConfig::preset(strategy_from_name(v->raw), cfg.train.variant);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: train.strategy: ") + e.what());
        }
    }
    if (auto* v = take("train.variant")) {
        try {
            cfg.train.variant = variant_from_name(v->raw);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: train.variant: ") + e.what());
        }
    }
    get_double("train.lr", cfg.train.lr);
    get_double("train.weight_decay", cfg.train.weight_decay);
    get_double("train.warmup_ratio", cfg.train.warmup_ratio);
    get_int("train.epochs", cfg.train.epochs);
    get_int("train.batch", cfg.train.batch);
    get_int("train.rank", cfg.train.rank);
    get_int("train.experts", cfg.train.experts);
    get_double("train.alpha", cfg.train.alpha);
    get_u64("train.seed", cfg.train.seed);
    get_bool("train.pooled_gate", cfg.train.pooled_gate);
    get_double("train.grad_clip", cfg.train.grad_clip);
    get_double("train.aux_balance", cfg.train.aux_balance);

    get_int("eval.max_new", cfg.eval.max_new);
    get_double("recipe.ft_lr", cfg.recipe.ft_lr);
    get_int("recipe.mix_percent", cfg.recipe.mix_percent);
    if (auto* v = take("out.dir")) cfg.out_dir = v->raw;

    for (const auto& [key, v] : values)
        if (!v.used) throw ConfigError("config: unknown key " + key + " (line " + std::to_string(v.line) + ")");

    // cross-field validation happens before any work starts
    if (cfg.data.marker_extra_prob < 0.0 || cfg.data.marker_extra_prob > 1.0)
        throw ConfigError("config: data.marker_extra_prob out of [0, 1]");
    if (cfg.recipe.mix_percent < 0 || cfg.recipe.mix_percent > 100)
        throw ConfigError("config: recipe.mix_percent out of [0, 100]");
    try {
        for (const auto& spec : cfg.discipline_specs())
            if (spec.train_size < 10)
                throw ConfigError("config: data.total_train leaves discipline " + spec.name + " below 10 samples");
        cfg.train.validate();
        Vocab v = build_vocab(cfg.discipline_specs());
        cfg.model.vocab_size = v.size();
        cfg.model.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    return parse_experiment_config(f, path);
}

inline std::string config_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

}  // namespace loralab
