// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "loralab/adapters.hpp"
#include "loralab/model.hpp"
#include "loralab/vocab.hpp"

namespace loralab {

// Self-describing container: magic, format version, JSON header with config
// and a named block index, then raw little-endian f64 blocks in index order.
// Serialization is canonical, so equal seeds give byte-identical files.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'L', 'L', 'C', 'K'};

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace detail

struct CheckpointData {
    nlohmann::json header;
    std::map<std::string, Tensor> blocks;
};

inline void write_checkpoint(const std::string& path, nlohmann::json header,
                             const std::vector<const ParamGroup*>& blocks) {
    nlohmann::json index = nlohmann::json::array();
    for (const ParamGroup* p : blocks) {
        nlohmann::json b;
        b["name"] = p->name;
        b["shape"] = p->value.shape;
        index.push_back(std::move(b));
    }
    header["format_version"] = kCheckpointVersion;
    header["blocks"] = std::move(index);
    const std::string head = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_checkpoint: cannot open " + path);
    f.write(kCheckpointMagic, 4);
    detail::write_u32(f, kCheckpointVersion);
    detail::write_u64(f, head.size());
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const ParamGroup* p : blocks)
        f.write(reinterpret_cast<const char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("read_checkpoint: " + path + " is not a checkpoint");
    const uint32_t version = detail::read_u32(f);
    if (version != kCheckpointVersion)
        throw std::runtime_error("read_checkpoint: unsupported format version " + std::to_string(version));
    const uint64_t head_len = detail::read_u64(f);
    std::string head(head_len, '\0');
    f.read(head.data(), static_cast<std::streamsize>(head_len));
    CheckpointData out;
    out.header = nlohmann::json::parse(head);
    for (const auto& b : out.header.at("blocks")) {
        const std::string name = b.at("name").get<std::string>();
        const std::vector<int> shape = b.at("shape").get<std::vector<int>>();
        Tensor t = Tensor::zeros(shape);
        f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!f) throw std::runtime_error("read_checkpoint: truncated block " + name + " in " + path);
        out.blocks.emplace(name, std::move(t));
    }
    return out;
}

// ---- base model ------------------------------------------------------------

inline void save_base(const std::string& path, BaseModel& m, const Vocab& vocab) {
    nlohmann::json header;
    header["kind"] = "base";
    header["config"] = {{"n_layers", m.config.n_layers}, {"d_model", m.config.d_model},
                        {"n_heads", m.config.n_heads},   {"vocab_size", m.config.vocab_size},
                        {"max_seq", m.config.max_seq},   {"ffn_mult", m.config.ffn_mult},
                        {"seed", m.config.seed}};
    header["vocab"] = vocab.tokens();
    std::vector<const ParamGroup*> blocks;
    for (ParamGroup* p : m.params()) blocks.push_back(p);
    write_checkpoint(path, std::move(header), blocks);
}

struct LoadedBase {
    BaseModel model;
    Vocab vocab;
};

inline LoadedBase load_base(const std::string& path) {
    CheckpointData ck = read_checkpoint(path);
    if (ck.header.at("kind") != "base") throw std::runtime_error("load_base: " + path + " is not a base checkpoint");
    const auto& c = ck.header.at("config");
    ModelConfig config;
    config.n_layers = c.at("n_layers").get<int>();
    config.d_model = c.at("d_model").get<int>();
    config.n_heads = c.at("n_heads").get<int>();
    config.vocab_size = c.at("vocab_size").get<int>();
    config.max_seq = c.at("max_seq").get<int>();
    config.ffn_mult = c.at("ffn_mult").get<int>();
    config.seed = c.at("seed").get<uint64_t>();
    LoadedBase out{init_base(config), Vocab(ck.header.at("vocab").get<std::vector<std::string>>())};
    for (ParamGroup* p : out.model.params()) {
        auto it = ck.blocks.find(p->name);
        if (it == ck.blocks.end()) throw std::runtime_error("load_base: missing block " + p->name);
        if (it->second.shape != p->value.shape) throw std::runtime_error("load_base: shape mismatch for " + p->name);
        p->value = it->second;
    }
    return out;
}

// ---- adapters ---------------------------------------------------------------

inline void save_adapters(const std::string& path, AdapterState& state, const std::string& base_ref = "") {
    nlohmann::json header;
    header["kind"] = "adapter";
    header["variant"] = variant_name(state.variant);
    header["rank"] = state.rank;
    header["experts"] = state.n_experts;
    header["alpha"] = state.alpha;
    header["pooled_gate"] = state.pooled_gate;
    if (!base_ref.empty()) header["base_ref"] = base_ref;
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : state.slots)
        slots.push_back({{"layer", s.layer}, {"role", role_name(s.role)}, {"d_in", s.d_in}, {"d_out", s.d_out}});
    header["slots"] = std::move(slots);
    std::vector<const ParamGroup*> blocks;
    for (ParamGroup* p : state.params()) blocks.push_back(p);
    write_checkpoint(path, std::move(header), blocks);
}

inline AdapterState load_adapters(const std::string& path) {
    CheckpointData ck = read_checkpoint(path);
    if (ck.header.at("kind") != "adapter") throw std::runtime_error("load_adapters: " + path + " is not an adapter checkpoint");
    std::vector<SlotSpec> slots;
    for (const auto& s : ck.header.at("slots")) {
        SlotSpec spec;
        spec.layer = s.at("layer").get<int>();
        spec.role = role_from_name(s.at("role").get<std::string>());
        spec.d_in = s.at("d_in").get<int>();
        spec.d_out = s.at("d_out").get<int>();
        slots.push_back(spec);
    }
    AdapterState state = make_adapter_state(slots, variant_from_name(ck.header.at("variant").get<std::string>()),
                                            ck.header.at("rank").get<int>(), ck.header.at("experts").get<int>(),
                                            ck.header.at("alpha").get<double>(), /*seed=*/0);
    state.pooled_gate = ck.header.value("pooled_gate", false);
    for (ParamGroup* p : state.params()) {
        auto it = ck.blocks.find(p->name);
        if (it == ck.blocks.end()) throw std::runtime_error("load_adapters: missing block " + p->name);
        if (it->second.shape != p->value.shape) throw std::runtime_error("load_adapters: shape mismatch for " + p->name);
        p->value = it->second;
    }
    return state;
}

inline std::string checkpoint_kind(const std::string& path) {
    return read_checkpoint(path).header.at("kind").get<std::string>();
}

}  // namespace loralab
