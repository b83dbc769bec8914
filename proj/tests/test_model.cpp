// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>

#include "loralab/checkpoint.hpp"
#include "support/tempfile.hpp"
#include "loralab/model.hpp"

using namespace loralab;

namespace {

ModelConfig tiny_config(uint64_t seed = 1) {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 16;
    c.n_heads = 2;
    c.vocab_size = 24;
    c.max_seq = 12;
    c.seed = seed;
    return c;
}

std::vector<int> random_tokens(const ModelConfig& c, int len, Rng& rng) {
    std::vector<int> out;
    for (int i = 0; i < len; ++i) out.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(c.vocab_size))));
    return out;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("init_base is deterministic per seed") {
    BaseModel a = init_base(tiny_config(7));
    BaseModel b = init_base(tiny_config(7));
    auto pa = a.params(), pb = b.params();
    for (size_t i = 0; i < pa.size(); ++i) REQUIRE(same_bytes(pa[i]->value, pb[i]->value));

    BaseModel c = init_base(tiny_config(8));
    bool any_diff = false;
    auto pc = c.params();
    for (size_t i = 0; i < pa.size(); ++i)
        if (!same_bytes(pa[i]->value, pc[i]->value)) any_diff = true;
    REQUIRE(any_diff);
}

TEST_CASE("parameter count matches the closed form") {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.n_heads = 4;
    c.vocab_size = 40;
    c.max_seq = 16;
    BaseModel m = init_base(c);
    REQUIRE(m.param_count() == base_param_count_formula(c));
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig c = tiny_config();
    c.n_heads = 3;  // 16 % 3 != 0
    REQUIRE_THROWS(init_base(c));
    c = tiny_config();
    c.vocab_size = 2;
    REQUIRE_THROWS(init_base(c));
}

TEST_CASE("freshly initialized adapters never change a logit") {
    ModelConfig c = tiny_config(3);
    BaseModel m = init_base(c);
    Rng rng(5);
    for (AdapterVariant v : {AdapterVariant::lora, AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                             AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise}) {
        AdapterState st = make_adapters_for(c, v, 4, 3, 8.0, 11);
        auto tokens = random_tokens(c, 8, rng);
        Tensor base = forward_logits(m, nullptr, tokens);
        Tensor with = forward_logits(m, &st, tokens);
        INFO(variant_name(v));
        REQUIRE(same_bytes(base, with));
    }
}

TEST_CASE("forward rejects bad inputs") {
    ModelConfig c = tiny_config();
    BaseModel m = init_base(c);
    REQUIRE_THROWS(forward_logits(m, nullptr, {}));
    REQUIRE_THROWS(forward_logits(m, nullptr, {c.vocab_size}));
    REQUIRE_THROWS(forward_logits(m, nullptr, std::vector<int>(static_cast<size_t>(c.max_seq) + 1, 1)));
}

TEST_CASE("causal masking: later tokens never affect earlier logits") {
    ModelConfig c = tiny_config(9);
    BaseModel m = init_base(c);
    Rng rng(13);
    auto tokens = random_tokens(c, 9, rng);
    Tensor before = forward_logits(m, nullptr, tokens);
    for (int t = 0; t + 1 < static_cast<int>(tokens.size()); ++t) {
        auto mutated = tokens;
        mutated[static_cast<size_t>(t) + 1] = (mutated[static_cast<size_t>(t) + 1] + 1) % c.vocab_size;
        Tensor after = forward_logits(m, nullptr, mutated);
        for (int row = 0; row <= t; ++row)
            for (int col = 0; col < c.vocab_size; ++col) REQUIRE(after.at(row, col) == before.at(row, col));
    }
}

TEST_CASE("merged weights reproduce the adapter path within 1e-9") {
    ModelConfig c = tiny_config(21);
    BaseModel m = init_base(c);
    AdapterState st = make_adapters_for(c, AdapterVariant::lora, 4, 1, 8.0, 31);
    Rng rng(17);
    for (auto& slot : st.slots)
        for (double& v : slot.experts[0].B.value.data) v = rng.normal(0.0, 0.3);

    BaseModel merged = init_base(c);
    {
        auto src = m.params();
        auto dst = merged.params();
        for (size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    for (int l = 0; l < c.n_layers; ++l) {
        auto& layer = merged.layers[static_cast<size_t>(l)];
        layer.wq.value = merge(layer.wq.value, st.slot(l, ProjRole::q));
        layer.wk.value = merge(layer.wk.value, st.slot(l, ProjRole::k));
        layer.wv.value = merge(layer.wv.value, st.slot(l, ProjRole::v));
        layer.wo.value = merge(layer.wo.value, st.slot(l, ProjRole::o));
        layer.w_up.value = merge(layer.w_up.value, st.slot(l, ProjRole::ffn_up));
        layer.w_down.value = merge(layer.w_down.value, st.slot(l, ProjRole::ffn_down));
    }

    double max_diff = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto tokens = random_tokens(c, 2 + static_cast<int>(rng.uniform_int(9)), rng);
        Tensor adapter_path = forward_logits(m, &st, tokens);
        Tensor merged_path = forward_logits(merged, nullptr, tokens);
        for (size_t i = 0; i < adapter_path.data.size(); ++i)
            max_diff = std::max(max_diff, std::abs(adapter_path.data[i] - merged_path.data[i]));
    }
    REQUIRE(max_diff < 1e-9);
}

TEST_CASE("score_options breaks ties toward the lowest index") {
    ModelConfig c = tiny_config(33);
    BaseModel m = init_base(c);
    const std::vector<int> prompt = {1, 2, 3};
    REQUIRE(score_options(m, nullptr, prompt, {{5, 6}, {5, 6}}, 2) == 0);
}

TEST_CASE("a uniform-logits model ties length-matched permutations to index 0") {
    ModelConfig c = tiny_config(34);
    BaseModel m = init_base(c);
    m.head.value.fill(0.0);  // exactly uniform logits
    const std::vector<int> prompt = {1, 2};
    REQUIRE(score_options(m, nullptr, prompt, {{7, 8, 9}, {9, 8, 7}, {8, 7, 9}}, 2) == 0);
}

TEST_CASE("score_options rejects empty inputs") {
    ModelConfig c = tiny_config();
    BaseModel m = init_base(c);
    REQUIRE_THROWS(score_options(m, nullptr, {1}, {{2, 3}}, 2));           // one option
    REQUIRE_THROWS(score_options(m, nullptr, {1}, {{2}, {}}, 2));          // empty option
}

TEST_CASE("greedy decoding is deterministic and respects eos") {
    ModelConfig c = tiny_config(35);
    BaseModel m = init_base(c);
    const std::vector<int> prompt = {3, 4, 5};
    auto a = greedy_decode(m, nullptr, prompt, 6, 1);
    auto b = greedy_decode(m, nullptr, prompt, 6, 1);
    REQUIRE(a == b);

    // force eos to dominate every step: generation is empty
    m.head.value.fill(0.0);
    m.lnf_b.value.fill(1.0);
    for (int d = 0; d < c.d_model; ++d) m.head.value.at(1, d) = 1.0;
    REQUIRE(greedy_decode(m, nullptr, prompt, 6, 1).empty());
}

TEST_CASE("base checkpoints round trip bit exactly") {
    ModelConfig c = tiny_config(44);
    BaseModel m = init_base(c);
    Vocab vocab(std::vector<std::string>{"<pad>", "<eos>", "<ans>", "a", "b", "c", "d", "e", "f", "g", "h", "i",
                                         "j", "k", "l", "m", "n", "o", "p", "q", "r", "s", "t", "u"});
    const std::string path = loralab::testing::temp_path(".ck");
    save_base(path, m, vocab);
    LoadedBase back = load_base(path);
    REQUIRE(back.vocab.size() == 24);
    auto pa = m.params(), pb = back.model.params();
    for (size_t i = 0; i < pa.size(); ++i) REQUIRE(same_bytes(pa[i]->value, pb[i]->value));

    // identical bytes when re-saved
    const std::string path2 = loralab::testing::temp_path(".ck");
    save_base(path2, back.model, back.vocab);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    REQUIRE(s1.str() == s2.str());
    std::remove(path.c_str());
    std::remove(path2.c_str());

    // loaded model evaluates identically
    Rng rng(3);
    auto tokens = random_tokens(c, 7, rng);
    REQUIRE(same_bytes(forward_logits(m, nullptr, tokens), forward_logits(back.model, nullptr, tokens)));
}

TEST_CASE("adapter checkpoints round trip for every variant") {
    ModelConfig c = tiny_config(45);
    Rng rng(9);
    for (AdapterVariant v : {AdapterVariant::lora, AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                             AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise, AdapterVariant::comp}) {
        AdapterState st = make_adapters_for(c, v, 3, 3, 6.0, 77);
        for (ParamGroup* p : st.params())
            for (double& x : p->value.data) x = rng.normal(0.0, 0.4);
        const std::string path = loralab::testing::temp_path(".ck");
        save_adapters(path, st, "base-ref-hash");
        AdapterState back = load_adapters(path);
        std::remove(path.c_str());
        REQUIRE(back.variant == v);
        REQUIRE(back.rank == 3);
        auto pa = st.params(), pb = back.params();
        REQUIRE(pa.size() == pb.size());
        for (size_t i = 0; i < pa.size(); ++i) {
            REQUIRE(pa[i]->name == pb[i]->name);
            REQUIRE(same_bytes(pa[i]->value, pb[i]->value));
            REQUIRE(pa[i]->trainable == pb[i]->trainable);
        }
    }
}
