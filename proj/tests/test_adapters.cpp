// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "loralab/adapters.hpp"
#include "loralab/gradcheck.hpp"
#include "loralab/model.hpp"
#include "support/oracles.hpp"

using namespace loralab;

namespace {

std::vector<SlotSpec> one_slot(int d_in, int d_out) {
    SlotSpec s;
    s.layer = 0;
    s.role = ProjRole::q;
    s.d_in = d_in;
    s.d_out = d_out;
    return {s};
}

AdapterState random_state(AdapterVariant v, int rank, int k, double alpha, int d_in, int d_out, Rng& rng) {
    AdapterState st = make_adapter_state(one_slot(d_in, d_out), v, rank, k, alpha, rng.next_u64());
    for (ParamGroup* p : st.params())
        for (double& x : p->value.data) x = rng.normal(0.0, 0.7);
    return st;
}

// single token as a 1-row activation
Tensor row_tensor(const std::vector<double>& x) {
    return Tensor({1, static_cast<int>(x.size())}, x);
}

std::vector<double> run_delta(AdapterState& st, const std::vector<double>& x) {
    Tape tape(false);
    Var v = adapter_delta(tape, tape.constant(row_tensor(x)), st.slots[0]);
    return tape.value(v).data;
}

std::vector<double> rand_vec(int n, Rng& rng) {
    std::vector<double> x(static_cast<size_t>(n));
    for (double& v : x) v = rng.normal(0.0, 1.0);
    return x;
}

}  // namespace

TEST_CASE("fresh adapters have exactly zero delta") {
    Rng rng(1);
    for (AdapterVariant v : {AdapterVariant::lora, AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                             AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise}) {
        AdapterState st = make_adapter_state(one_slot(8, 6), v, 3, 4, 16.0, 99);
        auto d = run_delta(st, rand_vec(8, rng));
        for (double x : d) REQUIRE(x == 0.0);
    }
}

TEST_CASE("rank 16 with scaling factor 32 gives multiplier exactly 2") {
    AdapterState st = make_adapter_state(one_slot(8, 8), AdapterVariant::lora, 16, 1, 32.0, 5);
    REQUIRE(st.slots[0].scale_mult() == 2.0);
    // and the delta is exactly twice B(Ax)
    Rng rng(2);
    for (ParamGroup* p : st.params())
        for (double& x : p->value.data) x = rng.normal(0.0, 0.5);
    auto x = rand_vec(8, rng);
    auto got = run_delta(st, x);
    auto raw = oracles::lora_delta(st.slots[0].experts[0].A->value, st.slots[0].experts[0].B.value, 16.0, 16, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(2.0 * raw[i]).margin(1e-12));
}

TEST_CASE("lora delta matches the explicit product oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int d_in = 2 + static_cast<int>(rng.uniform_int(8));
        const int d_out = 2 + static_cast<int>(rng.uniform_int(8));
        const int r = 1 + static_cast<int>(rng.uniform_int(4));
        AdapterState st = random_state(AdapterVariant::lora, r, 1, 2.0 * r, d_in, d_out, rng);
        auto x = rand_vec(d_in, rng);
        auto got = run_delta(st, x);
        auto want = oracles::lora_delta(st.slots[0].experts[0].A->value, st.slots[0].experts[0].B.value,
                                        st.slots[0].alpha, r, x);
        for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("zero-initialized gate routes uniformly") {
    AdapterState st = make_adapter_state(one_slot(6, 6), AdapterVariant::moe_vanilla, 2, 5, 4.0, 1);
    st.slots[0].gate->weight.value.fill(0.0);
    st.slots[0].gate->bias.value.fill(0.0);
    Tape tape(false);
    Var omega = gate_weights(tape, tape.constant(row_tensor(rand_vec(6, *(new Rng(4))))), st.slots[0], false);
    for (double v : tape.value(omega).data) REQUIRE(v == Catch::Approx(0.2).margin(1e-15));
}

TEST_CASE("a +50 logit margin saturates the gate") {
    AdapterState st = make_adapter_state(one_slot(4, 4), AdapterVariant::moe_vanilla, 2, 3, 4.0, 1);
    st.slots[0].gate->bias.value.data = {50.0, 0.0, 0.0};
    Tape tape(false);
    Var omega = gate_weights(tape, tape.constant(row_tensor({0, 0, 0, 0})), st.slots[0], false);
    REQUIRE(tape.value(omega).data[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("gate outputs stay on the probability simplex") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        AdapterState st = random_state(AdapterVariant::moe_vanilla, 2, 5, 4.0, 6, 6, rng);
        Tape tape(false);
        Var omega = gate_weights(tape, tape.constant(row_tensor(rand_vec(6, rng))), st.slots[0], false);
        double sum = 0.0;
        for (double v : tape.value(omega).data) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("identical experts collapse the mixture to a single lora delta") {
    Rng rng(6);
    AdapterState st = random_state(AdapterVariant::moe_vanilla, 3, 4, 6.0, 7, 5, rng);
    // copy expert 0 into all others
    for (int e = 1; e < 4; ++e) {
        st.slots[0].experts[static_cast<size_t>(e)].A->value = st.slots[0].experts[0].A->value;
        st.slots[0].experts[static_cast<size_t>(e)].B.value = st.slots[0].experts[0].B.value;
    }
    auto x = rand_vec(7, rng);
    auto got = run_delta(st, x);
    auto single = oracles::lora_delta(st.slots[0].experts[0].A->value, st.slots[0].experts[0].B.value, 6.0, 3, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(single[i]).margin(1e-12));
}

TEST_CASE("a one-hot gate selects exactly one expert") {
    Rng rng(7);
    AdapterState st = random_state(AdapterVariant::moe_vanilla, 2, 3, 4.0, 6, 6, rng);
    st.slots[0].gate->weight.value.fill(0.0);
    st.slots[0].gate->bias.value.data = {0.0, 1e4, 0.0};  // expert 1, saturated exactly
    auto x = rand_vec(6, rng);
    auto got = run_delta(st, x);
    auto want = oracles::lora_delta(st.slots[0].experts[1].A->value, st.slots[0].experts[1].B.value, 4.0, 2, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-14));
}

TEST_CASE("vanilla mixture matches the explicit weighted-sum oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(6));
        AdapterState st = random_state(AdapterVariant::moe_vanilla, 2, 3, 5.0, d, d, rng);
        auto x = rand_vec(d, rng);
        auto omega = oracles::gate_omega(st.slots[0].gate->weight.value, st.slots[0].gate->bias.value, x);
        std::vector<Tensor> as, bs;
        for (auto& e : st.slots[0].experts) {
            as.push_back(e.A->value);
            bs.push_back(e.B.value);
        }
        auto want = oracles::moe_delta(as, bs, omega, 5.0, 2, x);
        auto got = run_delta(st, x);
        for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("shared expert: zero routed experts leave only the shared path") {
    Rng rng(9);
    AdapterState st = random_state(AdapterVariant::moe_shared_expert, 2, 3, 4.0, 6, 6, rng);
    for (auto& e : st.slots[0].experts) e.B.value.fill(0.0);
    auto x = rand_vec(6, rng);
    auto got = run_delta(st, x);
    auto want = oracles::lora_delta(st.slots[0].shared_expert->A->value, st.slots[0].shared_expert->B.value, 4.0, 2, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-13));
}

TEST_CASE("shared expert: zero shared block reduces to the vanilla mixture") {
    Rng rng(10);
    AdapterState st = random_state(AdapterVariant::moe_shared_expert, 2, 3, 4.0, 6, 6, rng);
    st.slots[0].shared_expert->B.value.fill(0.0);
    auto x = rand_vec(6, rng);
    auto omega = oracles::gate_omega(st.slots[0].gate->weight.value, st.slots[0].gate->bias.value, x);
    std::vector<Tensor> as, bs;
    for (auto& e : st.slots[0].experts) {
        as.push_back(e.A->value);
        bs.push_back(e.B.value);
    }
    auto want = oracles::moe_delta(as, bs, omega, 4.0, 2, x);
    auto got = run_delta(st, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("shared expert mixture matches the explicit-sum oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(5));
        AdapterState st = random_state(AdapterVariant::moe_shared_expert, 2, 3, 4.0, d, d, rng);
        auto x = rand_vec(d, rng);
        auto omega = oracles::gate_omega(st.slots[0].gate->weight.value, st.slots[0].gate->bias.value, x);
        std::vector<Tensor> as, bs;
        for (auto& e : st.slots[0].experts) {
            as.push_back(e.A->value);
            bs.push_back(e.B.value);
        }
        auto want = oracles::moe_delta(as, bs, omega, 4.0, 2, x);
        auto shared = oracles::lora_delta(st.slots[0].shared_expert->A->value, st.slots[0].shared_expert->B.value, 4.0, 2, x);
        for (size_t i = 0; i < want.size(); ++i) want[i] += shared[i];
        auto got = run_delta(st, x);
        for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("shared-A with one expert is exactly a lora delta") {
    Rng rng(12);
    AdapterState st = random_state(AdapterVariant::moe_shared_a, 3, 1, 6.0, 7, 5, rng);
    auto x = rand_vec(7, rng);
    auto got = run_delta(st, x);
    auto want = oracles::lora_delta(st.slots[0].shared_a->value, st.slots[0].experts[0].B.value, 6.0, 3, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-14));
}

TEST_CASE("shared-A with equal B matrices equals a single lora delta") {
    Rng rng(13);
    AdapterState st = random_state(AdapterVariant::moe_shared_a, 2, 4, 4.0, 6, 6, rng);
    for (int e = 1; e < 4; ++e) st.slots[0].experts[static_cast<size_t>(e)].B.value = st.slots[0].experts[0].B.value;
    auto x = rand_vec(6, rng);
    auto got = run_delta(st, x);
    auto want = oracles::lora_delta(st.slots[0].shared_a->value, st.slots[0].experts[0].B.value, 4.0, 2, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("shared-A mixture matches the per-expert oracle") {
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(6));
        AdapterState st = random_state(AdapterVariant::moe_shared_a, 2, 3, 5.0, d, d, rng);
        auto x = rand_vec(d, rng);
        auto omega = oracles::gate_omega(st.slots[0].gate->weight.value, st.slots[0].gate->bias.value, x);
        std::vector<Tensor> bs;
        for (auto& e : st.slots[0].experts) bs.push_back(e.B.value);
        auto want = oracles::shared_a_delta(st.slots[0].shared_a->value, bs, omega, 5.0, 2, x);
        auto got = run_delta(st, x);
        for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("rank-wise routing matches the explicit double-sum oracle") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(5));
        const int r = 1 + static_cast<int>(rng.uniform_int(3));
        AdapterState st = random_state(AdapterVariant::moe_rank_wise, r, 3, 4.0, d, d, rng);
        auto x = rand_vec(d, rng);
        auto omega = oracles::gate_omega(st.slots[0].gate->weight.value, st.slots[0].gate->bias.value, x);
        std::vector<Tensor> as, bs;
        for (auto& e : st.slots[0].experts) {
            as.push_back(e.A->value);
            bs.push_back(e.B.value);
        }
        auto want = oracles::rank_wise_delta(as, bs, omega, 4.0, r, x);
        auto got = run_delta(st, x);
        for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("rank-wise with tied components reduces to the vanilla mixture") {
    Rng rng(16);
    const int d = 6, r = 3, k = 3;
    AdapterState rw = random_state(AdapterVariant::moe_rank_wise, r, k, 5.0, d, d, rng);
    AdapterState vn = make_adapter_state(one_slot(d, d), AdapterVariant::moe_vanilla, r, k, 5.0, 77);
    for (int e = 0; e < k; ++e) {
        vn.slots[0].experts[static_cast<size_t>(e)].A->value = rw.slots[0].experts[static_cast<size_t>(e)].A->value;
        vn.slots[0].experts[static_cast<size_t>(e)].B.value = rw.slots[0].experts[static_cast<size_t>(e)].B.value;
    }
    // expert-constant biases: rank-wise mass per expert matches the vanilla
    // softmax over the same constants
    const std::vector<double> c = {0.3, -0.8, 1.1};
    rw.slots[0].gate->weight.value.fill(0.0);
    vn.slots[0].gate->weight.value.fill(0.0);
    for (int e = 0; e < k; ++e) {
        vn.slots[0].gate->bias.value.data[static_cast<size_t>(e)] = c[static_cast<size_t>(e)];
        for (int j = 0; j < r; ++j) rw.slots[0].gate->bias.value.data[static_cast<size_t>(e * r + j)] = c[static_cast<size_t>(e)];
    }
    auto x = rand_vec(d, rng);
    auto got = run_delta(rw, x);
    auto want = run_delta(vn, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-9));
}

TEST_CASE("rank-wise at rank one is bitwise the vanilla mixture") {
    Rng rng(17);
    const int d = 6, k = 4;
    AdapterState rw = random_state(AdapterVariant::moe_rank_wise, 1, k, 7.0, d, d, rng);
    AdapterState vn = make_adapter_state(one_slot(d, d), AdapterVariant::moe_vanilla, 1, k, 7.0, 78);
    for (int e = 0; e < k; ++e) {
        vn.slots[0].experts[static_cast<size_t>(e)].A->value = rw.slots[0].experts[static_cast<size_t>(e)].A->value;
        vn.slots[0].experts[static_cast<size_t>(e)].B.value = rw.slots[0].experts[static_cast<size_t>(e)].B.value;
    }
    vn.slots[0].gate->weight.value = rw.slots[0].gate->weight.value;
    vn.slots[0].gate->bias.value = rw.slots[0].gate->bias.value;
    auto x = rand_vec(d, rng);
    auto got = run_delta(rw, x);
    auto want = run_delta(vn, x);
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == want[i]);
}

TEST_CASE("rank-wise rejects a gate of the wrong arity") {
    Rng rng(18);
    AdapterState st = random_state(AdapterVariant::moe_rank_wise, 2, 3, 4.0, 5, 5, rng);
    st.slots[0].gate = detail::init_gate("layer0.q", 3, 5);  // should be k*r = 6
    REQUIRE_THROWS(run_delta(st, rand_vec(5, rng)));
}

TEST_CASE("composition gradients reach the gate and never the experts") {
    Rng rng(19);
    AdapterState st = random_state(AdapterVariant::comp, 2, 3, 4.0, 6, 6, rng);
    for (auto& e : st.slots[0].experts) {
        e.A->trainable = false;
        e.B.trainable = false;
    }
    st.slots[0].gate->weight.trainable = true;
    st.slots[0].gate->bias.trainable = true;
    st.zero_grad();
    Tape tape;
    Var x = tape.constant(row_tensor(rand_vec(6, rng)));
    Var d = comp_delta(tape, x, st.slots[0]);
    tape.backward(tape.sum(tape.mul(d, d)));
    for (auto& e : st.slots[0].experts) {
        for (double g : e.A->grad.data) REQUIRE(g == 0.0);
        for (double g : e.B.grad.data) REQUIRE(g == 0.0);
    }
    double gate_grad_norm = 0.0;
    for (double g : st.slots[0].gate->weight.grad.data) gate_grad_norm += g * g;
    REQUIRE(gate_grad_norm > 0.0);
}

TEST_CASE("merge of a zero B leaves the base weight exactly") {
    Rng rng(20);
    Tensor w = random_normal({6, 4}, 0.0, 1.0, rng);
    AdapterState st = make_adapter_state(one_slot(4, 6), AdapterVariant::lora, 2, 1, 4.0, 3);
    Tensor merged = merge(w, st.slots[0]);
    for (size_t i = 0; i < w.data.size(); ++i) REQUIRE(merged.data[i] == w.data[i]);
}

TEST_CASE("merge then subtract recovers the base weight") {
    Rng rng(21);
    Tensor w = random_normal({6, 4}, 0.0, 1.0, rng);
    AdapterState st = random_state(AdapterVariant::lora, 2, 1, 4.0, 4, 6, rng);
    Tensor merged = merge(w, st.slots[0]);
    const auto& a = st.slots[0].experts[0].A->value;
    const auto& b = st.slots[0].experts[0].B.value;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) {
            double ba = 0.0;
            for (int p = 0; p < 2; ++p) ba += b.at(i, p) * a.at(p, j);
            REQUIRE(merged.at(i, j) - 2.0 * ba == Catch::Approx(w.at(i, j)).margin(1e-12));
        }
}

TEST_CASE("parameter count formulas match enumeration on the scaling grid") {
    ModelConfig c;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.vocab_size = 40;
    c.max_seq = 16;
    const auto slots = adapter_slots(c);
    const size_t base_total = base_param_count_formula(c);
    for (int r : {16, 80, 160})
        for (int k : {5, 10, 20}) {
            size_t vanilla_count = 0;
            for (AdapterVariant v : {AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                                     AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise}) {
                AdapterState st = make_adapter_state(slots, v, r, k, 32.0, 7);
                const auto want = trainable_param_count(slots, base_total, Strategy::lora_moe, v, r, k);
                REQUIRE(st.trainable_scalar_count() == want.count);
                if (v == AdapterVariant::moe_vanilla) vanilla_count = want.count;
                if (v == AdapterVariant::moe_shared_a) REQUIRE(want.count < vanilla_count);
            }
            AdapterState comp = make_adapter_state(slots, AdapterVariant::comp, r, k, 32.0, 7);
            const auto comp_want = trainable_param_count(slots, base_total, Strategy::lora_comp, AdapterVariant::comp, r, k);
            REQUIRE(comp.trainable_scalar_count() == comp_want.count);
            // composition trains the gates only
            size_t gates = 0;
            for (const auto& s : comp.slots) gates += comp.slots[0].gate ? (static_cast<size_t>(k) * s.d_in + k) : 0;
            REQUIRE(comp_want.count == gates);
        }
    AdapterState lora = make_adapter_state(slots, AdapterVariant::lora, 16, 1, 32.0, 7);
    REQUIRE(lora.trainable_scalar_count() ==
            trainable_param_count(slots, base_total, Strategy::lora, AdapterVariant::lora, 16, 1).count);
}

TEST_CASE("full strategy counts every base parameter") {
    ModelConfig c;
    c.d_model = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.vocab_size = 20;
    c.max_seq = 8;
    BaseModel m = init_base(c);
    REQUIRE(m.param_count() == base_param_count_formula(c));
    const auto full = trainable_param_count(adapter_slots(c), m.param_count(), Strategy::full, AdapterVariant::lora, 1, 1);
    REQUIRE(full.count == m.param_count());
    REQUIRE(full.fraction() == 1.0);
}

TEST_CASE("gradcheck passes for every adapter variant delta") {
    Rng rng(22);
    for (AdapterVariant v : {AdapterVariant::lora, AdapterVariant::moe_vanilla, AdapterVariant::moe_shared_expert,
                             AdapterVariant::moe_shared_a, AdapterVariant::moe_rank_wise, AdapterVariant::comp}) {
        AdapterState st = random_state(v, 2, 3, 4.0, 5, 5, rng);
        Tensor x = random_normal({3, 5}, 0.0, 1.0, rng);
        auto loss = [&](bool with_grad) {
            Tape tape(with_grad);
            Var d = adapter_delta(tape, tape.constant(x), st.slots[0]);
            Var l = tape.scale(tape.sum(tape.mul(d, d)), 0.5);
            if (with_grad) tape.backward(l);
            return tape.value(l).data[0];
        };
        std::vector<ParamGroup*> params = st.params();
        const double err = loralab::grad_check(loss, params, 1e-5);
        INFO(variant_name(v));
        REQUIRE(err < 1e-6);
    }
}
