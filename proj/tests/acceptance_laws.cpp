// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance criteria 8 and 9: the stochastic directional laws and the
// end-to-end recipe. Five seeded pipelines share one set of training runs;
// each sub-criterion prints its own PASS line with the observed tally.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loralab/checkpoint.hpp"
#include "loralab/eval.hpp"
#include "loralab/train.hpp"

using namespace loralab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kSeeds = 5;
constexpr int kTotalTrain = 1500;

struct SeedOutcome {
    EvalReport imbalanced, balanced, mix70;     // LoRA runs
    EvalReport vanilla_moe, shared_a_moe;       // equal k and r
    EvalReport ft_ori, ft_tuned, moe_tuned;     // recipe rows (moe_ori == vanilla_moe)
    std::vector<std::pair<std::string, double>> disc_baseline;
    double comp_uniform_avg = 0.0, comp_trained_avg = 0.0;
    double seconds = 0.0;
};

TrainConfig peft_config(uint64_t seed) {
    TrainConfig c = TrainConfig::preset(Strategy::lora);
    c.lr = 1e-2;
    c.epochs = 8;
    c.batch = 32;
    c.rank = 8;
    c.experts = 5;
    c.seed = seed;
    return c;
}

SeedOutcome run_seed(int seed) {
    const auto t0 = Clock::now();
    GeneralSpec gen;
    gen.pretrain_size = 2000;
    gen.heldout_size = 100;
    gen.mix_pool_size = 400;
    gen.test_size = 150;
    SyntheticData data = generate_synthetic(default_discipline_specs(kTotalTrain), gen, 120,
                                            static_cast<uint64_t>(seed) * 101);

    ModelConfig mc;
    mc.n_layers = 2;
    mc.d_model = 32;
    mc.n_heads = 4;
    mc.vocab_size = data.vocab.size();
    mc.max_seq = 16;
    mc.seed = static_cast<uint64_t>(seed) * 17;
    BaseModel base = init_base(mc);

    TrainConfig pre = TrainConfig::preset(Strategy::full);
    pre.lr = 3e-3;
    pre.epochs = 12;
    pre.batch = 16;
    pre.seed = static_cast<uint64_t>(seed);
    PretrainResult pretrain = pretrain_base(base, data.general_pretrain, data.general_heldout, data.vocab, pre);
    REQUIRE(pretrain.final_heldout_loss < 0.9 * pretrain.initial_heldout_loss);

    SeedOutcome out;
    auto run_eval = [&](const Corpus& corpus, Strategy s, AdapterVariant v, double lr) {
        BaseModel model = base;
        TrainConfig cfg = peft_config(static_cast<uint64_t>(seed));
        cfg.strategy = s;
        cfg.variant = v;
        cfg.lr = lr;
        TrainOutput run = train(model, corpus, data.vocab, cfg);
        AdapterState* st = run.adapters ? &*run.adapters : nullptr;
        EvalReport rep = EvalReport::from_accuracies(evaluate_disciplines(model, st, data.test, data.vocab));
        rep.general_acc = eval_gen(model, st, data.general_test, data.vocab);
        return rep;
    };

    // discipline-LoRA baseline (one run per discipline, same hyperparameters)
    auto disc = train_discipline_loras(base, data.train, data.vocab, peft_config(static_cast<uint64_t>(seed)));
    std::vector<AdapterState> experts;
    for (auto& r : disc) {
        Corpus sub;
        for (const auto& s : data.test.samples)
            if (s.discipline == r.discipline) sub.samples.push_back(s);
        out.disc_baseline.push_back({r.discipline, evaluate_disciplines(base, &r.adapters, sub, data.vocab)[0].second});
        experts.push_back(r.adapters);
    }

    // composition: the trained gate should beat uniform routing
    {
        AdapterState uniform_comp = make_composition(experts, static_cast<uint64_t>(seed));
        BaseModel model = base;
        out.comp_uniform_avg =
            EvalReport::from_accuracies(evaluate_disciplines(model, &uniform_comp, data.test, data.vocab)).average;
        TrainConfig cfg = peft_config(static_cast<uint64_t>(seed));
        cfg.strategy = Strategy::lora_comp;
        TrainOutput comp = train_comp_gate(model, experts, data.train, data.vocab, cfg);
        out.comp_trained_avg =
            EvalReport::from_accuracies(evaluate_disciplines(model, &*comp.adapters, data.test, data.vocab)).average;
    }

    // law runs
    out.imbalanced = run_eval(data.train, Strategy::lora, AdapterVariant::moe_vanilla, 1e-2);

    auto stats = corpus_stats(data.train);
    std::vector<std::pair<size_t, std::string>> sizes;
    for (auto& row : stats.rows) sizes.push_back({row.samples, row.discipline});
    std::sort(sizes.begin(), sizes.end());
    const size_t median = sizes[sizes.size() / 2].first;
    Corpus balanced_corpus = upsample_diverse(data.train, sizes[0].second, median, static_cast<uint64_t>(seed) + 1);
    balanced_corpus = upsample_diverse(balanced_corpus, sizes[1].second, median, static_cast<uint64_t>(seed) + 2);
    out.balanced = run_eval(balanced_corpus, Strategy::lora, AdapterVariant::moe_vanilla, 1e-2);

    Corpus mixed = mix_general(data.train, data.general_mix, 70, static_cast<uint64_t>(seed) + 3);
    out.mix70 = run_eval(mixed, Strategy::lora, AdapterVariant::moe_vanilla, 1e-2);

    out.vanilla_moe = run_eval(data.train, Strategy::lora_moe, AdapterVariant::moe_vanilla, 1e-2);
    out.shared_a_moe = run_eval(data.train, Strategy::lora_moe, AdapterVariant::moe_shared_a, 1e-2);

    // recipe rows: tuned = balanced + mixed corpus, shared-A for the mixture
    Corpus tuned_corpus = mix_general(balanced_corpus, data.general_mix, 70, static_cast<uint64_t>(seed) + 3);
    out.ft_ori = run_eval(data.train, Strategy::full, AdapterVariant::moe_vanilla, 1e-3);
    out.ft_tuned = run_eval(tuned_corpus, Strategy::full, AdapterVariant::moe_vanilla, 1e-3);
    out.moe_tuned = run_eval(tuned_corpus, Strategy::lora_moe, AdapterVariant::moe_shared_a, 1e-2);

    out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
}

const std::vector<SeedOutcome>& outcomes() {
    static std::vector<SeedOutcome> all = [] {
        std::vector<SeedOutcome> v;
        for (int seed = 1; seed <= kSeeds; ++seed) {
            v.push_back(run_seed(seed));
            std::cout << "  seed " << seed << ": imbalanced avg " << format_fixed(v.back().imbalanced.average)
                      << ", balanced " << format_fixed(v.back().balanced.average) << ", shared-A "
                      << format_fixed(v.back().shared_a_moe.average) << " vs vanilla "
                      << format_fixed(v.back().vanilla_moe.average) << "  (" << format_fixed(v.back().seconds, 1)
                      << "s)\n";
        }
        return v;
    }();
    return all;
}

void pass(const std::string& label) { std::cout << "[" << label << "] PASS\n"; }

}  // namespace

TEST_CASE("criterion 8: directional laws at desk scale") {
    const auto t0 = Clock::now();
    const auto& all = outcomes();

    // 8a: cross-seed std on the two smallest disciplines exceeds the largest
    {
        std::vector<EvalReport> imb;
        for (const auto& o : all) imb.push_back(o.imbalanced);
        const auto var = seed_variance(imb);
        auto std_of = [&](const std::string& d) {
            for (const auto& v : var)
                if (v.discipline == d) return v.stddev;
            throw std::runtime_error("missing discipline " + d);
        };
        const double largest = std_of("math");
        const double small1 = std_of("biology");
        const double small2 = std_of("geography");
        INFO("std math=" << largest << " biology=" << small1 << " geography=" << small2);
        REQUIRE(small1 > largest);
        REQUIRE(small2 > largest);
        pass("criterion 8a: low-resource variance (biology " + format_fixed(small1, 4) + ", geography " +
             format_fixed(small2, 4) + " > math " + format_fixed(largest, 4) + ")");
    }

    // 8b: diverse upsampling to parity raises average accuracy
    {
        int wins = 0;
        for (const auto& o : all) wins += o.balanced.average > o.imbalanced.average;
        INFO("balanced > imbalanced in " << wins << "/" << kSeeds);
        REQUIRE(wins >= 3);
        pass("criterion 8b: balance-then-diversity (" + std::to_string(wins) + "/5 seeds)");
    }

    // 8c: mixing 70% general data raises general-task accuracy
    {
        int wins = 0;
        for (const auto& o : all) wins += *o.mix70.general_acc > *o.imbalanced.general_acc;
        INFO("mix70 > mix0 in " << wins << "/" << kSeeds);
        REQUIRE(wins >= 3);
        pass("criterion 8c: merge-then-align (" + std::to_string(wins) + "/5 seeds)");
    }

    // 8d: shared-A at equal k and r matches or beats the vanilla mixture
    {
        int wins = 0;
        for (const auto& o : all) wins += o.shared_a_moe.average >= o.vanilla_moe.average;
        INFO("shared-A >= vanilla in " << wins << "/" << kSeeds);
        REQUIRE(wins >= 3);
        pass("criterion 8d: share-then-specialize (" + std::to_string(wins) + "/5 seeds)");
    }

    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    REQUIRE(elapsed < 1800.0);
    std::cout << "  (laws total " << format_fixed(elapsed, 1) << "s)\n";
}

TEST_CASE("criterion 9: recipe pipeline") {
    const auto& all = outcomes();

    // recipe-tuned beats untuned for both strategies across seeds
    int ft_wins = 0, moe_wins = 0;
    for (const auto& o : all) {
        ft_wins += o.ft_tuned.average > o.ft_ori.average;
        moe_wins += o.moe_tuned.average > o.vanilla_moe.average;
    }
    INFO("ft tuned>ori " << ft_wins << "/5, moe tuned>ori " << moe_wins << "/5");
    REQUIRE(ft_wins >= 3);
    REQUIRE(moe_wins >= 3);

    // composition: the trained gate matches or beats uniform routing in a
    // majority of seeds
    int comp_wins = 0;
    for (const auto& o : all) comp_wins += o.comp_trained_avg >= o.comp_uniform_avg;
    INFO("comp trained >= uniform in " << comp_wins << "/5");
    REQUIRE(comp_wins >= 3);

    // delta-m is well defined against the per-seed discipline baseline and
    // exactly zero for the baseline itself
    for (const auto& o : all) {
        for (const auto& [d, a] : o.disc_baseline) REQUIRE(a > 0.0);
        EvalReport base_row = EvalReport::from_accuracies(o.disc_baseline);
        REQUIRE(delta_m_against(base_row, o.disc_baseline) == 0.0);
        REQUIRE(std::isfinite(delta_m_against(o.ft_tuned, o.disc_baseline)));
    }

    // the CLI pipeline end to end: emits the five-row comparison table with
    // the baseline row pinned at delta-m zero
    const fs::path dir = fs::temp_directory_path() / "loralab_acceptance_recipe";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cmd = std::string(LORALAB_CLI_PATH) + " recipe --config " + LORALAB_CONFIG_PATH + " --seed 1 --out " +
                            (dir / "results").string() + " > " + (dir / "out.txt").string() + " 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const fs::path table_path = dir / "results/recipe_seed1/recipe_table.csv";
    REQUIRE(fs::exists(table_path));
    std::ifstream table(table_path);
    std::string line;
    std::getline(table, line);
    REQUIRE(line.rfind("method,", 0) == 0);
    std::vector<std::string> rows;
    while (std::getline(table, line)) rows.push_back(line);
    REQUIRE(rows.size() == 5);
    REQUIRE(rows[0].rfind("discipline-lora,", 0) == 0);
    REQUIRE(rows[0].find("+0.000") != std::string::npos);
    for (const char* name : {"ft-original", "ft-tuned", "moe-original", "moe-tuned"}) {
        bool found = false;
        for (const auto& r : rows) found |= r.rfind(std::string(name) + ",", 0) == 0;
        REQUIRE(found);
    }
    fs::remove_all(dir);
    pass("criterion 9: recipe emits the comparison table, baseline delta-m 0, tuned beats original (ft " +
         std::to_string(ft_wins) + "/5, moe " + std::to_string(moe_wins) + "/5)");
}
