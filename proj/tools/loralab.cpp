// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Single entry point for the multi-discipline fine-tuning lab: data
// generation, corpus statistics, upsampling, training, sweeps, routing
// probes, and the end-to-end recipe.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 runtime
// dependency or data error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "loralab/checkpoint.hpp"
#include "loralab/config.hpp"
#include "loralab/data.hpp"
#include "loralab/eval.hpp"
#include "loralab/train.hpp"

namespace fs = std::filesystem;
using namespace loralab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string results_root() {
    if (const char* env = std::getenv("LORALAB_RESULTS")) return env;
    return "";
}

std::string file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

void write_provenance(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot write " + path);
    f << j.dump(2) << "\n";
}

std::string resolve_out(const std::string& flag_value, const ExperimentConfig& cfg) {
    if (!flag_value.empty()) return flag_value;
    const std::string root = results_root();
    if (!root.empty()) return root + "/" + cfg.out_dir;
    return cfg.out_dir;
}

Corpus read_corpus_checked(const std::string& path) {
    if (!fs::exists(path)) throw RuntimeError("corpus file not found: " + path);
    Corpus c = read_jsonl(path);
    if (c.samples.empty()) throw ConfigError("corpus is empty: " + path);
    return c;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct DataFiles {
    std::string dir;
    std::string train() const { return dir + "/train.jsonl"; }
    std::string test() const { return dir + "/test.jsonl"; }
    std::string general_pretrain() const { return dir + "/general_pretrain.jsonl"; }
    std::string general_heldout() const { return dir + "/general_heldout.jsonl"; }
    std::string general_mix() const { return dir + "/general_mix.jsonl"; }
    std::string general_test() const { return dir + "/general_test.jsonl"; }
    std::string vocab() const { return dir + "/vocab.txt"; }
};

void write_dataset(const SyntheticData& data, const DataFiles& files) {
    fs::create_directories(files.dir);
    write_jsonl(data.train, files.train());
    write_jsonl(data.test, files.test());
    write_jsonl(data.general_pretrain, files.general_pretrain());
    write_jsonl(data.general_heldout, files.general_heldout());
    write_jsonl(data.general_mix, files.general_mix());
    write_jsonl(data.general_test, files.general_test());
    data.vocab.save(files.vocab());
}

int cmd_gen_data(const std::string& config_path, uint64_t seed_override, bool has_seed, const std::string& out) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const uint64_t seed = has_seed ? seed_override : cfg.data.seed;
    SyntheticData data = generate_synthetic(cfg.discipline_specs(), cfg.general_spec(), cfg.data.test_per_discipline, seed);
    DataFiles files{resolve_out(out, cfg)};
    write_dataset(data, files);
    std::ofstream stats_file(files.dir + "/stats.csv", std::ios::binary);
    write_stats_csv(corpus_stats(data.train), stats_file);
    write_provenance(files.dir + "/provenance.json",
                     {{"command", "gen-data"},
                      {"seed", seed},
                      {"config", config_path},
                      {"config_hash", config_hash(config_path)}});
    std::cout << "wrote " << files.dir << "/{train,test,general_pretrain,general_heldout,general_mix,general_test}.jsonl"
              << " (" << data.train.samples.size() << " train samples, vocab " << data.vocab.size() << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

int cmd_stats(const std::string& corpus_path, const std::string& csv_out) {
    Corpus c = read_corpus_checked(corpus_path);
    CorpusStats stats = corpus_stats(c);
    std::ostringstream csv;
    write_stats_csv(stats, csv);
    if (!csv_out.empty()) {
        std::ofstream f(csv_out, std::ios::binary);
        if (!f) throw RuntimeError("cannot write " + csv_out);
        f << csv.str();
    }
    size_t width = 12;
    for (const auto& r : stats.rows) width = std::max(width, r.discipline.size() + 2);
    std::cout << std::left << std::setw(static_cast<int>(width)) << "discipline" << std::right << std::setw(9)
              << "samples" << std::setw(8) << "share" << std::setw(10) << "avg_len" << std::setw(9) << "unique"
              << "\n";
    for (const auto& r : stats.rows)
        std::cout << std::left << std::setw(static_cast<int>(width)) << r.discipline << std::right << std::setw(9)
                  << r.samples << std::setw(8) << format_fixed(r.share_pct, 1) << std::setw(10)
                  << format_fixed(r.avg_words, 2) << std::setw(9) << r.unique_tokens << "\n";
    std::cout << std::left << std::setw(static_cast<int>(width)) << "total" << std::right << std::setw(9)
              << stats.total_samples << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// upsample
// ---------------------------------------------------------------------------

int cmd_upsample(const std::string& corpus_path, const std::string& discipline, size_t target,
                 const std::string& strategy, uint64_t seed, const std::string& out) {
    Corpus c = read_corpus_checked(corpus_path);
    const double before = ngram_diversity(c);
    Corpus up;
    if (strategy == "diverse")
        up = upsample_diverse(c, discipline, target, seed);
    else if (strategy == "unique")
        up = upsample_unique(c, discipline, target, seed);
    else
        throw ConfigError("upsample: unknown strategy '" + strategy + "' (diverse|unique)");
    const double after = ngram_diversity(up);
    write_jsonl(up, out);
    write_provenance(out + ".provenance.json", {{"command", "upsample"},
                                                {"corpus", corpus_path},
                                                {"corpus_hash", file_hash(corpus_path)},
                                                {"discipline", discipline},
                                                {"target", target},
                                                {"strategy", strategy},
                                                {"seed", seed},
                                                {"diversity_before", before},
                                                {"diversity_after", after}});
    std::cout << "diversity " << format_fixed(before, 4) << " -> " << format_fixed(after, 4) << ", wrote " << out
              << " (" << up.samples.size() << " samples)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct LabData {
    Vocab vocab;
    Corpus train, test, general_pretrain, general_heldout, general_mix, general_test;
};

LabData load_lab_data(const DataFiles& files) {
    for (const std::string& p : {files.train(), files.test(), files.general_pretrain(), files.general_heldout(),
                                 files.general_mix(), files.general_test(), files.vocab()})
        if (!fs::exists(p)) throw RuntimeError("missing data file " + p + " (run gen-data first)");
    LabData d;
    d.vocab = Vocab::load(files.vocab());
    d.train = read_jsonl(files.train());
    d.test = read_jsonl(files.test());
    d.general_pretrain = read_jsonl(files.general_pretrain());
    d.general_heldout = read_jsonl(files.general_heldout());
    d.general_mix = read_jsonl(files.general_mix());
    d.general_test = read_jsonl(files.general_test());
    return d;
}

// The pretrained base is cached per (model config, pretrain config, data
// hash); every experiment shares it.
std::string ensure_base(const ExperimentConfig& cfg, const LabData& data, const DataFiles& files,
                        const std::string& out_dir) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = data.vocab.size();
    const std::string key = hex64(fnv1a64(nlohmann::json({{"model", {{"layers", mc.n_layers},
                                                                     {"d", mc.d_model},
                                                                     {"heads", mc.n_heads},
                                                                     {"seq", mc.max_seq},
                                                                     {"ffn", mc.ffn_mult},
                                                                     {"seed", mc.seed}}},
                                                          {"pre", cfg.pretrain_config().to_json()},
                                                          {"data", file_hash(files.general_pretrain())}})
                                              .dump()));
    const std::string path = out_dir + "/base_" + key + ".ck";
    if (fs::exists(path)) return path;
    fs::create_directories(out_dir);
    BaseModel model = init_base(mc);
    const double init_loss = corpus_loss(model, nullptr, data.general_heldout, data.vocab, true);
    PretrainResult res = pretrain_base(model, data.general_pretrain, data.general_heldout, data.vocab,
                                       cfg.pretrain_config(), path);
    std::cout << "pretrained base: held-out loss " << format_fixed(init_loss) << " -> "
              << format_fixed(res.final_heldout_loss) << " (" << path << ")\n";
    if (res.final_heldout_loss >= res.initial_heldout_loss)
        throw RuntimeError("pretraining failed to improve held-out loss");
    RunRecord rec = res.record;
    rec.wall_seconds = 0.0;  // cached artifacts stay byte-stable
    fs::create_directories(out_dir + "/records");
    save_run_record(rec, out_dir + "/records/pretrain_" + rec.run_id + ".json");
    return path;
}

EvalReport evaluate_run(BaseModel& model, AdapterState* adapters, const LabData& data, int max_new,
                        const std::vector<SlotSpec>& slots, Strategy strategy, AdapterVariant variant, int rank,
                        int experts) {
    EvalReport rep = EvalReport::from_accuracies(evaluate_disciplines(model, adapters, data.test, data.vocab, max_new));
    rep.general_acc = eval_gen(model, adapters, data.general_test, data.vocab, max_new);
    rep.param_fraction =
        trainable_param_count(slots, base_param_count_formula(model.config), strategy, variant, rank, experts).fraction();
    return rep;
}

std::string lora_checkpoint_name(const std::string& out_dir, const std::string& discipline) {
    return out_dir + "/lora_" + discipline + ".ck";
}

int cmd_train(const std::string& config_path, const std::string& strategy_flag, const std::string& variant_flag,
              int rank_flag, int experts_flag, double data_fraction, uint64_t seed_override, bool has_seed,
              const std::string& data_dir_flag, const std::string& out_flag, bool per_discipline) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const std::string out_dir = resolve_out(out_flag, cfg);
    DataFiles files{data_dir_flag.empty() ? out_dir + "/data" : data_dir_flag};
    LabData data = load_lab_data(files);

    TrainConfig tc = cfg.train;
    if (!strategy_flag.empty()) tc.strategy = strategy_from_name(strategy_flag);
    if (!variant_flag.empty()) tc.variant = variant_from_name(variant_flag);
    if (rank_flag > 0) tc.rank = rank_flag;
    if (experts_flag > 0) tc.experts = experts_flag;
    if (has_seed) tc.seed = seed_override;
    tc.validate();

    ModelConfig mc = cfg.model;
    mc.vocab_size = data.vocab.size();
    const std::string base_path = ensure_base(cfg, data, files, out_dir);
    LoadedBase base = load_base(base_path);
    const auto slots = adapter_slots(base.model.config);
    fs::create_directories(out_dir + "/records");

    Corpus train_corpus = data.train;
    if (data_fraction < 1.0) train_corpus = subset(train_corpus, data_fraction, tc.seed);

    if (per_discipline) {
        auto runs = train_discipline_loras(base.model, train_corpus, data.vocab, tc);
        std::vector<std::pair<std::string, double>> baseline;
        for (auto& r : runs) {
            const std::string ck = lora_checkpoint_name(out_dir, r.discipline);
            save_adapters(ck, r.adapters, base_path);
            r.record.checkpoint_path = ck;
            save_run_record(r.record, out_dir + "/records/" + r.record.run_id + ".json");
            Corpus sub;
            for (const auto& s : data.test.samples)
                if (s.discipline == r.discipline) sub.samples.push_back(s);
            const double acc = evaluate_disciplines(base.model, &r.adapters, sub, data.vocab, cfg.eval.max_new)[0].second;
            baseline.push_back({r.discipline, acc});
            std::cout << "discipline " << r.discipline << ": accuracy " << format_fixed(acc) << ", checkpoint " << ck
                      << "\n";
        }
        BaselineRegistry registry(out_dir + "/baselines.json");
        registry.register_baseline("discipline-lora", baseline);
        std::cout << "registered baseline 'discipline-lora' (" << registry.hash("discipline-lora") << ")\n";
        return kExitOk;
    }

    TrainOutput run;
    if (tc.strategy == Strategy::lora_comp) {
        std::vector<AdapterState> experts;
        for (const auto& d : train_corpus.disciplines()) {
            const std::string ck = lora_checkpoint_name(out_dir, d);
            if (!fs::exists(ck))
                throw RuntimeError("lora_comp needs expert checkpoint " + ck + "; run `train --per-discipline` first");
            experts.push_back(load_adapters(ck));
        }
        run = train_comp_gate(base.model, experts, train_corpus, data.vocab, tc);
    } else {
        run = train(base.model, train_corpus, data.vocab, tc);
    }

    std::string ck_name = out_dir + "/" + std::string(strategy_name(tc.strategy));
    if (tc.strategy == Strategy::lora_moe) ck_name += std::string("_") + variant_name(tc.variant);
    ck_name += "_seed" + std::to_string(tc.seed) + ".ck";
    if (run.adapters)
        save_adapters(ck_name, *run.adapters, base_path);
    else
        save_base(ck_name, base.model, data.vocab);
    run.record.checkpoint_path = ck_name;
    run.record.config["experiment_config_hash"] = config_hash(config_path);
    save_run_record(run.record, out_dir + "/records/" + run.record.run_id + ".json");

    AdapterState* st = run.adapters ? &*run.adapters : nullptr;
    EvalReport rep = evaluate_run(base.model, st, data, cfg.eval.max_new, slots, tc.strategy, tc.variant, tc.rank,
                                  tc.experts);
    rep.run_id = run.record.run_id;
    rep.config = run.record.config;
    BaselineRegistry registry(out_dir + "/baselines.json");
    if (registry.contains("discipline-lora"))
        rep.delta_m_vs = {"discipline-lora", delta_m_against(rep, registry.get("discipline-lora"))};
    emit_report_json(rep, out_dir + "/report_" + run.record.run_id + ".json");
    emit_report_csv(rep, out_dir + "/report_" + run.record.run_id + ".csv");
    std::cout << report_table(rep);
    const auto count = trainable_param_count(slots, base_param_count_formula(base.model.config), tc.strategy,
                                             tc.variant, tc.rank, tc.experts);
    std::cout << "trainable parameters: " << count.count << " (" << format_fixed(count.fraction() * 100.0, 3)
              << "% of base)\n";
    std::cout << "run " << run.record.run_id << " complete, checkpoint " << ck_name << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::string& values_csv, int jobs,
              const std::string& data_dir_flag, const std::string& out_flag) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const std::string out_dir = resolve_out(out_flag, cfg);
    DataFiles files{data_dir_flag.empty() ? out_dir + "/data" : data_dir_flag};
    LabData data = load_lab_data(files);
    if (axis != "data_fraction" && axis != "rank" && axis != "experts")
        throw ConfigError("sweep: unknown axis '" + axis + "' (data_fraction|rank|experts)");

    std::vector<double> values;
    {
        std::stringstream ss(values_csv);
        std::string part;
        while (std::getline(ss, part, ',')) values.push_back(std::stod(part));
        if (values.empty()) throw ConfigError("sweep: no values given");
    }

    const std::string base_path = ensure_base(cfg, data, files, out_dir);
    fs::create_directories(out_dir + "/records");
    const auto slots = adapter_slots(load_base(base_path).model.config);

    struct SweepRow {
        double value;
        EvalReport report;
        RunRecord record;
    };
    auto run_one = [&](double value) {
        TrainConfig tc = cfg.train;
        Corpus corpus = data.train;
        if (axis == "data_fraction")
            corpus = subset(corpus, value, tc.seed);
        else if (axis == "rank")
            tc.rank = static_cast<int>(value);
        else
            tc.experts = static_cast<int>(value);
        tc.validate();
        LoadedBase base = load_base(base_path);
        TrainOutput run = train(base.model, corpus, data.vocab, tc);
        AdapterState* st = run.adapters ? &*run.adapters : nullptr;
        EvalReport rep = evaluate_run(base.model, st, data, cfg.eval.max_new, slots, tc.strategy, tc.variant, tc.rank,
                                      tc.experts);
        rep.run_id = run.record.run_id;
        return SweepRow{value, std::move(rep), std::move(run.record)};
    };

    std::vector<SweepRow> rows(values.size());
    if (jobs <= 1) {
        for (size_t i = 0; i < values.size(); ++i) rows[i] = run_one(values[i]);
    } else {
        for (size_t at = 0; at < values.size(); at += static_cast<size_t>(jobs)) {
            std::vector<std::future<SweepRow>> batch;
            for (size_t i = at; i < std::min(values.size(), at + static_cast<size_t>(jobs)); ++i)
                batch.push_back(std::async(std::launch::async, run_one, values[i]));
            for (size_t i = 0; i < batch.size(); ++i) rows[at + i] = batch[i].get();
        }
    }

    const std::string csv_path = out_dir + "/sweep_" + axis + ".csv";
    std::ofstream csv(csv_path, std::ios::binary);
    csv << "axis,value,average,general_acc,param_fraction,run_id\n";
    for (auto& row : rows) {
        row.record.config["experiment_config_hash"] = config_hash(config_path);
        save_run_record(row.record, out_dir + "/records/" + row.record.run_id + ".json");
        emit_report_json(row.report, out_dir + "/report_" + row.record.run_id + ".json");
        csv << axis << "," << row.value << "," << format_fixed(row.report.average) << ","
            << format_fixed(row.report.general_acc.value_or(0.0)) << ","
            << format_fixed(row.report.param_fraction, 6) << "," << row.report.run_id << "\n";
        std::cout << axis << "=" << row.value << ": average " << format_fixed(row.report.average) << ", params "
                  << format_fixed(row.report.param_fraction * 100.0, 3) << "%\n";
    }
    std::cout << "wrote " << csv_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// route-probe
// ---------------------------------------------------------------------------

int cmd_route_probe(const std::string& checkpoint, const std::string& base_path, const std::string& corpus_path,
                    int layer_flag, const std::string& out) {
    if (!fs::exists(checkpoint)) throw RuntimeError("checkpoint not found: " + checkpoint);
    if (checkpoint_kind(checkpoint) != "adapter") throw RuntimeError("route-probe: " + checkpoint + " is not an adapter checkpoint");
    AdapterState st = load_adapters(checkpoint);
    if (!variant_has_gate(st.variant)) throw RuntimeError("route-probe: '" + std::string(variant_name(st.variant)) + "' adapters have no gate");
    LoadedBase base = load_base(base_path);
    Corpus corpus = read_corpus_checked(corpus_path);
    const int layer = layer_flag >= 0 ? layer_flag : base.model.config.n_layers - 1;
    RoutingMatrix rm = routing_probe(base.model, st, corpus, base.vocab, layer);
    std::ostringstream csv;
    rm.write_csv(csv);
    if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        f << csv.str();
        std::cout << "wrote " << out << "\n";
    } else {
        std::cout << csv.str();
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// recipe
// ---------------------------------------------------------------------------

// End-to-end pipeline: generate, balance the two smallest disciplines by
// diverse upsampling to the median size, mix general data, train the
// discipline baseline plus original/tuned FT and LoRA-MoE, and emit the
// comparison table.
int cmd_recipe(const std::string& config_path, uint64_t seed_override, bool has_seed, const std::string& out_flag) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const uint64_t seed = has_seed ? seed_override : cfg.data.seed;
    const std::string out_dir = resolve_out(out_flag, cfg) + "/recipe_seed" + std::to_string(seed);
    std::string stage = "generate";
    try {
        SyntheticData data = generate_synthetic(cfg.discipline_specs(), cfg.general_spec(), cfg.data.test_per_discipline, seed);
        DataFiles files{out_dir + "/data"};
        write_dataset(data, files);

        stage = "pretrain";
        LabData lab = load_lab_data(files);
        const std::string base_path = ensure_base(cfg, lab, files, out_dir);
        LoadedBase base = load_base(base_path);
        const auto slots = adapter_slots(base.model.config);
        fs::create_directories(out_dir + "/records");

        TrainConfig peft = cfg.train;
        peft.seed = seed;
        TrainConfig ft = peft;
        ft.strategy = Strategy::full;
        ft.lr = cfg.recipe.ft_lr;
        ft.weight_decay = TrainConfig::preset(Strategy::full).weight_decay;
        ft.warmup_ratio = TrainConfig::preset(Strategy::full).warmup_ratio;

        stage = "discipline-baseline";
        TrainConfig disc_cfg = peft;
        disc_cfg.strategy = Strategy::lora;
        auto disc = train_discipline_loras(base.model, lab.train, lab.vocab, disc_cfg);
        std::vector<std::pair<std::string, double>> baseline;
        for (auto& r : disc) {
            save_adapters(lora_checkpoint_name(out_dir, r.discipline), r.adapters, base_path);
            Corpus sub;
            for (const auto& s : lab.test.samples)
                if (s.discipline == r.discipline) sub.samples.push_back(s);
            baseline.push_back(
                {r.discipline, evaluate_disciplines(base.model, &r.adapters, sub, lab.vocab, cfg.eval.max_new)[0].second});
        }
        BaselineRegistry registry(out_dir + "/baselines.json");
        registry.register_baseline("discipline-lora", baseline);

        stage = "balance";
        auto stats = corpus_stats(lab.train);
        std::vector<std::pair<size_t, std::string>> sizes;
        for (auto& row : stats.rows) sizes.push_back({row.samples, row.discipline});
        std::sort(sizes.begin(), sizes.end());
        const size_t median = sizes[sizes.size() / 2].first;
        Corpus tuned_corpus = upsample_diverse(lab.train, sizes[0].second, median, seed + 1);
        tuned_corpus = upsample_diverse(tuned_corpus, sizes[1].second, median, seed + 2);
        stage = "mix";
        tuned_corpus = mix_general(tuned_corpus, lab.general_mix, cfg.recipe.mix_percent, seed + 3);
        write_jsonl(tuned_corpus, out_dir + "/data/train_tuned.jsonl");

        auto run_row = [&](const std::string& name, const Corpus& corpus, TrainConfig tc,
                           AdapterVariant variant) -> EvalReport {
            stage = name;
            tc.variant = variant;
            LoadedBase m = load_base(base_path);
            TrainOutput run = train(m.model, corpus, lab.vocab, tc);
            AdapterState* st = run.adapters ? &*run.adapters : nullptr;
            EvalReport rep = evaluate_run(m.model, st, lab, cfg.eval.max_new, slots, tc.strategy, tc.variant, tc.rank,
                                          tc.experts);
            rep.run_id = run.record.run_id;
            rep.config = run.record.config;
            rep.delta_m_vs = {"discipline-lora", delta_m_against(rep, baseline)};
            const std::string ck = out_dir + "/" + name + ".ck";
            if (run.adapters)
                save_adapters(ck, *run.adapters, base_path);
            else
                save_base(ck, m.model, lab.vocab);
            run.record.checkpoint_path = ck;
            run.record.wall_seconds = 0.0;  // recipe outputs are byte-stable per (config, seed)
            save_run_record(run.record, out_dir + "/records/" + run.record.run_id + ".json");
            emit_report_json(rep, out_dir + "/report_" + name + ".json");
            return rep;
        };

        TrainConfig moe = peft;
        moe.strategy = Strategy::lora_moe;
        EvalReport ft_ori = run_row("ft_ori", lab.train, ft, AdapterVariant::moe_vanilla);
        EvalReport ft_tuned = run_row("ft_tuned", tuned_corpus, ft, AdapterVariant::moe_vanilla);
        EvalReport moe_ori = run_row("moe_ori", lab.train, moe, AdapterVariant::moe_vanilla);
        EvalReport moe_tuned = run_row("moe_tuned", tuned_corpus, moe, AdapterVariant::moe_shared_a);

        stage = "report";
        EvalReport disc_row = EvalReport::from_accuracies(baseline);
        disc_row.delta_m_vs = {"discipline-lora", 0.0};
        disc_row.param_fraction = trainable_param_count(slots, base_param_count_formula(base.model.config),
                                                        Strategy::lora, AdapterVariant::lora, peft.rank, 1)
                                      .fraction();

        const std::vector<std::pair<std::string, const EvalReport*>> rows = {
            {"discipline-lora", &disc_row}, {"ft-original", &ft_ori},   {"ft-tuned", &ft_tuned},
            {"moe-original", &moe_ori},     {"moe-tuned", &moe_tuned}};

        std::ostringstream table, csv;
        csv << "method";
        for (const auto& [d, a] : disc_row.per_discipline) csv << "," << d;
        csv << ",average,delta_m,param_pct\n";
        table << std::left << std::setw(18) << "method";
        for (const auto& [d, a] : disc_row.per_discipline) table << std::setw(11) << d.substr(0, 9);
        table << std::setw(9) << "avg" << std::setw(10) << "delta_m" << "param%\n";
        for (const auto& [name, rep] : rows) {
            csv << name;
            table << std::left << std::setw(18) << name;
            for (const auto& [d, a] : rep->per_discipline) {
                csv << "," << format_fixed(a);
                table << std::setw(11) << format_fixed(a);
            }
            csv << "," << format_fixed(rep->average) << "," << format_signed(rep->delta_m_vs->second) << ","
                << format_fixed(rep->param_fraction * 100.0, 3) << "\n";
            table << std::setw(9) << format_fixed(rep->average) << std::setw(10)
                  << format_signed(rep->delta_m_vs->second) << format_fixed(rep->param_fraction * 100.0, 3) << "%\n";
        }
        std::ofstream csv_file(out_dir + "/recipe_table.csv", std::ios::binary);
        csv_file << csv.str();
        std::ofstream table_file(out_dir + "/recipe_table.txt", std::ios::binary);
        table_file << table.str();
        write_provenance(out_dir + "/provenance.json", {{"command", "recipe"},
                                                        {"seed", seed},
                                                        {"config", config_path},
                                                        {"config_hash", config_hash(config_path)}});
        std::cout << table.str();
        std::cout << "recipe complete under " << out_dir << "\n";
        return kExitOk;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw RuntimeError("recipe stage '" + stage + "' failed: " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"loralab: a desk-scale multi-discipline fine-tuning laboratory"};
    app.require_subcommand(1);

    std::string config_path, corpus_path, out, data_dir, discipline, strategy, variant, axis, values, checkpoint,
        base_path, csv_out;
    uint64_t seed = 0;
    bool per_discipline = false;
    int rank = 0, experts = 0, jobs = 1, layer = -1;
    double data_fraction = 1.0;
    size_t target = 0;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic multi-discipline corpus");
    gen->add_option("--config", config_path, "experiment config file")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "generation seed (defaults to data.seed)");
    gen->add_option("--out", out, "output directory (defaults to out.dir/data)");

    auto* stats = app.add_subcommand("stats", "corpus statistics table and CSV");
    stats->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    stats->add_option("--csv", csv_out, "also write CSV here");

    auto* ups = app.add_subcommand("upsample", "upsample one discipline");
    ups->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    ups->add_option("--discipline", discipline, "discipline name")->required();
    ups->add_option("--target", target, "target sample count")->required();
    ups->add_option("--strategy", strategy, "diverse|unique")->required();
    ups->add_option("--seed", seed, "sampling seed")->default_val(1);
    ups->add_option("--out", out, "output JSONL path")->required();

    auto* tr = app.add_subcommand("train", "train one strategy (or all per-discipline baselines)");
    tr->add_option("--config", config_path, "experiment config file")->required();
    tr->add_option("--strategy", strategy, "full|lora|lora_moe|lora_comp");
    tr->add_option("--variant", variant, "vanilla|shared_expert|shared_a|rank_wise");
    tr->add_option("--rank", rank, "LoRA rank override");
    tr->add_option("--experts", experts, "expert count override");
    tr->add_option("--data-fraction", data_fraction, "per-discipline training subset")->default_val(1.0);
    auto* tr_seed = tr->add_option("--seed", seed, "training seed override");
    tr->add_option("--data", data_dir, "data directory (defaults to out.dir/data)");
    tr->add_option("--out", out, "results directory (defaults to out.dir)");
    tr->add_flag("--per-discipline", per_discipline, "train one LoRA per discipline and register the baseline");

    auto* sw = app.add_subcommand("sweep", "run a sweep along one axis");
    sw->add_option("--config", config_path, "experiment config file")->required();
    sw->add_option("--axis", axis, "data_fraction|rank|experts")->required();
    sw->add_option("--values", values, "comma-separated values")->required();
    sw->add_option("--jobs", jobs, "concurrent runs")->default_val(1);
    sw->add_option("--data", data_dir, "data directory (defaults to out.dir/data)");
    sw->add_option("--out", out, "results directory (defaults to out.dir)");

    auto* rp = app.add_subcommand("route-probe", "per-discipline mean routing weights at the final ffn slot");
    rp->add_option("--checkpoint", checkpoint, "adapter checkpoint")->required();
    rp->add_option("--base", base_path, "base checkpoint")->required();
    rp->add_option("--corpus", corpus_path, "discipline-tagged JSONL corpus")->required();
    rp->add_option("--layer", layer, "probed layer (defaults to the last)");
    rp->add_option("--out", out, "write CSV here instead of stdout");

    auto* rc = app.add_subcommand("recipe", "end-to-end balanced + mixed pipeline with the comparison table");
    rc->add_option("--config", config_path, "experiment config file")->required();
    auto* rc_seed = rc->add_option("--seed", seed, "pipeline seed (defaults to data.seed)");
    rc->add_option("--out", out, "results directory (defaults to out.dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, seed, !gen_seed->empty(), out);
        if (stats->parsed()) return cmd_stats(corpus_path, csv_out);
        if (ups->parsed()) return cmd_upsample(corpus_path, discipline, target, strategy, seed, out);
        if (tr->parsed())
            return cmd_train(config_path, strategy, variant, rank, experts, data_fraction, seed, !tr_seed->empty(),
                             data_dir, out, per_discipline);
        if (sw->parsed()) return cmd_sweep(config_path, axis, values, jobs, data_dir, out);
        if (rp->parsed()) return cmd_route_probe(checkpoint, base_path, corpus_path, layer, out);
        if (rc->parsed()) return cmd_recipe(config_path, seed, !rc_seed->empty(), out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
