// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "loralab/data.hpp"
#include "loralab/model.hpp"
#include "loralab/train.hpp"
#include "loralab/vocab.hpp"

namespace loralab {

// ---------------------------------------------------------------------------
// Accuracy in both scoring modes
// ---------------------------------------------------------------------------

// Multiple choice: the gold option must win the log-likelihood comparison.
inline double eval_mc(BaseModel& model, AdapterState* adapters, const Corpus& testset, const Vocab& vocab) {
    if (testset.samples.empty()) throw std::invalid_argument("eval_mc: empty testset");
    size_t correct = 0;
    for (const auto& s : testset.samples) {
        if (!s.multiple_choice()) throw std::invalid_argument("eval_mc: sample " + s.id + " has no options");
        std::vector<std::vector<int>> options;
        for (const auto& o : s.options) options.push_back(vocab.encode(o));
        const int picked = score_options(model, adapters, vocab.encode(s.prompt), options, vocab.ans_id());
        if (picked == s.gold_option()) correct += 1;
    }
    return static_cast<double>(correct) / static_cast<double>(testset.samples.size());
}

// Generative: greedy decode, take the span after the answer delimiter,
// require an exact token match. A generation without the delimiter scores
// incorrect and the run continues.
inline bool eval_gen_sample(BaseModel& model, AdapterState* adapters, const Sample& s, const Vocab& vocab,
                            int max_new) {
    const std::vector<int> generated = greedy_decode(model, adapters, vocab.encode(s.prompt), max_new, vocab.eos_id());
    const int ans = vocab.ans_id();
    auto it = std::find(generated.begin(), generated.end(), ans);
    if (it == generated.end()) return false;
    const std::vector<int> span(it + 1, generated.end());
    return span == vocab.encode(s.answer);
}

inline double eval_gen(BaseModel& model, AdapterState* adapters, const Corpus& testset, const Vocab& vocab,
                       int max_new = 8) {
    if (testset.samples.empty()) throw std::invalid_argument("eval_gen: empty testset");
    size_t correct = 0;
    for (const auto& s : testset.samples)
        if (eval_gen_sample(model, adapters, s, vocab, max_new)) correct += 1;
    return static_cast<double>(correct) / static_cast<double>(testset.samples.size());
}

// Per-discipline accuracy using each sample's native format.
inline std::vector<std::pair<std::string, double>> evaluate_disciplines(BaseModel& model, AdapterState* adapters,
                                                                        const Corpus& testset, const Vocab& vocab,
                                                                        int max_new = 8) {
    if (testset.samples.empty()) throw std::invalid_argument("evaluate_disciplines: empty testset");
    std::vector<std::string> order = testset.disciplines();
    std::map<std::string, std::pair<size_t, size_t>> tally;  // correct, total
    for (const auto& s : testset.samples) {
        bool ok = false;
        if (s.multiple_choice()) {
            std::vector<std::vector<int>> options;
            for (const auto& o : s.options) options.push_back(vocab.encode(o));
            ok = score_options(model, adapters, vocab.encode(s.prompt), options, vocab.ans_id()) == s.gold_option();
        } else {
            ok = eval_gen_sample(model, adapters, s, vocab, max_new);
        }
        auto& t = tally[s.discipline];
        t.first += ok ? 1 : 0;
        t.second += 1;
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& d : order)
        out.emplace_back(d, static_cast<double>(tally[d].first) / static_cast<double>(tally[d].second));
    return out;
}

// ---------------------------------------------------------------------------
// Delta-m and cross-seed variance
// ---------------------------------------------------------------------------

// Mean relative per-discipline change versus a baseline, in percent:
// (100 / T) * sum_t (acc_t - base_t) / base_t
inline double delta_m(const std::vector<double>& accs, const std::vector<double>& baseline) {
    if (accs.size() != baseline.size() || accs.empty()) throw std::invalid_argument("delta_m: length mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < accs.size(); ++i) {
        if (baseline[i] <= 0.0) throw std::invalid_argument("delta_m: baseline entries must be positive");
        sum += (accs[i] - baseline[i]) / baseline[i];
    }
    return 100.0 * sum / static_cast<double>(accs.size());
}

struct EvalReport {
    std::string run_id;
    nlohmann::json config;
    std::vector<std::pair<std::string, double>> per_discipline;
    double average = 0.0;
    std::optional<std::pair<std::string, double>> delta_m_vs;  // baseline name, value
    double param_fraction = 0.0;
    std::optional<double> general_acc;
    std::optional<std::vector<std::vector<double>>> routing;  // disciplines x experts

    static EvalReport from_accuracies(std::vector<std::pair<std::string, double>> accs) {
        EvalReport r;
        r.per_discipline = std::move(accs);
        double s = 0.0;
        for (const auto& [d, a] : r.per_discipline) s += a;
        r.average = r.per_discipline.empty() ? 0.0 : s / static_cast<double>(r.per_discipline.size());
        return r;
    }

    std::vector<double> accuracy_vector() const {
        std::vector<double> out;
        for (const auto& [d, a] : per_discipline) out.push_back(a);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [d, a] : per_discipline) per[d] = a;
        nlohmann::json j = {{"run_id", run_id},
                            {"config", config},
                            {"per_discipline", per},
                            {"average", average},
                            {"param_fraction", param_fraction}};
        if (delta_m_vs) j["delta_m"] = {{"baseline", delta_m_vs->first}, {"value", delta_m_vs->second}};
        if (general_acc) j["general_acc"] = *general_acc;
        if (routing) j["routing"] = *routing;
        return j;
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        r.run_id = j.value("run_id", "");
        if (j.contains("config")) r.config = j.at("config");
        for (auto it = j.at("per_discipline").begin(); it != j.at("per_discipline").end(); ++it)
            r.per_discipline.emplace_back(it.key(), it.value().get<double>());
        r.average = j.at("average").get<double>();
        r.param_fraction = j.value("param_fraction", 0.0);
        if (j.contains("delta_m"))
            r.delta_m_vs = {j.at("delta_m").at("baseline").get<std::string>(), j.at("delta_m").at("value").get<double>()};
        if (j.contains("general_acc")) r.general_acc = j.at("general_acc").get<double>();
        if (j.contains("routing")) r.routing = j.at("routing").get<std::vector<std::vector<double>>>();
        return r;
    }
};

struct DisciplineVariance {
    std::string discipline;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
};

inline std::vector<DisciplineVariance> seed_variance(const std::vector<EvalReport>& reports) {
    if (reports.size() < 2) throw std::invalid_argument("seed_variance: need at least two reports");
    const auto& ref = reports[0].per_discipline;
    for (const auto& r : reports) {
        if (r.per_discipline.size() != ref.size()) throw std::invalid_argument("seed_variance: discipline sets differ");
        for (size_t i = 0; i < ref.size(); ++i)
            if (r.per_discipline[i].first != ref[i].first)
                throw std::invalid_argument("seed_variance: discipline sets differ");
    }
    std::vector<DisciplineVariance> out;
    const double n = static_cast<double>(reports.size());
    for (size_t i = 0; i < ref.size(); ++i) {
        DisciplineVariance v;
        v.discipline = ref[i].first;
        bool all_equal = true;
        for (const auto& r : reports) {
            v.mean += r.per_discipline[i].second;
            all_equal = all_equal && r.per_discipline[i].second == ref[i].second;
        }
        v.mean /= n;
        if (!all_equal) {  // identical inputs stay exactly at zero
            double sq = 0.0;
            for (const auto& r : reports) {
                const double d = r.per_discipline[i].second - v.mean;
                sq += d * d;
            }
            v.stddev = std::sqrt(sq / (n - 1.0));
        }
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline std::string format_fixed(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::string format_signed(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+.*f", decimals, v);
    return buf;
}

inline void emit_report_json(const EvalReport& r, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_report_json: cannot open " + path);
    f << r.to_json().dump(2) << "\n";
}

inline void emit_report_csv(const EvalReport& r, std::ostream& os) {
    os << "discipline,accuracy\n";
    for (const auto& [d, a] : r.per_discipline) os << d << "," << format_fixed(a) << "\n";
}

inline void emit_report_csv(const EvalReport& r, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("emit_report_csv: cannot open " + path);
    emit_report_csv(r, f);
}

inline std::string report_table(const EvalReport& r) {
    std::ostringstream os;
    size_t width = 10;
    for (const auto& [d, a] : r.per_discipline) width = std::max(width, d.size() + 2);
    os << std::left << std::setw(static_cast<int>(width)) << "discipline" << "accuracy\n";
    for (const auto& [d, a] : r.per_discipline)
        os << std::left << std::setw(static_cast<int>(width)) << d << format_fixed(a) << "\n";
    os << std::left << std::setw(static_cast<int>(width)) << "average" << format_fixed(r.average) << "\n";
    if (r.general_acc) os << std::left << std::setw(static_cast<int>(width)) << "general" << format_fixed(*r.general_acc) << "\n";
    if (r.delta_m_vs)
        os << std::left << std::setw(static_cast<int>(width)) << "delta_m" << format_signed(r.delta_m_vs->second)
           << "  (vs " << r.delta_m_vs->first << ")\n";
    os << std::left << std::setw(static_cast<int>(width)) << "param_frac" << format_fixed(r.param_fraction * 100.0, 3)
       << "%\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Baseline registry
// ---------------------------------------------------------------------------

// Named accuracy vectors persisted across runs. A registered baseline is
// immutable: re-registering must carry identical values.
class BaselineRegistry {
public:
    explicit BaselineRegistry(std::string path) : path_(std::move(path)) { load(); }

    void register_baseline(const std::string& name, const std::vector<std::pair<std::string, double>>& accs) {
        nlohmann::json entry = nlohmann::json::object();
        for (const auto& [d, a] : accs) entry[d] = a;
        auto it = data_.find(name);
        if (it != data_.end()) {
            if (*it != entry) throw std::runtime_error("BaselineRegistry: baseline '" + name + "' is immutable");
            return;
        }
        data_[name] = entry;
        save();
    }

    bool contains(const std::string& name) const { return data_.contains(name); }

    std::vector<std::pair<std::string, double>> get(const std::string& name) const {
        if (!data_.contains(name)) throw std::out_of_range("BaselineRegistry: unknown baseline '" + name + "'");
        std::vector<std::pair<std::string, double>> out;
        for (auto it = data_.at(name).begin(); it != data_.at(name).end(); ++it)
            out.emplace_back(it.key(), it.value().get<double>());
        return out;
    }

    std::string hash(const std::string& name) const { return hex64(fnv1a64(data_.at(name).dump())); }

private:
    void load() {
        std::ifstream f(path_, std::ios::binary);
        if (!f) {
            data_ = nlohmann::json::object();
            return;
        }
        f >> data_;
    }
    void save() const {
        std::ofstream f(path_, std::ios::binary);
        if (!f) throw std::runtime_error("BaselineRegistry: cannot write " + path_);
        f << data_.dump(2) << "\n";
    }

    std::string path_;
    nlohmann::json data_;
};

// Aligns a report's disciplines with a baseline vector for delta_m.
inline double delta_m_against(const EvalReport& report, const std::vector<std::pair<std::string, double>>& baseline) {
    std::map<std::string, double> base;
    for (const auto& [d, a] : baseline) base[d] = a;
    std::vector<double> accs, bases;
    for (const auto& [d, a] : report.per_discipline) {
        auto it = base.find(d);
        if (it == base.end()) throw std::invalid_argument("delta_m_against: baseline missing discipline " + d);
        accs.push_back(a);
        bases.push_back(it->second);
    }
    return delta_m(accs, bases);
}

// ---------------------------------------------------------------------------
// Routing probe
// ---------------------------------------------------------------------------

struct RoutingMatrix {
    std::vector<std::string> disciplines;
    int n_experts = 0;
    std::vector<std::vector<double>> rows;  // one simplex row per discipline

    void write_csv(std::ostream& os) const {
        os << "discipline";
        for (int e = 0; e < n_experts; ++e) os << ",expert" << e;
        os << "\n";
        for (size_t d = 0; d < disciplines.size(); ++d) {
            os << disciplines[d];
            for (double v : rows[d]) os << "," << format_fixed(v, 6);
            os << "\n";
        }
    }
};

// Mean per-token gate weights at one slot (default: the last layer's
// feed-forward entry), accumulated per discipline over the corpus.
inline RoutingMatrix routing_probe(BaseModel& model, AdapterState& adapters, const Corpus& corpus, const Vocab& vocab,
                                   int layer, ProjRole role = ProjRole::ffn_up) {
    if (!variant_has_gate(adapters.variant)) throw std::runtime_error("routing_probe: adapter state has no gates");
    if (layer < 0 || layer >= model.config.n_layers) throw std::invalid_argument("routing_probe: layer out of range");
    if (corpus.samples.empty()) throw std::invalid_argument("routing_probe: empty corpus");
    RoutingMatrix out;
    out.disciplines = corpus.disciplines();
    for (const auto& d : out.disciplines) {
        RoutingCapture cap;
        cap.layer = layer;
        cap.role = role;
        for (const auto& s : corpus.samples) {
            if (s.discipline != d) continue;
            Tape tape(false);
            forward(tape, model, &adapters, encode_training_sample(s, vocab).tokens, &cap);
        }
        auto mean = cap.mean();
        out.n_experts = static_cast<int>(mean.size());
        out.rows.push_back(std::move(mean));
    }
    return out;
}

}  // namespace loralab
