// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loralab/rng.hpp"
#include "loralab/vocab.hpp"

namespace loralab {

// ---------------------------------------------------------------------------
// Core records
// ---------------------------------------------------------------------------

struct Sample {
    std::string id;
    std::string discipline;
    std::vector<std::string> prompt;
    std::vector<std::string> answer;
    std::vector<std::vector<std::string>> options;  // empty for generative format
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    bool multiple_choice() const { return !options.empty(); }

    // index of the gold option; options must contain the answer exactly once
    int gold_option() const {
        int found = -1;
        for (size_t i = 0; i < options.size(); ++i) {
            if (options[i] == answer) {
                if (found >= 0) throw std::runtime_error("Sample " + id + ": answer matches multiple options");
                found = static_cast<int>(i);
            }
        }
        if (found < 0) throw std::runtime_error("Sample " + id + ": answer matches no option");
        return found;
    }

    bool operator==(const Sample& o) const {
        return id == o.id && discipline == o.discipline && prompt == o.prompt && answer == o.answer &&
               options == o.options && extra == o.extra;
    }
};

struct Corpus {
    std::vector<Sample> samples;
    uint64_t seed = 0;
    std::vector<std::string> transform_log;

    size_t size() const { return samples.size(); }

    // disciplines in order of first appearance
    std::vector<std::string> disciplines() const {
        std::vector<std::string> out;
        std::unordered_set<std::string> seen;
        for (const auto& s : samples)
            if (seen.insert(s.discipline).second) out.push_back(s.discipline);
        return out;
    }

    std::vector<size_t> indices_of(const std::string& discipline) const {
        std::vector<size_t> out;
        for (size_t i = 0; i < samples.size(); ++i)
            if (samples[i].discipline == discipline) out.push_back(i);
        return out;
    }

    void log(std::string line) { transform_log.push_back(std::move(line)); }
};

// ---------------------------------------------------------------------------
// Synthetic task families
// ---------------------------------------------------------------------------

enum class TaskFamily { modular_sum, copy_seq, reverse_seq, max_token, parity };

inline const char* family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::modular_sum: return "modular-sum";
        case TaskFamily::copy_seq: return "copy";
        case TaskFamily::reverse_seq: return "reverse";
        case TaskFamily::max_token: return "max-token";
        case TaskFamily::parity: return "parity";
    }
    return "?";
}

inline constexpr int kValueCount = 10;

inline std::string value_token(int v) { return "v" + std::to_string(v); }

struct DisciplineSpec {
    std::string name;
    TaskFamily family = TaskFamily::copy_seq;
    std::vector<std::string> markers;  // disjoint across disciplines; markers[0] opens every prompt
    int train_size = 0;
    bool generative = false;   // otherwise multiple-choice
    int value_range = kValueCount;  // payload tokens drawn from v0..v(value_range-1)
};

struct GeneralSpec {
    int pretrain_size = 900;
    int heldout_size = 120;
    int mix_pool_size = 400;
    int test_size = 150;
    double marker_extra_prob = 0.5;  // secondary jargon token rate, shared with disciplines
};

// Five disciplines mirroring the heavy-tailed share profile of a real
// multi-discipline corpus; exactly one (math) is generative.
inline std::vector<DisciplineSpec> default_discipline_specs(int total_train,
                                                            const std::vector<double>& shares_pct = {60.7, 21.6, 1.6, 14.9, 1.2}) {
    if (shares_pct.size() != 5) throw std::invalid_argument("default_discipline_specs: five shares expected");
    const char* names[5] = {"math", "chemistry", "biology", "medicine", "geography"};
    const TaskFamily fams[5] = {TaskFamily::modular_sum, TaskFamily::copy_seq, TaskFamily::reverse_seq,
                                TaskFamily::max_token, TaskFamily::parity};
    std::vector<DisciplineSpec> specs;
    for (int i = 0; i < 5; ++i) {
        DisciplineSpec s;
        s.name = names[i];
        s.family = fams[i];
        s.markers = {s.name + ":q", s.name + ":x", s.name + ":y"};
        s.train_size = static_cast<int>(std::llround(shares_pct[static_cast<size_t>(i)] / 100.0 * total_train));
        s.generative = (fams[i] == TaskFamily::modular_sum);
        if (s.generative) s.value_range = 5;  // keeps the sum table small enough to adapt into
        specs.push_back(std::move(s));
    }
    return specs;
}

inline std::vector<std::string> general_format_tokens() { return {"fmt:echo", "fmt:rev", "fmt:first", "fmt:last"}; }

// Deterministic vocabulary: control tokens, value tokens, discipline
// markers, then general-task tokens. Marker collisions are rejected here.
inline Vocab build_vocab(const std::vector<DisciplineSpec>& specs) {
    std::vector<std::string> toks = {Vocab::kPad, Vocab::kEos, Vocab::kAns};
    for (int v = 0; v < kValueCount; ++v) toks.push_back(value_token(v));
    std::set<std::string> seen(toks.begin(), toks.end());
    for (const auto& s : specs) {
        if (s.markers.empty()) throw std::invalid_argument("DisciplineSpec " + s.name + ": markers required");
        for (const auto& m : s.markers) {
            if (!seen.insert(m).second) throw std::invalid_argument("marker token collision: " + m);
            toks.push_back(m);
        }
    }
    for (const auto& m : std::vector<std::string>{"gen:q"}) {
        if (!seen.insert(m).second) throw std::invalid_argument("marker token collision: " + m);
        toks.push_back(m);
    }
    for (const auto& m : general_format_tokens()) {
        if (!seen.insert(m).second) throw std::invalid_argument("marker token collision: " + m);
        toks.push_back(m);
    }
    return Vocab(std::move(toks));
}

namespace detail {

inline std::vector<std::string> random_payload(Rng& rng, int len, int value_range = kValueCount) {
    std::vector<std::string> out;
    for (int i = 0; i < len; ++i) out.push_back(value_token(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(value_range)))));
    return out;
}

// mutate one position to a different value token
inline std::vector<std::string> corrupt_payload(const std::vector<std::string>& payload, Rng& rng,
                                                int value_range = kValueCount) {
    std::vector<std::string> out = payload;
    const size_t pos = static_cast<size_t>(rng.uniform_int(out.size()));
    int v = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(value_range)));
    while (value_token(v) == out[pos]) v = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(value_range)));
    out[pos] = value_token(v);
    return out;
}

inline int value_of(const std::string& tok) {
    if (tok.size() < 2 || tok[0] != 'v') throw std::runtime_error("not a value token: " + tok);
    return std::stoi(tok.substr(1));
}

// distinct same-length distractors around the gold answer, shuffled so the
// gold index is uniform
inline std::vector<std::vector<std::string>> make_options(const std::vector<std::string>& gold, int want,
                                                          Rng& rng, int value_range = kValueCount) {
    std::set<std::vector<std::string>> pool = {gold};
    int guard = 0;
    while (static_cast<int>(pool.size()) < want && guard++ < 1000) pool.insert(corrupt_payload(gold, rng, value_range));
    std::vector<std::vector<std::string>> opts(pool.begin(), pool.end());
    rng.shuffle(opts);
    return opts;
}

inline Sample make_discipline_sample(const DisciplineSpec& spec, double jargon_prob, Rng& rng) {
    Sample s;
    s.discipline = spec.name;
    s.prompt.push_back(spec.markers[0]);
    if (spec.markers.size() > 1 && rng.uniform() < jargon_prob) {
        const size_t j = 1 + static_cast<size_t>(rng.uniform_int(spec.markers.size() - 1));
        s.prompt.push_back(spec.markers[j]);
    }
    switch (spec.family) {
        case TaskFamily::modular_sum: {
            const int a = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.value_range)));
            const int b = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.value_range)));
            s.prompt.push_back(value_token(a));
            s.prompt.push_back(value_token(b));
            s.answer = {value_token((a + b) % kValueCount)};
            break;
        }
        case TaskFamily::copy_seq: {
            auto payload = random_payload(rng, 3, spec.value_range);
            s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
            s.answer = payload;
            s.options = make_options(payload, 4, rng, spec.value_range);
            break;
        }
        case TaskFamily::reverse_seq: {
            auto payload = random_payload(rng, 3, spec.value_range);
            s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
            s.answer = std::vector<std::string>(payload.rbegin(), payload.rend());
            s.options = make_options(s.answer, 4, rng, spec.value_range);
            break;
        }
        case TaskFamily::max_token: {
            auto payload = random_payload(rng, 3, spec.value_range);
            s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
            int best = 0;
            for (const auto& t : payload) best = std::max(best, value_of(t));
            s.answer = {value_token(best)};
            s.options = make_options(s.answer, 4, rng, spec.value_range);
            break;
        }
        case TaskFamily::parity: {
            auto payload = random_payload(rng, 4, spec.value_range);
            s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
            int sum = 0;
            for (const auto& t : payload) sum += value_of(t);
            s.answer = {value_token(sum % 2)};
            s.options = {{value_token(0)}, {value_token(1)}};
            break;
        }
    }
    if (!spec.generative && s.options.empty()) throw std::runtime_error("multiple-choice family produced no options");
    if (spec.generative) s.options.clear();
    return s;
}

// format-compliance micro-task: a format token selects echo / reverse /
// first / last over a short payload
inline Sample make_general_sample(double jargon_prob, Rng& rng) {
    Sample s;
    s.discipline = "general";
    const auto fmts = general_format_tokens();
    const size_t f = static_cast<size_t>(rng.uniform_int(fmts.size()));
    s.prompt.push_back("gen:q");
    s.prompt.push_back(fmts[f]);
    const int len = 2 + static_cast<int>(rng.uniform_int(3));
    auto payload = random_payload(rng, len);
    s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
    (void)jargon_prob;
    switch (f) {
        case 0: s.answer = payload; break;
        case 1: s.answer = std::vector<std::string>(payload.rbegin(), payload.rend()); break;
        case 2: s.answer = {payload.front()}; break;
        default: s.answer = {payload.back()}; break;
    }
    return s;
}

}  // namespace detail

// Everything the generator produces in one pass: the multi-discipline
// train/test corpora plus the general-task corpora (pretraining, held-out,
// mixing pool, and test).
struct SyntheticData {
    Corpus train;
    Corpus test;
    Corpus general_pretrain;
    Corpus general_heldout;
    Corpus general_mix;
    Corpus general_test;
    Vocab vocab;
};

inline SyntheticData generate_synthetic(const std::vector<DisciplineSpec>& specs, const GeneralSpec& general,
                                        int test_per_discipline, uint64_t seed) {
    if (specs.size() < 2) throw std::invalid_argument("generate_synthetic: at least two disciplines required");
    for (const auto& s : specs)
        if (s.train_size < 10) throw std::invalid_argument("generate_synthetic: discipline sizes must be >= 10");

    SyntheticData out;
    out.vocab = build_vocab(specs);

    auto gen_block = [&](Corpus& corpus, const DisciplineSpec& spec, int count, const char* split) {
        Rng rng = derive_rng(seed, "gen:" + spec.name + ":" + split);
        for (int i = 0; i < count; ++i) {
            Sample s = detail::make_discipline_sample(spec, general.marker_extra_prob, rng);
            s.id = spec.name + "-" + split + "-" + std::to_string(i);
            corpus.samples.push_back(std::move(s));
        }
    };
    for (const auto& spec : specs) gen_block(out.train, spec, spec.train_size, "train");
    for (const auto& spec : specs) gen_block(out.test, spec, test_per_discipline, "test");

    auto gen_general = [&](Corpus& corpus, int count, const char* split) {
        Rng rng = derive_rng(seed, std::string("gen:general:") + split);
        for (int i = 0; i < count; ++i) {
            Sample s = detail::make_general_sample(general.marker_extra_prob, rng);
            s.id = std::string("general-") + split + "-" + std::to_string(i);
            corpus.samples.push_back(std::move(s));
        }
    };
    gen_general(out.general_pretrain, general.pretrain_size, "pretrain");
    gen_general(out.general_heldout, general.heldout_size, "heldout");
    gen_general(out.general_mix, general.mix_pool_size, "mix");
    gen_general(out.general_test, general.test_size, "test");

    for (Corpus* c : {&out.train, &out.test, &out.general_pretrain, &out.general_heldout, &out.general_mix, &out.general_test}) {
        c->seed = seed;
        c->log("generate_synthetic seed=" + std::to_string(seed));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

inline constexpr int kUniqueTokenCooccurrenceLimit = 10;

struct DisciplineStats {
    std::string discipline;
    size_t samples = 0;
    double share_pct = 0.0;
    double avg_words = 0.0;
    size_t unique_tokens = 0;
};

struct CorpusStats {
    std::vector<DisciplineStats> rows;  // ordered by first appearance
    size_t total_samples = 0;
};

// The % column: count_i / total * 100.
inline std::vector<double> share_percentages(const std::vector<size_t>& counts) {
    double total = 0.0;
    for (size_t c : counts) total += static_cast<double>(c);
    if (total <= 0.0) throw std::invalid_argument("share_percentages: empty corpus");
    std::vector<double> out;
    out.reserve(counts.size());
    for (size_t c : counts) out.push_back(100.0 * static_cast<double>(c) / total);
    return out;
}

// A token is unique to a discipline when its total occurrences across all
// other disciplines stay below the co-occurrence limit.
inline CorpusStats corpus_stats(const Corpus& corpus) {
    if (corpus.samples.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
    const auto disciplines = corpus.disciplines();
    std::unordered_map<std::string, size_t> disc_pos;
    for (size_t i = 0; i < disciplines.size(); ++i) disc_pos[disciplines[i]] = i;

    std::vector<size_t> counts(disciplines.size(), 0);
    std::vector<size_t> words(disciplines.size(), 0);
    // token -> per-discipline occurrence counts
    std::unordered_map<std::string, std::vector<uint32_t>> occ;
    for (const auto& s : corpus.samples) {
        const size_t d = disc_pos[s.discipline];
        counts[d] += 1;
        words[d] += s.prompt.size() + s.answer.size();
        for (const auto* seq : {&s.prompt, &s.answer})
            for (const auto& tok : *seq) {
                auto& row = occ[tok];
                if (row.empty()) row.assign(disciplines.size(), 0);
                row[d] += 1;
            }
    }

    CorpusStats stats;
    stats.total_samples = corpus.samples.size();
    const auto shares = share_percentages(counts);
    std::vector<size_t> uniques(disciplines.size(), 0);
    for (const auto& [tok, row] : occ) {
        size_t total = 0;
        for (uint32_t v : row) total += v;
        for (size_t d = 0; d < disciplines.size(); ++d) {
            if (row[d] == 0) continue;
            if (total - row[d] < kUniqueTokenCooccurrenceLimit) uniques[d] += 1;
        }
    }
    for (size_t d = 0; d < disciplines.size(); ++d) {
        DisciplineStats row;
        row.discipline = disciplines[d];
        row.samples = counts[d];
        row.share_pct = shares[d];
        row.avg_words = static_cast<double>(words[d]) / static_cast<double>(counts[d]);
        row.unique_tokens = uniques[d];
        stats.rows.push_back(std::move(row));
    }
    return stats;
}

// Sample indices whose token sets contain at least one discipline-unique
// token — the candidate pool for unique upsampling.
inline std::vector<size_t> unique_token_sample_indices(const Corpus& corpus, const std::string& discipline) {
    const auto disciplines = corpus.disciplines();
    std::unordered_map<std::string, size_t> disc_pos;
    for (size_t i = 0; i < disciplines.size(); ++i) disc_pos[disciplines[i]] = i;
    auto it = disc_pos.find(discipline);
    if (it == disc_pos.end()) throw std::invalid_argument("unknown discipline: " + discipline);
    const size_t home = it->second;

    std::unordered_map<std::string, std::pair<uint64_t, uint64_t>> occ;  // (home count, elsewhere count)
    for (const auto& s : corpus.samples) {
        const bool is_home = disc_pos[s.discipline] == home;
        for (const auto* seq : {&s.prompt, &s.answer})
            for (const auto& tok : *seq) {
                auto& p = occ[tok];
                (is_home ? p.first : p.second) += 1;
            }
    }
    std::unordered_set<std::string> unique_tokens;
    for (const auto& [tok, p] : occ)
        if (p.first > 0 && p.second < kUniqueTokenCooccurrenceLimit) unique_tokens.insert(tok);

    std::vector<size_t> out;
    for (size_t i = 0; i < corpus.samples.size(); ++i) {
        const auto& s = corpus.samples[i];
        if (s.discipline != discipline) continue;
        bool hit = false;
        for (const auto* seq : {&s.prompt, &s.answer}) {
            for (const auto& tok : *seq)
                if (unique_tokens.count(tok)) {
                    hit = true;
                    break;
                }
            if (hit) break;
        }
        if (hit) out.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline transforms (pure functions of corpus, parameters, seed)
// ---------------------------------------------------------------------------

// Per-discipline sampling without replacement; a shared seed schedule makes
// subsets nested across fractions.
inline Corpus subset(const Corpus& corpus, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subset: fraction must be in (0, 1]");
    std::vector<char> keep(corpus.samples.size(), 0);
    for (const auto& d : corpus.disciplines()) {
        auto idx = corpus.indices_of(d);
        const size_t want = static_cast<size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        if (want == 0) throw std::runtime_error("subset: fraction " + std::to_string(fraction) + " empties discipline " + d);
        Rng rng = derive_rng(seed, "subset:" + d);
        rng.shuffle(idx);
        for (size_t i = 0; i < want; ++i) keep[idx[i]] = 1;
    }
    Corpus out;
    out.seed = corpus.seed;
    out.transform_log = corpus.transform_log;
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        if (keep[i]) out.samples.push_back(corpus.samples[i]);
    out.log("subset fraction=" + std::to_string(fraction) + " seed=" + std::to_string(seed));
    return out;
}

namespace detail {

inline Corpus upsample_from_pool(const Corpus& corpus, const std::string& discipline, size_t target_n,
                                 const std::vector<size_t>& pool, uint64_t seed, const char* strategy) {
    const auto current = corpus.indices_of(discipline);
    if (current.empty()) throw std::invalid_argument("upsample: unknown discipline " + discipline);
    if (target_n < current.size()) throw std::invalid_argument("upsample: target below current size");
    if (pool.empty()) throw std::runtime_error("upsample: no eligible samples in " + discipline);
    Corpus out = corpus;
    Rng rng = derive_rng(seed, std::string("upsample:") + strategy + ":" + discipline);
    for (size_t i = current.size(); i < target_n; ++i) {
        const size_t pick = pool[static_cast<size_t>(rng.uniform_int(pool.size()))];
        out.samples.push_back(corpus.samples[pick]);
    }
    out.log(std::string("upsample_") + strategy + " discipline=" + discipline + " target=" + std::to_string(target_n) +
            " seed=" + std::to_string(seed));
    return out;
}

}  // namespace detail

// Random duplication over the whole discipline.
inline Corpus upsample_diverse(const Corpus& corpus, const std::string& discipline, size_t target_n, uint64_t seed) {
    return detail::upsample_from_pool(corpus, discipline, target_n, corpus.indices_of(discipline), seed, "diverse");
}

// Duplication restricted to samples carrying discipline-unique tokens.
inline Corpus upsample_unique(const Corpus& corpus, const std::string& discipline, size_t target_n, uint64_t seed) {
    return detail::upsample_from_pool(corpus, discipline, target_n,
                                      unique_token_sample_indices(corpus, discipline), seed, "unique");
}

// Mean distinct/total n-gram ratio over prompt+answer tokens.
inline double ngram_diversity(const Corpus& corpus, const std::vector<int>& ns = {1, 2, 3, 4}) {
    if (corpus.samples.empty()) throw std::invalid_argument("ngram_diversity: empty corpus");
    if (ns.empty()) throw std::invalid_argument("ngram_diversity: no n values");
    double score = 0.0;
    for (int n : ns) {
        if (n < 1) throw std::invalid_argument("ngram_diversity: n must be >= 1");
        std::unordered_set<std::string> distinct;
        size_t total = 0;
        std::string key;
        for (const auto& s : corpus.samples) {
            std::vector<const std::string*> seq;
            for (const auto& t : s.prompt) seq.push_back(&t);
            for (const auto& t : s.answer) seq.push_back(&t);
            if (static_cast<int>(seq.size()) < n) continue;
            for (size_t i = 0; i + static_cast<size_t>(n) <= seq.size(); ++i) {
                key.clear();
                for (int j = 0; j < n; ++j) {
                    key += *seq[i + static_cast<size_t>(j)];
                    key += '\x1f';
                }
                distinct.insert(key);
                total += 1;
            }
        }
        if (total == 0) throw std::runtime_error("ngram_diversity: no n-grams at n=" + std::to_string(n));
        score += static_cast<double>(distinct.size()) / static_cast<double>(total);
    }
    return score / static_cast<double>(ns.size());
}

// Appends a uniform without-replacement draw from the general corpus, then
// reshuffles deterministically.
inline Corpus mix_general(const Corpus& corpus, const Corpus& general, int percent, uint64_t seed) {
    if (percent < 0 || percent > 100) throw std::invalid_argument("mix_general: percent out of range");
    if (percent == 0) {
        Corpus out = corpus;
        out.log("mix_general percent=0 appended=0 seed=" + std::to_string(seed));
        return out;
    }
    const size_t take = static_cast<size_t>(std::llround(percent / 100.0 * static_cast<double>(general.samples.size())));
    std::vector<size_t> idx(general.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = derive_rng(seed, "mix_general:choose");
    rng.shuffle(idx);
    Corpus out = corpus;
    for (size_t i = 0; i < take; ++i) out.samples.push_back(general.samples[idx[i]]);
    Rng rng2 = derive_rng(seed, "mix_general:shuffle");
    rng2.shuffle(out.samples);
    out.log("mix_general percent=" + std::to_string(percent) + " appended=" + std::to_string(take) +
            " seed=" + std::to_string(seed));
    return out;
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

}  // namespace detail

inline void write_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_jsonl: cannot open " + path);
    for (const auto& s : corpus.samples) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["discipline"] = s.discipline;
        j["prompt"] = detail::join_tokens(s.prompt);
        j["answer"] = detail::join_tokens(s.answer);
        if (!s.options.empty()) {
            nlohmann::ordered_json opts = nlohmann::ordered_json::array();
            for (const auto& o : s.options) opts.push_back(detail::join_tokens(o));
            j["options"] = std::move(opts);
        }
        for (auto it = s.extra.begin(); it != s.extra.end(); ++it) j[it.key()] = it.value();
        f << j.dump() << "\n";
    }
    if (!f) throw std::runtime_error("write_jsonl: write failed for " + path);
}

inline Corpus read_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_jsonl: cannot open " + path);
    Corpus out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        Sample s;
        for (const char* field : {"id", "discipline", "prompt", "answer"})
            if (!j.contains(field))
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing required field '" + field + "'");
        s.id = j["id"].get<std::string>();
        s.discipline = j["discipline"].get<std::string>();
        s.prompt = detail::split_tokens(j["prompt"].get<std::string>());
        s.answer = detail::split_tokens(j["answer"].get<std::string>());
        if (j.contains("options"))
            for (const auto& o : j["options"]) s.options.push_back(detail::split_tokens(o.get<std::string>()));
        if (s.prompt.empty() || s.answer.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty prompt or answer");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k == "id" || k == "discipline" || k == "prompt" || k == "answer" || k == "options") continue;
            s.extra[k] = it.value();
        }
        out.samples.push_back(std::move(s));
    }
    out.log("read_jsonl path=" + path);
    return out;
}

inline void write_stats_csv(const CorpusStats& stats, std::ostream& os) {
    os << "discipline,samples,share_pct,avg_words,unique_tokens\n";
    char buf[64];
    for (const auto& r : stats.rows) {
        std::snprintf(buf, sizeof(buf), "%.1f", r.share_pct);
        std::string share = buf;
        std::snprintf(buf, sizeof(buf), "%.2f", r.avg_words);
        os << r.discipline << "," << r.samples << "," << share << "," << buf << "," << r.unique_tokens << "\n";
    }
}

}  // namespace loralab
