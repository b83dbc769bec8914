// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace loralab {

// Fixed token vocabulary. Ids are positions in the ordered token list; the
// data generator owns construction, everything else just encodes/decodes.
class Vocab {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kEos = "<eos>";
    static constexpr const char* kAns = "<ans>";

    Vocab() = default;
    explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        for (size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
                throw std::invalid_argument("Vocab: duplicate token '" + tokens_[i] + "'");
        }
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        if (it == index_.end()) throw std::out_of_range("Vocab: unknown token '" + tok + "'");
        return it->second;
    }

    bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("Vocab: id out of range");
        return tokens_[static_cast<size_t>(id)];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const std::vector<std::string>& toks) const {
        std::vector<int> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (int i : ids) out.push_back(token(i));
        return out;
    }

    int pad_id() const { return id(kPad); }
    int eos_id() const { return id(kEos); }
    int ans_id() const { return id(kAns); }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("Vocab: cannot write " + path);
        for (const auto& t : tokens_) f << t << "\n";
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("Vocab: cannot read " + path);
        std::vector<std::string> toks;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) toks.push_back(line);
        }
        return Vocab(std::move(toks));
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace loralab
