// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference implementations used only by tests. These stay
// independent of the tape-based code paths they check.
#pragma once

#include <cmath>
#include <vector>

#include "loralab/adapters.hpp"
#include "loralab/tensor.hpp"

namespace loralab::oracles {

// y = M x for a (rows, cols) matrix and a cols-vector
inline std::vector<double> matvec(const Tensor& m, const std::vector<double>& x) {
    std::vector<double> out(static_cast<size_t>(m.shape[0]), 0.0);
    for (int i = 0; i < m.shape[0]; ++i)
        for (int j = 0; j < m.shape[1]; ++j) out[static_cast<size_t>(i)] += m.at(i, j) * x[static_cast<size_t>(j)];
    return out;
}

// (alpha/r) * B (A x)
inline std::vector<double> lora_delta(const Tensor& a, const Tensor& b, double alpha, int rank,
                                      const std::vector<double>& x) {
    const auto h = matvec(a, x);
    auto out = matvec(b, h);
    for (double& v : out) v *= alpha / static_cast<double>(rank);
    return out;
}

// softmax(W x + b)
inline std::vector<double> gate_omega(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
    auto logits = matvec(w, x);
    for (size_t i = 0; i < logits.size(); ++i) logits[i] += b.data[i];
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
    return logits;
}

// explicit weighted sum over experts: sum_i omega_i * (alpha/r) * B_i (A_i x)
inline std::vector<double> moe_delta(const std::vector<Tensor>& as, const std::vector<Tensor>& bs,
                                     const std::vector<double>& omega, double alpha, int rank,
                                     const std::vector<double>& x) {
    std::vector<double> out(static_cast<size_t>(bs[0].shape[0]), 0.0);
    for (size_t e = 0; e < as.size(); ++e) {
        const auto d = lora_delta(as[e], bs[e], alpha, rank, x);
        for (size_t i = 0; i < out.size(); ++i) out[i] += omega[e] * d[i];
    }
    return out;
}

// shared A: each expert contributes omega_i * (alpha/r) * B_i (A x)
inline std::vector<double> shared_a_delta(const Tensor& a, const std::vector<Tensor>& bs,
                                          const std::vector<double>& omega, double alpha, int rank,
                                          const std::vector<double>& x) {
    const auto h = matvec(a, x);
    std::vector<double> out(static_cast<size_t>(bs[0].shape[0]), 0.0);
    for (size_t e = 0; e < bs.size(); ++e) {
        auto d = matvec(bs[e], h);
        for (size_t i = 0; i < out.size(); ++i) out[i] += omega[e] * (alpha / rank) * d[i];
    }
    return out;
}

// explicit double sum over experts and rank components, mass rescaled by r:
// alpha * sum_i sum_j omega_ij * B_i[:,j] * (A_i[j,:] x)
inline std::vector<double> rank_wise_delta(const std::vector<Tensor>& as, const std::vector<Tensor>& bs,
                                           const std::vector<double>& omega_flat, double alpha, int rank,
                                           const std::vector<double>& x) {
    std::vector<double> out(static_cast<size_t>(bs[0].shape[0]), 0.0);
    for (size_t e = 0; e < as.size(); ++e)
        for (int j = 0; j < rank; ++j) {
            double hj = 0.0;
            for (int c = 0; c < as[e].shape[1]; ++c) hj += as[e].at(j, c) * x[static_cast<size_t>(c)];
            const double w = omega_flat[e * static_cast<size_t>(rank) + static_cast<size_t>(j)];
            for (int i = 0; i < bs[e].shape[0]; ++i) out[static_cast<size_t>(i)] += alpha * w * bs[e].at(i, j) * hj;
        }
    return out;
}

}  // namespace loralab::oracles
