// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "loralab/tensor.hpp"

namespace loralab {

// Linear warmup to base_lr over round(warmup_ratio * total) steps, then
// linear decay to zero at total_steps. Fractional steps are allowed so the
// training loop can sample update midpoints.
inline double lr_schedule_at(double step, long total_steps, double warmup_ratio, double base_lr) {
    if (total_steps <= 0) throw std::invalid_argument("lr_schedule: total_steps must be positive");
    if (step < 0.0 || step > static_cast<double>(total_steps)) throw std::invalid_argument("lr_schedule: step out of range");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) throw std::invalid_argument("lr_schedule: warmup_ratio out of range");
    const double warmup = static_cast<double>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
    if (step <= warmup && warmup > 0.0) return base_lr * step / warmup;
    return base_lr * (static_cast<double>(total_steps) - step) / (static_cast<double>(total_steps) - warmup);
}

inline double lr_schedule(long step, long total_steps, double warmup_ratio, double base_lr) {
    return lr_schedule_at(static_cast<double>(step), total_steps, warmup_ratio, base_lr);
}

// AdamW with decoupled weight decay. Moments are kept per trainable
// parameter; frozen groups are never touched.
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamW(std::vector<ParamGroup*> params) {
        for (ParamGroup* p : params) {
            if (!p->trainable) continue;
            Entry e;
            e.param = p;
            e.m = Tensor::zeros(p->value.shape);
            e.v = Tensor::zeros(p->value.shape);
            entries_.push_back(std::move(e));
        }
    }

    size_t tracked() const { return entries_.size(); }
    long step_count() const { return step_; }

    // grad_scale folds gradient accumulation (1/batch) into the update
    // without mutating the stored gradients.
    void step(double lr, double weight_decay, double grad_scale = 1.0) {
        step_ += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (Entry& e : entries_) {
            for (size_t i = 0; i < e.param->value.data.size(); ++i) {
                const double g = e.param->grad.data[i] * grad_scale;
                if (!std::isfinite(g))
                    throw std::runtime_error("AdamW: non-finite gradient in " + e.param->name + " (aborting run)");
                e.m.data[i] = beta1 * e.m.data[i] + (1.0 - beta1) * g;
                e.v.data[i] = beta2 * e.v.data[i] + (1.0 - beta2) * g * g;
                const double mhat = e.m.data[i] / bc1;
                const double vhat = e.v.data[i] / bc2;
                double& p = e.param->value.data[i];
                p -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p);
            }
        }
    }

    // global-norm clipping over the scaled gradients; no-op when max_norm <= 0
    static void clip_gradients(const std::vector<ParamGroup*>& params, double max_norm, double grad_scale) {
        if (max_norm <= 0.0) return;
        double sq = 0.0;
        for (ParamGroup* p : params) {
            if (!p->trainable) continue;
            for (double g : p->grad.data) sq += (g * grad_scale) * (g * grad_scale);
        }
        const double norm = std::sqrt(sq);
        if (norm <= max_norm) return;
        const double factor = max_norm / norm;
        for (ParamGroup* p : params) {
            if (!p->trainable) continue;
            for (double& g : p->grad.data) g *= factor;
        }
    }

private:
    struct Entry {
        ParamGroup* param = nullptr;
        Tensor m, v;
    };
    std::vector<Entry> entries_;
    long step_ = 0;
};

}  // namespace loralab
