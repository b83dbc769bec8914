// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "loralab/tensor.hpp"

namespace loralab {

// Central-difference gradient check.
//
// `loss` must be a deterministic function of the parameter values: called
// with with_grad=true it must also accumulate analytic gradients into the
// ParamGroups. Returns the max over trainable scalars of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<double(bool with_grad)>& loss,
                         const std::vector<ParamGroup*>& params, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
    for (ParamGroup* p : params) p->zero_grad();
    const double base = loss(true);
    const double again = loss(false);
    if (base != again) throw std::runtime_error("grad_check: loss function is not deterministic");

    double max_rel = 0.0;
    for (ParamGroup* p : params) {
        if (!p->trainable) continue;
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double up = loss(false);
            p->value.data[i] = saved - eps;
            const double down = loss(false);
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->grad.data[i];
            const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;  // 0 vacuously when there are no trainable scalars
}

}  // namespace loralab
