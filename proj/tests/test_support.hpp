// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test suites. The finite-difference oracle here is
// the independent reference for every gradient assertion; it only ever calls
// forward evaluations and never touches Tape::backward.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dfr/rng.hpp"
#include "dfr/tensor.hpp"

namespace dfr::testing {

using diff::Real;
using diff::Tensor;

inline Real rel_err(Real a, Real b) {
    Real scale = std::max({std::fabs(a), std::fabs(b), Real(1e-6)});
    return std::fabs(a - b) / scale;
}

/// Central finite differences of a scalar function w.r.t. every entry of x.
inline Tensor finite_diff(const std::function<Real(const Tensor&)>& f, Tensor x, Real h = 1e-4) {
    Tensor grad = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        Real keep = x.values[i];
        x.values[i] = keep + h;
        Real up = f(x);
        x.values[i] = keep - h;
        Real down = f(x);
        x.values[i] = keep;
        grad.values[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// Largest relative disagreement between an analytic gradient and the
/// finite-difference oracle for the same function.
inline Real max_grad_rel_err(const std::function<Real(const Tensor&)>& f, const Tensor& x,
                             const Tensor& analytic, Real h = 1e-4) {
    Tensor numeric = finite_diff(f, x, h);
    Real worst = 0.0;
    for (std::size_t i = 0; i < numeric.values.size(); ++i)
        worst = std::max(worst, rel_err(analytic.values[i], numeric.values[i]));
    return worst;
}

/// Random tensor with entries in [lo, hi].
inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, Real lo = -1.0, Real hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Real& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

/// Push paired entries apart so elementwise min/max selections cannot flip
/// under the finite-difference probe step.
inline void separate(Tensor& a, Tensor& b, Real margin) {
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (std::fabs(a.values[i] - b.values[i]) < margin)
            b.values[i] += (a.values[i] >= b.values[i] ? -2.0 : 2.0) * margin;
}

/// Push every entry away from zero (relu / leaky-relu kink).
inline void avoid_zero(Tensor& t, Real margin) {
    for (Real& v : t.values)
        if (std::fabs(v) < margin) v = v >= 0.0 ? margin : -margin;
}

/// Spread all entries pairwise so any argmax/argmin is stable under probes.
inline void separate_entries(Tensor& t, Real margin) {
    std::vector<std::size_t> order(t.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return t.values[a] < t.values[b]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
        Real lo = t.values[order[k - 1]];
        if (t.values[order[k]] - lo < margin) t.values[order[k]] = lo + margin;
    }
}

}  // namespace dfr::testing
