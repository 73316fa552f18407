#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "qxpand/tape.hpp"

namespace qx {

// Central finite-difference verification of analytic gradients.
//
// loss_fn must be a deterministic function of the parameter values that
// returns the loss AND leaves the analytic gradient in each Parameter's
// grad field (i.e. it runs forward + backward on a fresh tape). Dropout
// must be disabled.
//
// value_fn evaluates the same loss without touching gradients and is the
// function actually differenced. It returns long double: a plain double
// forward quantizes f to ~1e-16 relative, which after division by 2*eps
// buries any true gradient below ~1e-6 in noise. Deep recurrent paths
// legitimately carry gradients of 1e-9, so the differences must be taken
// at extended precision for the comparison to say anything there.
//
// Returns max over entries of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename S>
double grad_check(const std::function<double()>& loss_fn, const std::function<long double()>& value_fn,
                  std::span<Parameter<S>* const> params, double eps = 1e-5) {
    zero_grads(params);
    loss_fn();
    std::vector<Matrix<S>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<S>& p = *params[pi];
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const S orig = p.value.data[i];
            p.value.data[i] = static_cast<S>(orig + eps);
            const long double fp = value_fn();
            p.value.data[i] = static_cast<S>(orig - eps);
            const long double fm = value_fn();
            p.value.data[i] = orig;

            const double numeric = static_cast<double>((fp - fm) / (2.0L * static_cast<long double>(eps)));
            const double a = static_cast<double>(analytic[pi].data[i]);
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    zero_grads(params);
    return worst;
}

// Convenience overload differencing loss_fn itself (adequate when no
// gradient in the graph is near the double noise floor).
template <typename S>
double grad_check(const std::function<double()>& loss_fn, std::span<Parameter<S>* const> params,
                  double eps = 1e-5) {
    std::function<long double()> value_fn = [&loss_fn]() -> long double {
        return static_cast<long double>(loss_fn());
    };
    return grad_check<S>(loss_fn, value_fn, params, eps);
}

}  // namespace qx
