#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "e2v/autograd.hpp"
#include "e2v/nn.hpp"
#include "e2v/rng.hpp"

namespace test_support {

inline e2v::Array random_array(std::vector<int> shape, e2v::Rng& rng,
                               double scale = 1.0) {
    e2v::Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = scale * rng.gaussian();
    return a;
}

inline e2v::Array random_uniform(std::vector<int> shape, e2v::Rng& rng, double lo,
                                 double hi) {
    e2v::Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// relative error with an absolute floor so near-zero gradients compare sanely
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

struct GradCheckResult {
    double max_rel = 0.0;
    double frac_within = 1.0;  // fraction of sampled entries with rel <= tol
    int checked = 0;
};

// Central finite differences against analytic gradients. `build` must
// construct the scalar loss from the current parameter values on every call.
inline GradCheckResult grad_check(const std::vector<e2v::ag::Var>& params,
                                  const std::function<e2v::ag::Var()>& build,
                                  e2v::Rng& rng, int samples_per_param = 6,
                                  double eps = 1e-5, double tol = 1e-3) {
    using e2v::ag::backward;
    for (const auto& p : params) {
        if (p->grad.size() == p->value.size()) p->grad.fill(0.0);
    }
    e2v::ag::Var loss = build();
    backward(loss);

    GradCheckResult result;
    int within = 0;
    for (const auto& p : params) {
        for (int s = 0; s < samples_per_param; ++s) {
            const std::size_t i =
                static_cast<std::size_t>(rng.bounded(p->value.size()));
            const double analytic =
                p->grad.size() == p->value.size() ? p->grad[i] : 0.0;
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double up = e2v::ag::scalar(build());
            p->value[i] = saved - eps;
            const double dn = e2v::ag::scalar(build());
            p->value[i] = saved;
            const double numeric = (up - dn) / (2.0 * eps);
            const double re = rel_err(analytic, numeric);
            result.max_rel = std::max(result.max_rel, re);
            if (re <= tol) ++within;
            ++result.checked;
        }
    }
    result.frac_within =
        result.checked > 0 ? static_cast<double>(within) / result.checked : 1.0;
    return result;
}

}  // namespace test_support
