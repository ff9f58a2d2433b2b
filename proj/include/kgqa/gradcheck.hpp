#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "kgqa/autograd.hpp"
#include "kgqa/common.hpp"
#include "kgqa/rng.hpp"

namespace kgqa {

// run(do_backward): evaluates the loss at the current parameter values in
// 64-bit with dropout disabled; when do_backward is set it also accumulates
// analytic gradients into the parameters.
using GradCheckFn = std::function<double(bool do_backward)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

// Central-difference check of analytic gradients on sampled coordinates.
// Relative error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckReport grad_check(const GradCheckFn& run,
                                  const std::vector<ParamT<double>*>& params, double epsilon,
                                  int n_coords, uint64_t seed) {
    require(epsilon >= 1e-6 && epsilon <= 1e-3, "grad_check: epsilon ", epsilon,
            " outside [1e-6, 1e-3]");

    double l0 = run(false);
    double l1 = run(false);
    require(l0 == l1, "grad_check: model_fn is not deterministic (", l0, " vs ", l1, ")");

    for (auto* p : params) p->grad.fill(0.0);
    run(true);

    std::vector<std::pair<int, size_t>> coords;  // (param index, flat offset)
    size_t total = 0;
    for (auto* p : params) total += p->value.numel();
    Rng rng(mix64(seed, 0x67726164ull));
    if (int(total) <= n_coords) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (size_t k = 0; k < params[pi]->value.numel(); ++k) coords.emplace_back(int(pi), k);
    } else {
        for (int c = 0; c < n_coords; ++c) {
            size_t pi = rng.below(params.size());
            size_t k = rng.below(params[pi]->value.numel());
            coords.emplace_back(int(pi), k);
        }
    }

    GradCheckReport rep;
    rep.coords_checked = int(coords.size());
    for (auto [pi, k] : coords) {
        double* slot = &params[pi]->value.data[k];
        const double orig = *slot;
        *slot = orig + epsilon;
        double lp = run(false);
        *slot = orig - epsilon;
        double lm = run(false);
        *slot = orig;
        double numeric = (lp - lm) / (2.0 * epsilon);
        double analytic = params[pi]->grad.data[k];
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        double rel = std::fabs(analytic - numeric) / denom;
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
    }
    return rep;
}

}  // namespace kgqa
