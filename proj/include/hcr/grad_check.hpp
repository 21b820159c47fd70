#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hcr/tensor.hpp"

namespace hcr {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central-difference check of already-computed analytic gradients.
///
/// The caller evaluates the loss once with backward() so every Param's grad
/// holds the analytic value, then passes a loss_fn that re-runs the forward
/// pass at the current parameters. Each scalar parameter is nudged by +-eps
/// (the realized float step is measured in double to avoid quantization
/// bias) and compared via
///   |analytic - central| / max(|analytic|, |central|, 1e-6).
///
/// A single probe width cannot serve every element. Forward math runs in
/// float, so a difference quotient carries rounding jitter of roughly
/// ulp/step; for a small-magnitude gradient that jitter dominates unless
/// the step grows. Relu and maxpool are piecewise linear, and a window that
/// straddles a kink matches neither one-sided slope unless the step
/// shrinks. Elements failing at eps are therefore reprobed at wider then
/// narrower widths (2x, 4x, 1/2, 1/4) and the best width wins. A genuinely
/// wrong gradient disagrees at every width.
template <typename LossFn>
GradCheckReport grad_check(const std::vector<Param*>& params, LossFn&& loss_fn,
                           float eps = 1e-3f, double rescue_tol = 1e-2) {
    GradCheckReport rep;
    for (Param* p : params) {
        for (std::int64_t i = 0; i < p->numel(); ++i) {
            const float v0 = p->value[i];
            const double a = p->grad[i];
            double best_rel = -1.0;
            double best_cd = 0.0;
            for (const float scale : {1.0f, 2.0f, 4.0f, 0.5f, 0.25f}) {
                const float e = eps * scale;
                const float vp = v0 + e;
                const float vm = v0 - e;
                p->value[i] = vp;
                const double lp = loss_fn();
                p->value[i] = vm;
                const double lm = loss_fn();
                p->value[i] = v0;
                const double step =
                    static_cast<double>(vp) - static_cast<double>(vm);
                const double cd = (lp - lm) / step;
                const double rel =
                    std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-6});
                if (best_rel < 0.0 || rel < best_rel) {
                    best_rel = rel;
                    best_cd = cd;
                }
                if (best_rel <= rescue_tol) break;
            }
            if (best_rel > rep.max_rel_err)
                rep = {best_rel, p->name, i, a, best_cd};
        }
    }
    return rep;
}

}  // namespace hcr
