#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ctvit/tensor.hpp"

namespace ctvit::testing {

struct GradCheckResult {
    bool ok = true;
    double max_rel = 0.0;
    double max_abs = 0.0;
    int64_t checked = 0;
    std::string worst;
};

// Central finite differences against the analytic gradients of `leaves`.
// `loss_fn` must rebuild the graph from the leaves' current values on every
// call. An element passes when |a - n| <= max(rel_tol * max(|a|,|n|), abs_tol).
template <typename LossFn>
GradCheckResult check_gradients(std::vector<Tensor> leaves, LossFn loss_fn,
                                double rel_tol = 1e-4, double abs_tol = 1e-8,
                                double h = 1e-5) {
    for (Tensor& leaf : leaves) leaf.zero_grad();
    backward(loss_fn());

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (Tensor& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        std::vector<double>& values = leaves[li].mutable_data();
        for (size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            values[i] = keep + h;
            const double lp = loss_fn().item();
            values[i] = keep - h;
            const double lm = loss_fn().item();
            values[i] = keep;

            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[li][i];
            const double abs_err = std::fabs(a - numeric);
            const double scale = std::max(std::fabs(a), std::fabs(numeric));
            const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
            res.max_abs = std::max(res.max_abs, abs_err);
            // report relative error only where the gradient is large enough
            // for central differences to resolve it
            if (scale > 1e-4) res.max_rel = std::max(res.max_rel, rel_err);
            ++res.checked;
            if (abs_err > std::max(rel_tol * scale, abs_tol)) {
                res.ok = false;
                if (res.worst.empty()) {
                    std::ostringstream os;
                    os << "leaf " << li << " elem " << i << ": analytic " << a
                       << " vs numeric " << numeric;
                    res.worst = os.str();
                }
            }
        }
    }
    return res;
}

}  // namespace ctvit::testing
