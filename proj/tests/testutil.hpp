#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "spq/tensor.hpp"

namespace spq::testutil {

// Central finite differences of a scalar function w.r.t. every entry of the
// given parameter tensors, compared against analytic grads. Returns the
// maximum relative error, with an absolute floor to keep near-zero entries
// from blowing up the ratio.
inline double max_grad_rel_error(const std::vector<Tensor*>& params,
                                 const std::vector<const Tensor*>& analytic,
                                 const std::function<double()>& f, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double fp = f();
            t.data[i] = saved - h;
            const double fm = f();
            t.data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double exact = analytic[p]->data[i];
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-4});
            worst = std::max(worst, std::abs(numeric - exact) / denom);
        }
    }
    return worst;
}

}  // namespace spq::testutil
