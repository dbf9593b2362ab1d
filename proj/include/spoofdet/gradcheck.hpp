#pragma once

#include <functional>

#include "spoofdet/tensor.hpp"

namespace spoofdet {

/// Central-difference gradient verification (64-bit only). `loss_fn` must be
/// a pure function of the current contents of `inputs`; it is re-evaluated
/// with each element nudged by +/-step. Relative error uses a floored
/// denominator so exactly-zero gradients compare by absolute error.
inline double max_rel_grad_error(const std::function<Tensor<double>()>& loss_fn,
                                 std::vector<Tensor<double>> inputs, double step = 1e-5,
                                 double denom_floor = 1e-2) {
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        for (auto& in : inputs) {
            in.set_requires_grad(true);
            tape.watch(in);
        }
        Tensor<double> loss = loss_fn();
        tape.backward(loss);
        for (auto& in : inputs) analytic.push_back(tape.grad(in));
        for (auto& in : inputs) in.set_requires_grad(false);
    }
    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor<double>& in = inputs[i];
        for (int64_t j = 0; j < in.numel(); ++j) {
            const double saved = in.data()[j];
            in.data()[j] = saved + step;
            const double fp = loss_fn().item();
            in.data()[j] = saved - step;
            const double fm = loss_fn().item();
            in.data()[j] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[i].data()[j];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool pass = false;
};

}  // namespace spoofdet
