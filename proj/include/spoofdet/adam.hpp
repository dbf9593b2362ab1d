#pragma once

#include "spoofdet/tensor.hpp"

namespace spoofdet {

template <typename T>
struct AdamState {
    Tensor<T> m, v;  // first/second moment, same shape as the parameter
    int64_t t = 0;
    T lr = T(3e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

template <typename T>
AdamState<T> adam_init(const Tensor<T>& param, T lr = T(3e-4)) {
    AdamState<T> s;
    s.m = Tensor<T>(param.shape());
    s.v = Tensor<T>(param.shape());
    s.lr = lr;
    return s;
}

/// One bias-corrected Adam update, in place on `param`.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& s) {
    check(param.shape() == grad.shape() && param.shape() == s.m.shape(),
          "adam_step: parameter/gradient/state shape mismatch");
    s.t += 1;
    const T bc1 = T(1) - std::pow(s.beta1, (T)s.t);
    const T bc2 = T(1) - std::pow(s.beta2, (T)s.t);
    T* p = param.data();
    const T* g = grad.data();
    T* m = s.m.data();
    T* v = s.v.data();
    for (int64_t i = 0; i < param.numel(); ++i) {
        m[i] = s.beta1 * m[i] + (T(1) - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (T(1) - s.beta2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

}  // namespace spoofdet
