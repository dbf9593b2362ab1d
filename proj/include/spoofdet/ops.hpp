#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include "spoofdet/tensor.hpp"

namespace spoofdet {
namespace ops {

// ---------------------------------------------------------------------------
// Small row-major GEMM kernels shared by linear/conv/lstm. A is [M,K],
// B is [K,N] (or transposed where noted), C accumulates.
// ---------------------------------------------------------------------------

template <typename T>
inline void gemm_nn_acc(T* c, const T* a, const T* b, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        T* crow = c + m * N;
        const T* arow = a + m * K;
        for (int64_t k = 0; k < K; ++k) {
            const T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = b + k * N;
            for (int64_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// C[M,N] += A^T * B where A is [K,M], B is [K,N].
template <typename T>
inline void gemm_tn_acc(T* c, const T* a, const T* b, int64_t M, int64_t K, int64_t N) {
    for (int64_t k = 0; k < K; ++k) {
        const T* arow = a + k * M;
        const T* brow = b + k * N;
        for (int64_t m = 0; m < M; ++m) {
            const T av = arow[m];
            if (av == T(0)) continue;
            T* crow = c + m * N;
            for (int64_t n = 0; n < N; ++n) crow[n] += av * brow[n];
        }
    }
}

// C[M,N] += A * B^T where A is [M,K], B is [N,K].
template <typename T>
inline void gemm_nt_acc(T* c, const T* a, const T* b, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        const T* arow = a + m * K;
        T* crow = c + m * N;
        for (int64_t n = 0; n < N; ++n) {
            const T* brow = b + n * K;
            T acc = T(0);
            for (int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
            crow[n] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, const char* name, Fwd fwd, Bwd bwd_factor_from_y) {
    Tensor<T> y(x.shape());
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t i = 0; i < x.numel(); ++i) yd[i] = fwd(xd[i]);
    check_finite(y, name);
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, y, bwd_factor_from_y](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            const T* yd2 = y.data();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bwd_factor_from_y(yd2[i]);
        }));
    }
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T y) { return y > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(
        x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
    return unary_op(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    return unary_op(
        x, "scale", [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

namespace detail {

template <typename T, typename Fwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                    std::function<void(Tape<T>&, const std::vector<T>&, int64_t, int64_t)> bwd_builder) {
    check(a.shape() == b.shape(),
          std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* yd = y.data();
    for (int64_t i = 0; i < a.numel(); ++i) yd[i] = fwd(ad[i], bd[i]);
    check_finite(y, name);
    Tape<T>* tp = Tape<T>::active();
    if (tp && (tp->tracked(a) || tp->tracked(b))) {
        int64_t pa = tp->node_for(a), pb = tp->node_for(b);
        y.set_tape_node(tp->id(), tp->add_node({pa, pb}, y.numel(), [pa, pb, bwd_builder](Tape<T>& t, const std::vector<T>& g) {
            bwd_builder(t, g, pa, pb);
        }));
    }
    return y;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        a, b, "add", [](T x, T y) { return x + y; },
        [](Tape<T>& t, const std::vector<T>& g, int64_t pa, int64_t pb) {
            if (pa >= 0) {
                auto& ga = t.grad_buffer(pa);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (pb >= 0) {
                auto& gb = t.grad_buffer(pb);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        a, b, "sub", [](T x, T y) { return x - y; },
        [](Tape<T>& t, const std::vector<T>& g, int64_t pa, int64_t pb) {
            if (pa >= 0) {
                auto& ga = t.grad_buffer(pa);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (pb >= 0) {
                auto& gb = t.grad_buffer(pb);
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> ac = a, bc = b;
    return detail::binary_op<T>(
        a, b, "mul", [](T x, T y) { return x * y; },
        [ac, bc](Tape<T>& t, const std::vector<T>& g, int64_t pa, int64_t pb) {
            if (pa >= 0) {
                auto& ga = t.grad_buffer(pa);
                const T* bd = bc.data();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
            }
            if (pb >= 0) {
                auto& gb = t.grad_buffer(pb);
                const T* ad = ac.data();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
            }
        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    const T* xd = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
    Tensor<T> y = Tensor<T>::scalar(acc);
    check_finite(y, "sum_all");
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        int64_t n = x.numel();
        y.set_tape_node(tp->id(), tp->add_node({px}, 1, [px, n](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
        }));
    }
    return y;
}

namespace detail {
// Iteration frame for single-axis reductions on a row-major tensor.
struct AxisIter {
    int64_t outer, extent, inner;
};
inline AxisIter axis_iter(const Shape& s, int axis) {
    check(axis >= 0 && axis < (int)s.size(), "reduction axis out of range");
    AxisIter it{1, s[axis], 1};
    for (int i = 0; i < axis; ++i) it.outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) it.inner *= s[i];
    return it;
}
inline Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (int i = 0; i < (int)s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}
}  // namespace detail

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, int axis) {
    auto it = detail::axis_iter(x.shape(), axis);
    Tensor<T> y(detail::drop_axis(x.shape(), axis));
    const T* xd = x.data();
    T* yd = y.data();
    const T inv = T(1) / T(it.extent);
    for (int64_t o = 0; o < it.outer; ++o)
        for (int64_t i = 0; i < it.inner; ++i) {
            T acc = T(0);
            for (int64_t a = 0; a < it.extent; ++a) acc += xd[(o * it.extent + a) * it.inner + i];
            yd[o * it.inner + i] = acc * inv;
        }
    check_finite(y, "mean_over_axis");
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, it, inv](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t o = 0; o < it.outer; ++o)
                for (int64_t i = 0; i < it.inner; ++i) {
                    const T gv = g[o * it.inner + i] * inv;
                    for (int64_t a = 0; a < it.extent; ++a) gx[(o * it.extent + a) * it.inner + i] += gv;
                }
        }));
    }
    return y;
}

/// Min along one axis; gradient routes to the argmin (lowest index on ties).
template <typename T>
Tensor<T> min_over_axis(const Tensor<T>& x, int axis) {
    auto it = detail::axis_iter(x.shape(), axis);
    Tensor<T> y(detail::drop_axis(x.shape(), axis));
    auto argmin = std::make_shared<std::vector<int64_t>>(y.numel());
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t o = 0; o < it.outer; ++o)
        for (int64_t i = 0; i < it.inner; ++i) {
            T best = xd[o * it.extent * it.inner + i];
            int64_t besta = 0;
            for (int64_t a = 1; a < it.extent; ++a) {
                T v = xd[(o * it.extent + a) * it.inner + i];
                if (v < best) {
                    best = v;
                    besta = a;
                }
            }
            yd[o * it.inner + i] = best;
            (*argmin)[o * it.inner + i] = besta;
        }
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, it, argmin](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t o = 0; o < it.outer; ++o)
                for (int64_t i = 0; i < it.inner; ++i) {
                    int64_t a = (*argmin)[o * it.inner + i];
                    gx[(o * it.extent + a) * it.inner + i] += g[o * it.inner + i];
                }
        }));
    }
    return y;
}

// ---------------------------------------------------------------------------
// Linear layer and friends
// ---------------------------------------------------------------------------

/// y[..., K] = x[..., D] * W[K, D]^T (+ b[K]). Leading axes are flattened.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr,
                 const char* name = "linear") {
    check(w.ndim() == 2, std::string(name) + ": weight must be 2-d");
    const int64_t D = w.dim(1), K = w.dim(0);
    check(x.ndim() >= 1 && x.shape().back() == D,
          std::string(name) + ": input " + shape_str(x.shape()) + " does not end in " + std::to_string(D));
    if (b) check(b->numel() == K, std::string(name) + ": bias size mismatch");
    const int64_t N = x.numel() / D;

    Shape out_shape(x.shape());
    out_shape.back() = K;
    Tensor<T> y(out_shape);
    gemm_nt_acc(y.data(), x.data(), w.data(), N, D, K);
    if (b) {
        T* yd = y.data();
        const T* bd = b->data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t k = 0; k < K; ++k) yd[n * K + k] += bd[k];
    }
    check_finite(y, name);

    Tape<T>* tp = Tape<T>::active();
    bool rec = tp && (tp->tracked(x) || tp->tracked(w) || (b && tp->tracked(*b)));
    if (rec) {
        int64_t px = tp->node_for(x), pw = tp->node_for(w), pb = b ? tp->node_for(*b) : -1;
        Tensor<T> xc = x, wc = w;
        y.set_tape_node(tp->id(), tp->add_node({px, pw, pb}, y.numel(),
                                               [px, pw, pb, xc, wc, N, D, K](Tape<T>& t, const std::vector<T>& g) {
            if (px >= 0) gemm_nn_acc(t.grad_buffer(px).data(), g.data(), wc.data(), N, K, D);
            if (pw >= 0) gemm_tn_acc(t.grad_buffer(pw).data(), g.data(), xc.data(), K, N, D);
            if (pb >= 0) {
                auto& gb = t.grad_buffer(pb);
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t k = 0; k < K; ++k) gb[k] += g[n * K + k];
            }
        }));
    }
    return y;
}

template <typename T>
Tensor<T> linear_nobias(const Tensor<T>& x, const Tensor<T>& w, const char* name = "linear") {
    return linear<T>(x, w, nullptr, name);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    check(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor<T> y = Tensor<T>::from(std::move(shape), x.vec());
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }));
    }
    return y;
}

// ---------------------------------------------------------------------------
// Length-normalization and masked sequence ops
// ---------------------------------------------------------------------------

inline uint64_t& degenerate_normalize_warnings() {
    thread_local uint64_t n = 0;
    return n;
}

/// Rows (last axis) scaled to unit L2 norm; the norm is clamped below at
/// `eps`, so an all-zero row maps to the zero row (counted as a degenerate
/// input warning).
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12)) {
    const int64_t D = x.shape().back();
    const int64_t N = x.numel() / D;
    Tensor<T> y(x.shape());
    auto norms = std::make_shared<std::vector<T>>(N);
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t n = 0; n < N; ++n) {
        T sq = T(0);
        for (int64_t d = 0; d < D; ++d) sq += xd[n * D + d] * xd[n * D + d];
        T norm = std::sqrt(sq);
        if (norm == T(0)) ++degenerate_normalize_warnings();
        (*norms)[n] = norm;
        const T inv = T(1) / std::max(norm, eps);
        for (int64_t d = 0; d < D; ++d) yd[n * D + d] = xd[n * D + d] * inv;
    }
    check_finite(y, "l2_normalize");
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        Tensor<T> yc = y;
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, yc, norms, N, D, eps](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            const T* yd2 = yc.data();
            for (int64_t n = 0; n < N; ++n) {
                const T norm = (*norms)[n];
                if (norm > eps) {
                    T dot = T(0);
                    for (int64_t d = 0; d < D; ++d) dot += g[n * D + d] * yd2[n * D + d];
                    const T inv = T(1) / norm;
                    for (int64_t d = 0; d < D; ++d)
                        gx[n * D + d] += (g[n * D + d] - yd2[n * D + d] * dot) * inv;
                } else {
                    const T inv = T(1) / eps;
                    for (int64_t d = 0; d < D; ++d) gx[n * D + d] += g[n * D + d] * inv;
                }
            }
        }));
    }
    return y;
}

/// Mean over the time axis of h[B,M,E] restricted to the first lens[b]
/// steps. Every item must have at least one valid step.
template <typename T>
Tensor<T> masked_mean_time(const Tensor<T>& h, const std::vector<int64_t>& lens) {
    check(h.ndim() == 3, "masked_mean_time: expected [B,M,E]");
    const int64_t B = h.dim(0), M = h.dim(1), E = h.dim(2);
    check((int64_t)lens.size() == B, "masked_mean_time: lens size mismatch");
    for (int64_t b = 0; b < B; ++b)
        check(lens[b] > 0 && lens[b] <= M,
              "masked_mean_time: item " + std::to_string(b) + " has no valid steps (all-masked sequence)");
    Tensor<T> y({B, E});
    const T* hd = h.data();
    T* yd = y.data();
    for (int64_t b = 0; b < B; ++b) {
        const T inv = T(1) / T(lens[b]);
        for (int64_t m = 0; m < lens[b]; ++m)
            for (int64_t e = 0; e < E; ++e) yd[b * E + e] += hd[(b * M + m) * E + e] * inv;
    }
    check_finite(y, "masked_mean_time");
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(h)) {
        int64_t ph = tp->node_for(h);
        auto lens_c = lens;
        y.set_tape_node(tp->id(), tp->add_node({ph}, y.numel(), [ph, lens_c, B, M, E](Tape<T>& t, const std::vector<T>& g) {
            if (ph < 0) return;
            auto& gh = t.grad_buffer(ph);
            for (int64_t b = 0; b < B; ++b) {
                const T inv = T(1) / T(lens_c[b]);
                for (int64_t m = 0; m < lens_c[b]; ++m)
                    for (int64_t e = 0; e < E; ++e) gh[(b * M + m) * E + e] += g[b * E + e] * inv;
            }
        }));
    }
    return y;
}

/// Picks, per batch item, the valid step minimizing x[b,m,0] and returns
/// x[b,m*,:]. The subgradient flows only to the selected step.
template <typename T>
Tensor<T> argmin_select(const Tensor<T>& x, const std::vector<int64_t>& lens) {
    check(x.ndim() == 3, "argmin_select: expected [B,M,K]");
    const int64_t B = x.dim(0), M = x.dim(1), K = x.dim(2);
    check((int64_t)lens.size() == B, "argmin_select: lens size mismatch");
    Tensor<T> y({B, K});
    auto arg = std::make_shared<std::vector<int64_t>>(B);
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t b = 0; b < B; ++b) {
        check(lens[b] > 0 && lens[b] <= M, "argmin_select: empty valid range");
        int64_t best = 0;
        for (int64_t m = 1; m < lens[b]; ++m)
            if (xd[(b * M + m) * K] < xd[(b * M + best) * K]) best = m;
        (*arg)[b] = best;
        for (int64_t k = 0; k < K; ++k) yd[b * K + k] = xd[(b * M + best) * K + k];
    }
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, arg, B, M, K](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t k = 0; k < K; ++k) gx[(b * M + (*arg)[b]) * K + k] += g[b * K + k];
        }));
    }
    return y;
}

/// Inverted dropout: active only in train mode, where kept values are scaled
/// by 1/(1-rate) so the expectation is unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, std::mt19937_64* rng) {
    check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return x;
    check(rng != nullptr, "dropout: train mode needs an RNG");
    Tensor<T> y(x.shape());
    auto mask = std::make_shared<std::vector<T>>(x.numel());
    const T scale_keep = T(1.0 / (1.0 - rate));
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        // top 53 bits -> uniform in [0,1)
        double u = double((*rng)() >> 11) * 0x1.0p-53;
        (*mask)[i] = u < rate ? T(0) : scale_keep;
        yd[i] = xd[i] * (*mask)[i];
    }
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, mask](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
        }));
    }
    return y;
}

}  // namespace ops
}  // namespace spoofdet
