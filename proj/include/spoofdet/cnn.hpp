#pragma once

#include "spoofdet/ops.hpp"

namespace spoofdet {
namespace ops {

namespace detail {

// col[(c*kh+i)*kw+j, oh*OW+ow] = x[c, oh*sh-ph+i, ow*sw-pw+j], zero outside.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t sh,
            int64_t sw, int64_t ph, int64_t pw, int64_t OH, int64_t OW, T* col) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                T* crow = col + ((c * kh + i) * kw + j) * OH * OW;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih = oh * sh - ph + i;
                    if (ih < 0 || ih >= H) {
                        std::fill(crow + oh * OW, crow + (oh + 1) * OW, T(0));
                        continue;
                    }
                    const T* xrow = x + (c * H + ih) * W;
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t iw = ow * sw - pw + j;
                        crow[oh * OW + ow] = (iw >= 0 && iw < W) ? xrow[iw] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_acc(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t sh,
                int64_t sw, int64_t ph, int64_t pw, int64_t OH, int64_t OW, T* x) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                const T* crow = col + ((c * kh + i) * kw + j) * OH * OW;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih = oh * sh - ph + i;
                    if (ih < 0 || ih >= H) continue;
                    T* xrow = x + (c * H + ih) * W;
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t iw = ow * sw - pw + j;
                        if (iw >= 0 && iw < W) xrow[iw] += crow[oh * OW + ow];
                    }
                }
            }
}

}  // namespace detail

/// 2-d cross-correlation of x[B,Cin,H,W] with w[Cout,Cin,kh,kw] plus bias.
/// Output extents follow floor arithmetic: OH = (H + 2*ph - kh)/sh + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::pair<int64_t, int64_t> stride = {1, 1}, std::pair<int64_t, int64_t> pad = {0, 0},
                 const char* name = "conv2d") {
    check(x.ndim() == 4 && w.ndim() == 4, std::string(name) + ": conv2d expects 4-d input and weight");
    const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(w.dim(1) == Cin, std::string(name) + ": weight expects " + std::to_string(w.dim(1)) +
                               " input channels, input has " + std::to_string(Cin));
    check(b.numel() == Cout, std::string(name) + ": bias size mismatch");
    const auto [sh, sw] = stride;
    const auto [ph, pw] = pad;
    check(sh > 0 && sw > 0 && ph >= 0 && pw >= 0, std::string(name) + ": bad stride/padding");
    const int64_t OH = (H + 2 * ph - kh) / sh + 1;
    const int64_t OW = (W + 2 * pw - kw) / sw + 1;
    check(OH > 0 && OW > 0, std::string(name) + ": kernel larger than padded input");

    const int64_t K = Cin * kh * kw;
    Tensor<T> y({B, Cout, OH, OW});
    std::vector<T> col(K * OH * OW);
    for (int64_t n = 0; n < B; ++n) {
        detail::im2col(x.data() + n * Cin * H * W, Cin, H, W, kh, kw, sh, sw, ph, pw, OH, OW, col.data());
        T* yb = y.data() + n * Cout * OH * OW;
        gemm_nn_acc(yb, w.data(), col.data(), Cout, K, OH * OW);
        for (int64_t co = 0; co < Cout; ++co) {
            const T bv = b.data()[co];
            for (int64_t i = 0; i < OH * OW; ++i) yb[co * OH * OW + i] += bv;
        }
    }
    check_finite(y, name);

    Tape<T>* tp = Tape<T>::active();
    if (tp && (tp->tracked(x) || tp->tracked(w) || tp->tracked(b))) {
        int64_t px = tp->node_for(x), pw_ = tp->node_for(w), pb = tp->node_for(b);
        Tensor<T> xc = x, wc = w;
        auto bwd = [=](Tape<T>& t, const std::vector<T>& g) {
            std::vector<T> colbuf(K * OH * OW);
            std::vector<T> dcol;
            if (px >= 0) dcol.resize(K * OH * OW);
            for (int64_t n = 0; n < B; ++n) {
                const T* gb = g.data() + n * Cout * OH * OW;
                if (pw_ >= 0) {
                    detail::im2col(xc.data() + n * Cin * H * W, Cin, H, W, kh, kw, sh, sw, ph, pw, OH, OW,
                                   colbuf.data());
                    gemm_nt_acc(t.grad_buffer(pw_).data(), gb, colbuf.data(), Cout, OH * OW, K);
                }
                if (pb >= 0) {
                    auto& gbias = t.grad_buffer(pb);
                    for (int64_t co = 0; co < Cout; ++co)
                        for (int64_t i = 0; i < OH * OW; ++i) gbias[co] += gb[co * OH * OW + i];
                }
                if (px >= 0) {
                    std::fill(dcol.begin(), dcol.end(), T(0));
                    gemm_tn_acc(dcol.data(), wc.data(), gb, K, Cout, OH * OW);
                    detail::col2im_acc(dcol.data(), Cin, H, W, kh, kw, sh, sw, ph, pw, OH, OW,
                                       t.grad_buffer(px).data() + n * Cin * H * W);
                }
            }
        };
        y.set_tape_node(tp->id(), tp->add_node({px, pw_, pb}, y.numel(), std::move(bwd)));
    }
    return y;
}

/// 2x2/2x2 max pooling with floor semantics (trailing row/col dropped).
/// Gradient goes to the argmax; ties resolve to the lowest linear index.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
    check(x.ndim() == 4, "maxpool2d: expected [B,C,H,W]");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t OH = H / 2, OW = W / 2;
    check(OH > 0 && OW > 0, "maxpool2d: input smaller than 2x2");
    Tensor<T> y({B, C, OH, OW});
    auto argmax = std::make_shared<std::vector<int64_t>>(y.numel());
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* plane = xd + bc * H * W;
        for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow) {
                T best = plane[(2 * oh) * W + 2 * ow];
                int64_t bestidx = (2 * oh) * W + 2 * ow;
                for (int64_t i = 0; i < 2; ++i)
                    for (int64_t j = 0; j < 2; ++j) {
                        const int64_t idx = (2 * oh + i) * W + 2 * ow + j;
                        if (plane[idx] > best) {
                            best = plane[idx];
                            bestidx = idx;
                        }
                    }
                yd[bc * OH * OW + oh * OW + ow] = best;
                (*argmax)[bc * OH * OW + oh * OW + ow] = bc * H * W + bestidx;
            }
    }
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, argmax](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
        }));
    }
    return y;
}

/// Max-Feature-Map: elementwise max of the two channel halves, halving the
/// channel count. Ties route the gradient to the first half.
template <typename T>
Tensor<T> max_feature_map(const Tensor<T>& x) {
    check(x.ndim() == 4, "max_feature_map: expected [B,C,H,W]");
    const int64_t B = x.dim(0), C2 = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(C2 % 2 == 0, "max_feature_map: channel count " + std::to_string(C2) + " is odd");
    const int64_t C = C2 / 2, plane = H * W;
    Tensor<T> y({B, C, H, W});
    auto first_wins = std::make_shared<std::vector<uint8_t>>(y.numel());
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* x1 = xd + (b * C2 + c) * plane;
            const T* x2 = xd + (b * C2 + C + c) * plane;
            T* yrow = yd + (b * C + c) * plane;
            uint8_t* win = first_wins->data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                win[i] = x1[i] >= x2[i];
                yrow[i] = win[i] ? x1[i] : x2[i];
            }
        }
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, first_wins, B, C, plane](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t yofs = (b * C + c) * plane;
                    const int64_t x1ofs = (b * 2 * C + c) * plane;
                    const int64_t x2ofs = (b * 2 * C + C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i)
                        gx[((*first_wins)[yofs + i] ? x1ofs : x2ofs) + i] += g[yofs + i];
                }
        }));
    }
    return y;
}

/// Per-channel scaling of x[B,C,H,W] by s[B,C] (the excitation step of an
/// SE block).
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
    check(x.ndim() == 4 && s.ndim() == 2 && x.dim(0) == s.dim(0) && x.dim(1) == s.dim(1),
          "channel_scale: shapes " + shape_str(x.shape()) + " and " + shape_str(s.shape()) + " do not agree");
    const int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> y(x.shape());
    const T* xd = x.data();
    const T* sd = s.data();
    T* yd = y.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T sv = sd[bc];
        for (int64_t i = 0; i < plane; ++i) yd[bc * plane + i] = xd[bc * plane + i] * sv;
    }
    check_finite(y, "channel_scale");
    Tape<T>* tp = Tape<T>::active();
    if (tp && (tp->tracked(x) || tp->tracked(s))) {
        int64_t px = tp->node_for(x), ps = tp->node_for(s);
        Tensor<T> xc = x, sc = s;
        y.set_tape_node(tp->id(), tp->add_node({px, ps}, y.numel(), [=](Tape<T>& t, const std::vector<T>& g) {
            if (px >= 0) {
                auto& gx = t.grad_buffer(px);
                for (int64_t bc = 0; bc < B * C; ++bc) {
                    const T sv = sc.data()[bc];
                    for (int64_t i = 0; i < plane; ++i) gx[bc * plane + i] += g[bc * plane + i] * sv;
                }
            }
            if (ps >= 0) {
                auto& gs = t.grad_buffer(ps);
                for (int64_t bc = 0; bc < B * C; ++bc) {
                    T acc = T(0);
                    for (int64_t i = 0; i < plane; ++i) acc += g[bc * plane + i] * xc.data()[bc * plane + i];
                    gs[bc] += acc;
                }
            }
        }));
    }
    return y;
}

/// Per-channel batch normalization over (B,H,W). Train mode normalizes with
/// batch statistics (biased variance) and updates the running buffers in
/// place; eval mode applies the running affine map.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps, bool train,
                       const char* name = "batch_norm2d") {
    check(x.ndim() == 4, std::string(name) + ": expected [B,C,H,W]");
    const int64_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    check(gamma.numel() == C && beta.numel() == C && running_mean.numel() == C && running_var.numel() == C,
          std::string(name) + ": per-channel parameter size mismatch");
    const int64_t N = B * plane;
    Tensor<T> y(x.shape());
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto invstd = std::make_shared<std::vector<T>>(C);
    const T* xd = x.data();
    T* yd = y.data();

    for (int64_t c = 0; c < C; ++c) {
        T mean, istd;
        if (train) {
            T sum = T(0);
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xd + (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) sum += p[i];
            }
            mean = sum / T(N);
            T var = T(0);
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xd + (b * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
            }
            var /= T(N);
            running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * mean;
            running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * var;
            istd = T(1) / std::sqrt(var + eps);
        } else {
            mean = running_mean.data()[c];
            istd = T(1) / std::sqrt(running_var.data()[c] + eps);
        }
        (*invstd)[c] = istd;
        const T g = gamma.data()[c], bta = beta.data()[c];
        for (int64_t b = 0; b < B; ++b) {
            const T* p = xd + (b * C + c) * plane;
            T* q = yd + (b * C + c) * plane;
            T* xh = xhat->data() + (b * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean) * istd;
                q[i] = g * xh[i] + bta;
            }
        }
    }
    check_finite(y, name);

    Tape<T>* tp = Tape<T>::active();
    if (tp && (tp->tracked(x) || tp->tracked(gamma) || tp->tracked(beta))) {
        int64_t px = tp->node_for(x), pg = tp->node_for(gamma), pb = tp->node_for(beta);
        Tensor<T> gm = gamma;
        auto bwd = [=](Tape<T>& t, const std::vector<T>& g) {
            for (int64_t c = 0; c < C; ++c) {
                T gsum = T(0), gxhat = T(0);
                for (int64_t b = 0; b < B; ++b) {
                    const int64_t ofs = (b * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        gsum += g[ofs + i];
                        gxhat += g[ofs + i] * (*xhat)[ofs + i];
                    }
                }
                if (pb >= 0) t.grad_buffer(pb)[c] += gsum;
                if (pg >= 0) t.grad_buffer(pg)[c] += gxhat;
                if (px >= 0) {
                    auto& gx = t.grad_buffer(px);
                    const T k = gm.data()[c] * (*invstd)[c];
                    if (train) {
                        const T mg = gsum / T(N), mgx = gxhat / T(N);
                        for (int64_t b = 0; b < B; ++b) {
                            const int64_t ofs = (b * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i)
                                gx[ofs + i] += k * (g[ofs + i] - mg - (*xhat)[ofs + i] * mgx);
                        }
                    } else {
                        for (int64_t b = 0; b < B; ++b) {
                            const int64_t ofs = (b * C + c) * plane;
                            for (int64_t i = 0; i < plane; ++i) gx[ofs + i] += k * g[ofs + i];
                        }
                    }
                }
            }
        };
        y.set_tape_node(tp->id(), tp->add_node({px, pg, pb}, y.numel(), std::move(bwd)));
    }
    return y;
}

}  // namespace ops
}  // namespace spoofdet
