#pragma once

#include "spoofdet/ops.hpp"

namespace spoofdet {
namespace ops {

template <typename T>
struct LstmDirParams {
    Tensor<T> wx;  // [4H, D], gate order i,f,g,o
    Tensor<T> wh;  // [4H, H]
    Tensor<T> b;   // [4H]
};

template <typename T>
struct BiLstmParams {
    LstmDirParams<T> fw, bw;
};

namespace detail {

template <typename T>
struct LstmSaved {
    std::vector<T> gates;  // [B,M,4H] post-activation, per direction
    std::vector<T> c;      // [B,M,H]
    std::vector<T> hc;     // [B,M,H] tanh(c)
    std::vector<T> h;      // [B,M,H]
};

}  // namespace detail

/// Bidirectional LSTM over x[B,M,D] -> y[B,M,2H]. lens gives each item's
/// valid step count; outputs at padded steps are zero and receive no
/// gradient. The forward direction fills y[...,0:H], the reversed direction
/// y[...,H:2H]; both start from zero states at their respective ends.
template <typename T>
Tensor<T> bilstm(const Tensor<T>& x, const std::vector<int64_t>& lens, const BiLstmParams<T>& p) {
    check(x.ndim() == 3, "bilstm: expected [B,M,D]");
    const int64_t B = x.dim(0), M = x.dim(1), D = x.dim(2);
    check(M > 0, "bilstm: empty sequence (M == 0)");
    check((int64_t)lens.size() == B, "bilstm: lens size mismatch");
    const int64_t H4 = p.fw.wx.dim(0);
    check(H4 % 4 == 0, "bilstm: weight rows must be 4*H");
    const int64_t H = H4 / 4;
    for (const auto* d : {&p.fw, &p.bw}) {
        check(d->wx.dim(0) == H4 && d->wx.dim(1) == D, "bilstm: wx must be [4H,D]");
        check(d->wh.dim(0) == H4 && d->wh.dim(1) == H, "bilstm: wh must be [4H,H]");
        check(d->b.numel() == H4, "bilstm: bias must be [4H]");
    }
    for (int64_t b = 0; b < B; ++b)
        check(lens[b] >= 1 && lens[b] <= M, "bilstm: item " + std::to_string(b) + " has invalid length");

    Tensor<T> y({B, M, 2 * H});
    auto saved = std::make_shared<std::array<detail::LstmSaved<T>, 2>>();
    for (auto& s : *saved) {
        s.gates.assign(B * M * H4, T(0));
        s.c.assign(B * M * H, T(0));
        s.hc.assign(B * M * H, T(0));
        s.h.assign(B * M * H, T(0));
    }

    const LstmDirParams<T>* dirs[2] = {&p.fw, &p.bw};
    std::vector<T> a(H4), hprev(H), cprev(H);
    for (int dir = 0; dir < 2; ++dir) {
        const T* wx = dirs[dir]->wx.data();
        const T* wh = dirs[dir]->wh.data();
        const T* bias = dirs[dir]->b.data();
        auto& sv = (*saved)[dir];
        for (int64_t b = 0; b < B; ++b) {
            const int64_t L = lens[b];
            std::fill(hprev.begin(), hprev.end(), T(0));
            std::fill(cprev.begin(), cprev.end(), T(0));
            for (int64_t s = 0; s < L; ++s) {
                const int64_t t = dir == 0 ? s : L - 1 - s;
                const T* xt = x.data() + (b * M + t) * D;
                for (int64_t r = 0; r < H4; ++r) {
                    T acc = bias[r];
                    const T* wxr = wx + r * D;
                    for (int64_t d = 0; d < D; ++d) acc += wxr[d] * xt[d];
                    const T* whr = wh + r * H;
                    for (int64_t hh = 0; hh < H; ++hh) acc += whr[hh] * hprev[hh];
                    a[r] = acc;
                }
                T* gt = sv.gates.data() + (b * M + t) * H4;
                T* ct = sv.c.data() + (b * M + t) * H;
                T* hct = sv.hc.data() + (b * M + t) * H;
                T* ht = sv.h.data() + (b * M + t) * H;
                for (int64_t hh = 0; hh < H; ++hh) {
                    const T ig = T(1) / (T(1) + std::exp(-a[hh]));
                    const T fg = T(1) / (T(1) + std::exp(-a[H + hh]));
                    const T gg = std::tanh(a[2 * H + hh]);
                    const T og = T(1) / (T(1) + std::exp(-a[3 * H + hh]));
                    gt[hh] = ig;
                    gt[H + hh] = fg;
                    gt[2 * H + hh] = gg;
                    gt[3 * H + hh] = og;
                    ct[hh] = fg * cprev[hh] + ig * gg;
                    hct[hh] = std::tanh(ct[hh]);
                    ht[hh] = og * hct[hh];
                    y.data()[(b * M + t) * 2 * H + dir * H + hh] = ht[hh];
                }
                std::copy(ht, ht + H, hprev.begin());
                std::copy(ct, ct + H, cprev.begin());
            }
        }
    }
    check_finite(y, "bilstm");

    Tape<T>* tp = Tape<T>::active();
    bool rec = tp && (tp->tracked(x) || tp->tracked(p.fw.wx) || tp->tracked(p.fw.wh) || tp->tracked(p.fw.b) ||
                      tp->tracked(p.bw.wx) || tp->tracked(p.bw.wh) || tp->tracked(p.bw.b));
    if (!rec) return y;

    int64_t px = tp->node_for(x);
    int64_t pn[2][3] = {{tp->node_for(p.fw.wx), tp->node_for(p.fw.wh), tp->node_for(p.fw.b)},
                        {tp->node_for(p.bw.wx), tp->node_for(p.bw.wh), tp->node_for(p.bw.b)}};
    Tensor<T> xc = x;
    Tensor<T> wxs[2] = {p.fw.wx, p.bw.wx};
    Tensor<T> whs[2] = {p.fw.wh, p.bw.wh};
    auto lens_c = lens;

    auto bwd = [=](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T> da(H4), dh(H), dc(H), dh_next(H), dc_next(H);
        for (int dir = 0; dir < 2; ++dir) {
            const auto& sv = (*saved)[dir];
            const T* wx = wxs[dir].data();
            const T* wh = whs[dir].data();
            T* gwx = pn[dir][0] >= 0 ? t.grad_buffer(pn[dir][0]).data() : nullptr;
            T* gwh = pn[dir][1] >= 0 ? t.grad_buffer(pn[dir][1]).data() : nullptr;
            T* gb = pn[dir][2] >= 0 ? t.grad_buffer(pn[dir][2]).data() : nullptr;
            T* gx = px >= 0 ? t.grad_buffer(px).data() : nullptr;
            for (int64_t b = 0; b < B; ++b) {
                const int64_t L = lens_c[b];
                std::fill(dh_next.begin(), dh_next.end(), T(0));
                std::fill(dc_next.begin(), dc_next.end(), T(0));
                for (int64_t s = L - 1; s >= 0; --s) {
                    const int64_t tix = dir == 0 ? s : L - 1 - s;
                    const int64_t tprev = dir == 0 ? tix - 1 : tix + 1;
                    const T* gt = sv.gates.data() + (b * M + tix) * H4;
                    const T* hct = sv.hc.data() + (b * M + tix) * H;
                    const T* cprev_p = s > 0 ? sv.c.data() + (b * M + tprev) * H : nullptr;
                    const T* hprev_p = s > 0 ? sv.h.data() + (b * M + tprev) * H : nullptr;
                    for (int64_t hh = 0; hh < H; ++hh) {
                        const T ig = gt[hh], fg = gt[H + hh], gg = gt[2 * H + hh], og = gt[3 * H + hh];
                        const T dhv = g[(b * M + tix) * 2 * H + dir * H + hh] + dh_next[hh];
                        const T dov = dhv * hct[hh];
                        const T dcv = dhv * og * (T(1) - hct[hh] * hct[hh]) + dc_next[hh];
                        const T cprev_v = cprev_p ? cprev_p[hh] : T(0);
                        const T dfv = dcv * cprev_v;
                        const T div = dcv * gg;
                        const T dgv = dcv * ig;
                        da[hh] = div * ig * (T(1) - ig);
                        da[H + hh] = dfv * fg * (T(1) - fg);
                        da[2 * H + hh] = dgv * (T(1) - gg * gg);
                        da[3 * H + hh] = dov * og * (T(1) - og);
                        dc_next[hh] = dcv * fg;
                    }
                    const T* xt = xc.data() + (b * M + tix) * D;
                    std::fill(dh_next.begin(), dh_next.end(), T(0));
                    for (int64_t r = 0; r < H4; ++r) {
                        const T dav = da[r];
                        if (gb) gb[r] += dav;
                        if (dav == T(0)) continue;
                        if (gwx) {
                            T* row = gwx + r * D;
                            for (int64_t d = 0; d < D; ++d) row[d] += dav * xt[d];
                        }
                        if (gwh && hprev_p) {
                            T* row = gwh + r * H;
                            for (int64_t hh = 0; hh < H; ++hh) row[hh] += dav * hprev_p[hh];
                        }
                        if (gx) {
                            const T* wxr = wx + r * D;
                            T* gxt = gx + (b * M + tix) * D;
                            for (int64_t d = 0; d < D; ++d) gxt[d] += dav * wxr[d];
                        }
                        const T* whr = wh + r * H;
                        for (int64_t hh = 0; hh < H; ++hh) dh_next[hh] += dav * whr[hh];
                    }
                }
            }
        }
    };
    y.set_tape_node(tp->id(), tp->add_node({px, pn[0][0], pn[0][1], pn[0][2], pn[1][0], pn[1][1], pn[1][2]},
                                           y.numel(), std::move(bwd)));
    return y;
}

}  // namespace ops
}  // namespace spoofdet
