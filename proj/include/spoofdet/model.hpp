#pragma once

#include <map>
#include <optional>
#include <sstream>

#include "spoofdet/cnn.hpp"
#include "spoofdet/lstm.hpp"

namespace spoofdet {

// Class convention throughout: label 1 = bona fide (cosine column 0),
// label 2 = spoof (column 1). Higher bona-fide cosine means more genuine.
constexpr int kBonaFide = 1;
constexpr int kSpoof = 2;

enum class Variant { Utt, Seg, UttU, SegU, MulBS, UttBW, SegBW };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Utt: return "Utt";
        case Variant::Seg: return "Seg";
        case Variant::UttU: return "UttU";
        case Variant::SegU: return "SegU";
        case Variant::MulBS: return "MulBS";
        case Variant::UttBW: return "UttBW";
        case Variant::SegBW: return "SegBW";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    for (Variant v : {Variant::Utt, Variant::Seg, Variant::UttU, Variant::SegU, Variant::MulBS,
                      Variant::UttBW, Variant::SegBW})
        if (s == variant_name(v)) return v;
    throw std::runtime_error("unknown variant '" + s + "'");
}

inline bool has_utt_head(Variant v) { return v != Variant::Seg && v != Variant::SegU; }
inline bool has_seg_head(Variant v) {
    return v == Variant::Seg || v == Variant::SegU || v == Variant::MulBS || v == Variant::UttBW ||
           v == Variant::SegBW;
}
inline bool is_warmup(Variant v) { return v == Variant::UttBW || v == Variant::SegBW; }

struct ModelConfig {
    int se_reduction = 2;
    bool use_se = true;  // false gives the plain LCNN stack
    int lstm_hidden = 48;
    double dropout = 0.5;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    int feat_dim = 60;
};

/// Time compression of the conv stack: four stride-2 pools.
inline int64_t embedding_frames(int64_t n_feat_frames) { return n_feat_frames / 2 / 2 / 2 / 2; }
constexpr int64_t kMinFeatFrames = 16;

// Conv-stack receptive field along time, from the kernel/stride/padding
// chain: each embedding frame m sees feature frames [16m - 24, 16m + 39]
// (extent 64, stride 16, left pad offset 24), clipped to the input.
constexpr int64_t kReceptiveFieldFrames = 64;
constexpr int64_t kReceptiveFieldStride = 16;
constexpr int64_t kReceptiveFieldLeft = 24;

struct LayerSpec {
    enum Kind { Conv, Mfm, MaxPool, BatchNorm, SeBlock, Dropout } kind;
    std::string name;
    int in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;  // Conv
    int ch = 0;                                             // Mfm/BatchNorm/SeBlock output channels
};

/// The fixed 29-entry conv stack, SE blocks sitting before every conv
/// except the first.
inline const std::vector<LayerSpec>& selcnn_layers() {
    static const std::vector<LayerSpec> layers = {
        {LayerSpec::Conv, "Conv_0", 1, 64, 5, 1, 2, 0},
        {LayerSpec::Mfm, "MFM_1", 0, 0, 0, 0, 0, 32},
        {LayerSpec::MaxPool, "MaxPool_2", 0, 0, 0, 0, 0, 32},
        {LayerSpec::SeBlock, "SE_3", 0, 0, 0, 0, 0, 32},
        {LayerSpec::Conv, "Conv_3", 32, 64, 1, 1, 0, 0},
        {LayerSpec::Mfm, "MFM_4", 0, 0, 0, 0, 0, 32},
        {LayerSpec::BatchNorm, "BatchNorm_5", 0, 0, 0, 0, 0, 32},
        {LayerSpec::SeBlock, "SE_6", 0, 0, 0, 0, 0, 32},
        {LayerSpec::Conv, "Conv_6", 32, 96, 3, 1, 1, 0},
        {LayerSpec::Mfm, "MFM_7", 0, 0, 0, 0, 0, 48},
        {LayerSpec::MaxPool, "MaxPool_8", 0, 0, 0, 0, 0, 48},
        {LayerSpec::BatchNorm, "BatchNorm_9", 0, 0, 0, 0, 0, 48},
        {LayerSpec::SeBlock, "SE_10", 0, 0, 0, 0, 0, 48},
        {LayerSpec::Conv, "Conv_10", 48, 96, 1, 1, 0, 0},
        {LayerSpec::Mfm, "MFM_11", 0, 0, 0, 0, 0, 48},
        {LayerSpec::BatchNorm, "BatchNorm_12", 0, 0, 0, 0, 0, 48},
        {LayerSpec::SeBlock, "SE_13", 0, 0, 0, 0, 0, 48},
        {LayerSpec::Conv, "Conv_13", 48, 128, 3, 1, 1, 0},
        {LayerSpec::Mfm, "MFM_14", 0, 0, 0, 0, 0, 64},
        {LayerSpec::MaxPool, "MaxPool_15", 0, 0, 0, 0, 0, 64},
        {LayerSpec::SeBlock, "SE_16", 0, 0, 0, 0, 0, 64},
        {LayerSpec::Conv, "Conv_16", 64, 128, 1, 1, 0, 0},
        {LayerSpec::Mfm, "MFM_17", 0, 0, 0, 0, 0, 64},
        {LayerSpec::BatchNorm, "BatchNorm_18", 0, 0, 0, 0, 0, 64},
        {LayerSpec::SeBlock, "SE_19", 0, 0, 0, 0, 0, 64},
        {LayerSpec::Conv, "Conv_19", 64, 64, 3, 1, 1, 0},
        {LayerSpec::Mfm, "MFM_20", 0, 0, 0, 0, 0, 32},
        {LayerSpec::BatchNorm, "BatchNorm_21", 0, 0, 0, 0, 0, 32},
        {LayerSpec::SeBlock, "SE_22", 0, 0, 0, 0, 0, 32},
        {LayerSpec::Conv, "Conv_22", 32, 64, 1, 1, 0, 0},
        {LayerSpec::Mfm, "MFM_23", 0, 0, 0, 0, 0, 32},
        {LayerSpec::BatchNorm, "BatchNorm_24", 0, 0, 0, 0, 0, 32},
        {LayerSpec::SeBlock, "SE_25", 0, 0, 0, 0, 0, 32},
        {LayerSpec::Conv, "Conv_25", 32, 64, 3, 1, 1, 0},
        {LayerSpec::Mfm, "MFM_26", 0, 0, 0, 0, 0, 32},
        {LayerSpec::MaxPool, "MaxPool_27", 0, 0, 0, 0, 0, 32},
        {LayerSpec::Dropout, "Dropout_28", 0, 0, 0, 0, 0, 32},
    };
    return layers;
}

/// Ordered name -> tensor registry. Iteration order is insertion order, which
/// is fixed by construction, so checkpoints and optimizer state line up.
template <typename T>
class ParamStore {
  public:
    void add(const std::string& name, Tensor<T> t) {
        check(index_.find(name) == index_.end(), "ParamStore: duplicate name " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
    }
    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        check(it != index_.end(), "ParamStore: no parameter named " + name);
        return items_[it->second].second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        check(it != index_.end(), "ParamStore: no parameter named " + name);
        return items_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    size_t size() const { return items_.size(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    int64_t total_numel() const {
        int64_t n = 0;
        for (auto& [name, t] : items_) n += t.numel();
        return n;
    }
    ParamStore clone() const {
        ParamStore out;
        for (auto& [name, t] : items_) out.add(name, t.clone());
        return out;
    }

  private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::map<std::string, size_t> index_;
};

namespace init {

inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline double gaussian(std::mt19937_64& rng) {
    double u1 = std::max(uniform01(rng), 1e-300);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
Tensor<T> he_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / (double)fan_in);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = (T)((uniform01(rng) * 2.0 - 1.0) * bound);
    return t;
}

/// Rows orthonormalized by modified Gram-Schmidt (rows <= cols).
template <typename T>
Tensor<T> orthogonal_rows(int64_t rows, int64_t cols, std::mt19937_64& rng) {
    check(rows <= cols, "orthogonal_rows: more rows than columns");
    std::vector<std::vector<double>> q(rows, std::vector<double>(cols));
    for (auto& row : q)
        for (auto& v : row) v = gaussian(rng);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < i; ++j) {
            double dot = 0;
            for (int64_t c = 0; c < cols; ++c) dot += q[i][c] * q[j][c];
            for (int64_t c = 0; c < cols; ++c) q[i][c] -= dot * q[j][c];
        }
        double norm = 0;
        for (int64_t c = 0; c < cols; ++c) norm += q[i][c] * q[i][c];
        norm = std::sqrt(norm);
        check(norm > 1e-8, "orthogonal_rows: degenerate draw");
        for (int64_t c = 0; c < cols; ++c) q[i][c] /= norm;
    }
    Tensor<T> t({rows, cols});
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t c = 0; c < cols; ++c) t.data()[i * cols + c] = (T)q[i][c];
    return t;
}

}  // namespace init

namespace ops {

/// [B,C,M,F] -> [B,M,C*F]: one flat feature vector per time step.
template <typename T>
Tensor<T> time_major_flatten(const Tensor<T>& x) {
    check(x.ndim() == 4, "time_major_flatten: expected [B,C,M,F]");
    const int64_t B = x.dim(0), C = x.dim(1), M = x.dim(2), F = x.dim(3);
    Tensor<T> y({B, M, C * F});
    const T* xd = x.data();
    T* yd = y.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t m = 0; m < M; ++m)
                for (int64_t f = 0; f < F; ++f)
                    yd[(b * M + m) * C * F + c * F + f] = xd[((b * C + c) * M + m) * F + f];
    Tape<T>* tp = Tape<T>::active();
    if (tp && tp->tracked(x)) {
        int64_t px = tp->node_for(x);
        y.set_tape_node(tp->id(), tp->add_node({px}, y.numel(), [px, B, C, M, F](Tape<T>& t, const std::vector<T>& g) {
            if (px < 0) return;
            auto& gx = t.grad_buffer(px);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t m = 0; m < M; ++m)
                        for (int64_t f = 0; f < F; ++f)
                            gx[((b * C + c) * M + m) * F + f] += g[(b * M + m) * C * F + c * F + f];
        }));
    }
    return y;
}

}  // namespace ops

namespace ops {

/// SE block: squeeze (global average per channel) -> FC(C -> C/r) -> ReLU ->
/// FC(C/r -> C) -> sigmoid -> per-channel rescaling of the input.
template <typename T>
Tensor<T> se_block(const Tensor<T>& x, const Tensor<T>& fc1w, const Tensor<T>& fc1b,
                   const Tensor<T>& fc2w, const Tensor<T>& fc2b, const char* name = "se_block") {
    check(x.ndim() == 4, std::string(name) + ": expected [B,C,T,F]");
    check(fc1w.dim(1) == x.dim(1) && fc2w.dim(0) == x.dim(1) && fc1w.dim(0) == fc2w.dim(1),
          std::string(name) + ": bottleneck shapes do not match channel count " + std::to_string(x.dim(1)));
    auto s = mean_over_axis(mean_over_axis(x, 3), 2);  // [B,C]
    auto z = relu(linear(s, fc1w, &fc1b, name));
    auto gate = sigmoid(linear(z, fc2w, &fc2b, name));
    return channel_scale(x, gate);
}

}  // namespace ops

/// Backbone + heads. All trainable tensors live in `params`; batch-norm
/// running statistics live in `buffers`.
template <typename T>
struct ModelBundle {
    Variant variant = Variant::Utt;
    ModelConfig cfg;
    ParamStore<T> params;
    ParamStore<T> buffers;

    int64_t embed_dim() const { return 2 * cfg.lstm_hidden; }

    bool has_head(const std::string& head) const { return params.contains("head_" + head + ".classes"); }

    Tensor<T>& classes(const std::string& head) { return params.at("head_" + head + ".classes"); }
    const Tensor<T>& classes(const std::string& head) const { return params.at("head_" + head + ".classes"); }

    /// Conv stack only: [B,1,N,F] -> [B,32,M,F//16]. Optionally records the
    /// realized output shape of every layer.
    Tensor<T> selcnn_forward(const Tensor<T>& x, bool train, std::mt19937_64* rng,
                             std::vector<std::pair<std::string, Shape>>* shape_trace = nullptr) const {
        check(x.ndim() == 4 && x.dim(1) == 1, "selcnn_forward: expected [B,1,N,F]");
        check(x.dim(3) == cfg.feat_dim, "selcnn_forward: feature dim mismatch");
        check(x.dim(2) >= kMinFeatFrames, "selcnn_forward: input has " + std::to_string(x.dim(2)) +
                                              " frames; minimum input length is " +
                                              std::to_string(kMinFeatFrames));
        Tensor<T> h = x;
        for (const auto& layer : selcnn_layers()) {
            switch (layer.kind) {
                case LayerSpec::Conv:
                    h = ops::conv2d(h, params.at(layer.name + ".w"), params.at(layer.name + ".b"),
                                    {layer.stride, layer.stride}, {layer.pad, layer.pad}, layer.name.c_str());
                    break;
                case LayerSpec::Mfm:
                    h = ops::max_feature_map(h);
                    break;
                case LayerSpec::MaxPool:
                    h = ops::maxpool2d(h);
                    break;
                case LayerSpec::BatchNorm: {
                    auto& rm = const_cast<ParamStore<T>&>(buffers).at(layer.name + ".running_mean");
                    auto& rv = const_cast<ParamStore<T>&>(buffers).at(layer.name + ".running_var");
                    h = ops::batch_norm2d(h, params.at(layer.name + ".gamma"), params.at(layer.name + ".beta"),
                                          rm, rv, (T)cfg.bn_momentum, (T)cfg.bn_eps, train, layer.name.c_str());
                    break;
                }
                case LayerSpec::SeBlock:
                    if (cfg.use_se) h = se_forward(h, layer.name);
                    break;
                case LayerSpec::Dropout:
                    h = ops::dropout(h, cfg.dropout, train, rng);
                    break;
            }
            if (shape_trace) shape_trace->emplace_back(layer.name, h.shape());
        }
        return h;
    }

    Tensor<T> se_forward(const Tensor<T>& x, const std::string& name) const {
        return ops::se_block(x, params.at(name + ".fc1.w"), params.at(name + ".fc1.b"),
                             params.at(name + ".fc2.w"), params.at(name + ".fc2.b"), name.c_str());
    }

    /// Full backbone: features [B,1,N,F] -> embeddings [B,M,E] with a
    /// residual connection spanning the two Bi-LSTM layers. Per-item valid
    /// embedding counts are written to emb_lens.
    Tensor<T> embeddings(const Tensor<T>& x, const std::vector<int64_t>& feat_lens, bool train,
                         std::mt19937_64* rng, std::vector<int64_t>* emb_lens) const {
        check((int64_t)feat_lens.size() == x.dim(0), "embeddings: feat_lens size mismatch");
        for (int64_t len : feat_lens)
            check(len >= kMinFeatFrames, "embeddings: item of " + std::to_string(len) +
                                             " frames; minimum input length is " +
                                             std::to_string(kMinFeatFrames));
        auto conv_out = selcnn_forward(x, train, rng);
        auto h0 = ops::time_major_flatten(conv_out);  // [B,M,E0]
        check(h0.dim(2) == embed_dim(),
              "embeddings: flattened conv dim " + std::to_string(h0.dim(2)) + " != 2*lstm_hidden");
        std::vector<int64_t> lens(feat_lens.size());
        for (size_t i = 0; i < feat_lens.size(); ++i) lens[i] = embedding_frames(feat_lens[i]);
        if (emb_lens) *emb_lens = lens;

        auto l1 = ops::bilstm(h0, lens, lstm_params(1));
        auto l2 = ops::bilstm(l1, lens, lstm_params(2));
        return ops::add(h0, l2);
    }

    ops::BiLstmParams<T> lstm_params(int layer) const {
        const std::string p = "BiLSTM_" + std::to_string(layer);
        return {{params.at(p + ".fw.wx"), params.at(p + ".fw.wh"), params.at(p + ".fw.b")},
                {params.at(p + ".bw.wx"), params.at(p + ".bw.wh"), params.at(p + ".bw.b")}};
    }

    /// Average pooling over valid steps, then cosine against the utterance
    /// head's class vectors: ([B,E] pooled, [B,2] cosines).
    std::pair<Tensor<T>, Tensor<T>> utterance_branch(const Tensor<T>& h,
                                                     const std::vector<int64_t>& lens) const {
        auto o = ops::masked_mean_time(h, lens);
        auto cos = ops::linear_nobias(ops::l2_normalize(o), ops::l2_normalize(classes("utt")), "head_utt");
        return std::make_pair(o, cos);
    }

    /// Per-step cosines [B,M,2] against the given head's class vectors.
    Tensor<T> segment_branch(const Tensor<T>& h, const std::string& head) const {
        return ops::linear_nobias(ops::l2_normalize(h), ops::l2_normalize(classes(head)), "head_seg");
    }

    void set_all_requires_grad(bool v) {
        for (auto& [name, t] : params) t.set_requires_grad(v);
    }

    ModelBundle clone() const {
        ModelBundle out;
        out.variant = variant;
        out.cfg = cfg;
        out.params = params.clone();
        out.buffers = buffers.clone();
        return out;
    }
};

namespace detail {

template <typename T>
void add_head_params(ModelBundle<T>& b, const std::string& head, std::mt19937_64& rng) {
    b.params.add("head_" + head + ".classes",
                 init::orthogonal_rows<T>(2, b.embed_dim(), rng));
}

}  // namespace detail

/// Constructs any architecture, warm-up variants included (their parameters
/// are then overwritten from the pre-trained checkpoint by warmup_expand).
template <typename T>
ModelBundle<T> build_model_unchecked(Variant variant, const ModelConfig& cfg, uint64_t seed) {
    ModelBundle<T> b;
    b.variant = variant;
    b.cfg = cfg;
    const int64_t freq_out = cfg.feat_dim / 2 / 2 / 2 / 2;
    check(32 * freq_out == 2 * (int64_t)cfg.lstm_hidden,
          "build_model: flattened conv output " + std::to_string(32 * freq_out) +
              " must equal 2*lstm_hidden for the residual connection");
    std::mt19937_64 rng(seed);

    for (const auto& layer : selcnn_layers()) {
        switch (layer.kind) {
            case LayerSpec::Conv: {
                const int64_t fan_in = (int64_t)layer.in_ch * layer.k * layer.k;
                b.params.add(layer.name + ".w",
                             init::he_uniform<T>({layer.out_ch, layer.in_ch, layer.k, layer.k}, fan_in, rng));
                b.params.add(layer.name + ".b", Tensor<T>({layer.out_ch}));
                break;
            }
            case LayerSpec::BatchNorm:
                b.params.add(layer.name + ".gamma", Tensor<T>::full({layer.ch}, T(1)));
                b.params.add(layer.name + ".beta", Tensor<T>({layer.ch}));
                b.buffers.add(layer.name + ".running_mean", Tensor<T>({layer.ch}));
                b.buffers.add(layer.name + ".running_var", Tensor<T>::full({layer.ch}, T(1)));
                break;
            case LayerSpec::SeBlock: {
                if (!cfg.use_se) break;
                const int64_t c = layer.ch;
                check(c % cfg.se_reduction == 0,
                      layer.name + ": channels " + std::to_string(c) + " not divisible by reduction " +
                          std::to_string(cfg.se_reduction));
                const int64_t mid = c / cfg.se_reduction;
                b.params.add(layer.name + ".fc1.w", init::he_uniform<T>({mid, c}, c, rng));
                b.params.add(layer.name + ".fc1.b", Tensor<T>({mid}));
                b.params.add(layer.name + ".fc2.w", init::he_uniform<T>({c, mid}, mid, rng));
                b.params.add(layer.name + ".fc2.b", Tensor<T>({c}));
                break;
            }
            default:
                break;
        }
    }

    const int64_t E = b.embed_dim();
    const int64_t H = cfg.lstm_hidden;
    for (int layer = 1; layer <= 2; ++layer) {
        const std::string p = "BiLSTM_" + std::to_string(layer);
        for (const char* dir : {"fw", "bw"}) {
            b.params.add(p + "." + dir + ".wx", init::he_uniform<T>({4 * H, E}, E, rng));
            // recurrent weights orthogonal per gate block
            Tensor<T> wh({4 * H, H});
            for (int gate = 0; gate < 4; ++gate) {
                auto q = init::orthogonal_rows<T>(H, H, rng);
                std::copy(q.data(), q.data() + H * H, wh.data() + gate * H * H);
            }
            b.params.add(p + "." + dir + ".wh", std::move(wh));
            // forget-gate bias starts at 1
            Tensor<T> bias({4 * H});
            for (int64_t i = H; i < 2 * H; ++i) bias.data()[i] = T(1);
            b.params.add(p + "." + dir + ".b", std::move(bias));
        }
    }

    if (has_utt_head(variant)) detail::add_head_params(b, "utt", rng);
    if (has_seg_head(variant)) detail::add_head_params(b, "seg", rng);
    return b;
}

template <typename T>
ModelBundle<T> build_model(Variant variant, const ModelConfig& cfg, uint64_t seed) {
    check(!is_warmup(variant), std::string("build_model: variant ") + variant_name(variant) +
                                   " requires a pre-trained checkpoint (use warmup_expand)");
    return build_model_unchecked<T>(variant, cfg, seed);
}

/// Layer table for the realized architecture (symbolic in T and F).
inline std::string describe_model(Variant variant, const ModelConfig& cfg) {
    std::ostringstream os;
    auto row = [&os](const std::string& a, const std::string& b, const std::string& c) {
        os << a;
        for (size_t i = a.size(); i < 14; ++i) os << ' ';
        os << b;
        for (size_t i = b.size(); i < 24; ++i) os << ' ';
        os << c << "\n";
    };
    row("Type", "Filter/Stride/Padding", "Output Size [B, C, T, F]");
    int tdiv = 1, fdiv = 1;
    auto sym = [](const char* base, int div) {
        return div == 1 ? std::string(base) : std::string(base) + " // " + std::to_string(div);
    };
    int ch = 1;
    for (const auto& layer : selcnn_layers()) {
        std::string filt = "-";
        switch (layer.kind) {
            case LayerSpec::Conv: {
                ch = layer.out_ch;
                std::ostringstream f;
                f << layer.k << " x " << layer.k << " / " << layer.stride << " x " << layer.stride << " / "
                  << layer.pad;
                filt = f.str();
                break;
            }
            case LayerSpec::Mfm:
                ch = layer.ch;
                break;
            case LayerSpec::MaxPool:
                tdiv *= 2;
                fdiv *= 2;
                filt = "2 x 2 / 2 x 2 / 0";
                break;
            case LayerSpec::SeBlock:
                if (!cfg.use_se) continue;
                break;
            default:
                break;
        }
        row(layer.name, filt,
            "[B, " + std::to_string(ch) + ", " + sym("T", tdiv) + ", " + sym("F", fdiv) + "]");
    }
    const int E = 2 * cfg.lstm_hidden;
    row("Flatten", "-", "[B, " + sym("T", tdiv) + ", " + std::to_string(E) + "]");
    row("BiLSTM_1", std::to_string(cfg.lstm_hidden) + " per direction",
        "[B, " + sym("T", tdiv) + ", " + std::to_string(E) + "]");
    row("BiLSTM_2", std::to_string(cfg.lstm_hidden) + " per direction",
        "[B, " + sym("T", tdiv) + ", " + std::to_string(E) + "]");
    row("Residual", "Flatten + BiLSTM_2", "[B, " + sym("T", tdiv) + ", " + std::to_string(E) + "]");
    if (has_utt_head(variant)) row("head_utt", "AP + cosine classifier", "[B, 2]");
    if (has_seg_head(variant)) row("head_seg", "cosine classifier", "[B, " + sym("T", tdiv) + ", 2]");
    return os.str();
}

}  // namespace spoofdet
