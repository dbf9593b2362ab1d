#pragma once

#include <cstring>
#include <fstream>

#include "spoofdet/adam.hpp"
#include "spoofdet/model.hpp"

namespace spoofdet {

// Checkpoint container (all fields little-endian):
//   "SPCK" | u32 version | u64 config_hash | u32 epoch
//   | u32 len + variant name | model config (i32 se_reduction, u8 use_se,
//     i32 lstm_hidden, f64 dropout, f64 bn_momentum, f64 bn_eps, i32 feat_dim)
//   | u32 n_params  { u32 len+name, u32 ndim, i64 dims..., f32 data... }
//   | u32 n_buffers { same layout }
//   | u8 has_adam [ f64 lr,beta1,beta2,eps, i64 t, then per param: f32 m..., f32 v... ]
constexpr uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

template <typename V>
void put(std::string& out, const V& v) {
    char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    out.append(b, sizeof(V));
}

inline void put_str(std::string& out, const std::string& s) {
    put(out, (uint32_t)s.size());
    out.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    template <typename V>
    V get() {
        check(pos + sizeof(V) <= buf.size(), "checkpoint: truncated file");
        V v;
        std::memcpy(&v, buf.data() + pos, sizeof(V));
        pos += sizeof(V);
        return v;
    }
    std::string get_str() {
        uint32_t n = get<uint32_t>();
        check(pos + n <= buf.size(), "checkpoint: truncated string");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_tensor_block(std::string& out, const std::string& name, const Tensor<float>& t) {
    put_str(out, name);
    put(out, (uint32_t)t.ndim());
    for (int64_t d : t.shape()) put(out, (int64_t)d);
    const size_t bytes = (size_t)t.numel() * 4;
    const char* p = reinterpret_cast<const char*>(t.data());
    out.append(p, bytes);
}

inline std::pair<std::string, Tensor<float>> get_tensor_block(Reader& r) {
    std::string name = r.get_str();
    uint32_t ndim = r.get<uint32_t>();
    Shape shape(ndim);
    for (auto& d : shape) d = r.get<int64_t>();
    Tensor<float> t(shape);
    const size_t bytes = (size_t)t.numel() * 4;
    check(r.pos + bytes <= r.buf.size(), "checkpoint: truncated tensor " + name);
    std::memcpy(t.data(), r.buf.data() + r.pos, bytes);
    r.pos += bytes;
    return {name, std::move(t)};
}

}  // namespace ckpt_detail

inline void write_checkpoint(const std::string& path, const ModelBundle<float>& bundle,
                             const std::vector<AdamState<float>>* adam, uint32_t epoch,
                             uint64_t config_hash) {
    using namespace ckpt_detail;
    std::string out;
    out.append("SPCK");
    put(out, kCheckpointVersion);
    put(out, config_hash);
    put(out, epoch);
    put_str(out, variant_name(bundle.variant));
    put(out, (int32_t)bundle.cfg.se_reduction);
    put(out, (uint8_t)bundle.cfg.use_se);
    put(out, (int32_t)bundle.cfg.lstm_hidden);
    put(out, bundle.cfg.dropout);
    put(out, bundle.cfg.bn_momentum);
    put(out, bundle.cfg.bn_eps);
    put(out, (int32_t)bundle.cfg.feat_dim);

    put(out, (uint32_t)bundle.params.size());
    for (const auto& [name, t] : bundle.params) put_tensor_block(out, name, t);
    put(out, (uint32_t)bundle.buffers.size());
    for (const auto& [name, t] : bundle.buffers) put_tensor_block(out, name, t);

    put(out, (uint8_t)(adam != nullptr));
    if (adam) {
        check(adam->size() == bundle.params.size(), "write_checkpoint: adam state count mismatch");
        put(out, (double)(*adam)[0].lr);
        put(out, (double)(*adam)[0].beta1);
        put(out, (double)(*adam)[0].beta2);
        put(out, (double)(*adam)[0].eps);
        put(out, (int64_t)(*adam)[0].t);
        for (const auto& s : *adam) {
            out.append(reinterpret_cast<const char*>(s.m.data()), (size_t)s.m.numel() * 4);
            out.append(reinterpret_cast<const char*>(s.v.data()), (size_t)s.v.numel() * 4);
        }
    }
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_checkpoint: cannot open " + path);
    f.write(out.data(), (std::streamsize)out.size());
    check(f.good(), "write_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    ModelBundle<float> bundle;
    std::vector<AdamState<float>> adam;
    bool has_adam = false;
    uint32_t epoch = 0;
    uint64_t config_hash = 0;
};

inline LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check(buf.size() > 8 && buf.compare(0, 4, "SPCK") == 0, "read_checkpoint: " + path + " is not a checkpoint");
    ckpt_detail::Reader r(buf);
    r.pos = 4;
    check(r.get<uint32_t>() == kCheckpointVersion, "read_checkpoint: unsupported version in " + path);

    LoadedCheckpoint out;
    out.config_hash = r.get<uint64_t>();
    out.epoch = r.get<uint32_t>();
    Variant variant = variant_from_string(r.get_str());
    ModelConfig cfg;
    cfg.se_reduction = r.get<int32_t>();
    cfg.use_se = r.get<uint8_t>() != 0;
    cfg.lstm_hidden = r.get<int32_t>();
    cfg.dropout = r.get<double>();
    cfg.bn_momentum = r.get<double>();
    cfg.bn_eps = r.get<double>();
    cfg.feat_dim = r.get<int32_t>();

    out.bundle = build_model_unchecked<float>(variant, cfg, 0);
    uint32_t n_params = r.get<uint32_t>();
    check(n_params == out.bundle.params.size(), "read_checkpoint: parameter count mismatch in " + path);
    for (uint32_t i = 0; i < n_params; ++i) {
        auto [name, t] = ckpt_detail::get_tensor_block(r);
        auto& dst = out.bundle.params.at(name);
        check(dst.shape() == t.shape(), "read_checkpoint: shape mismatch for " + name);
        std::copy(t.data(), t.data() + t.numel(), dst.data());
    }
    uint32_t n_buffers = r.get<uint32_t>();
    check(n_buffers == out.bundle.buffers.size(), "read_checkpoint: buffer count mismatch in " + path);
    for (uint32_t i = 0; i < n_buffers; ++i) {
        auto [name, t] = ckpt_detail::get_tensor_block(r);
        auto& dst = out.bundle.buffers.at(name);
        check(dst.shape() == t.shape(), "read_checkpoint: shape mismatch for " + name);
        std::copy(t.data(), t.data() + t.numel(), dst.data());
    }
    out.has_adam = r.get<uint8_t>() != 0;
    if (out.has_adam) {
        const double lr = r.get<double>(), b1 = r.get<double>(), b2 = r.get<double>(), eps = r.get<double>();
        const int64_t t = r.get<int64_t>();
        for (auto& [name, p] : out.bundle.params) {
            AdamState<float> s = adam_init(p, (float)lr);
            s.beta1 = (float)b1;
            s.beta2 = (float)b2;
            s.eps = (float)eps;
            s.t = t;
            const size_t bytes = (size_t)p.numel() * 4;
            check(r.pos + 2 * bytes <= buf.size(), "read_checkpoint: truncated adam state");
            std::memcpy(s.m.data(), buf.data() + r.pos, bytes);
            r.pos += bytes;
            std::memcpy(s.v.data(), buf.data() + r.pos, bytes);
            r.pos += bytes;
            out.adam.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace spoofdet
