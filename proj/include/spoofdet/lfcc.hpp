#pragma once

#include <fstream>

#include "spoofdet/wav.hpp"

namespace spoofdet {

// Linear-frequency cepstral front-end: 20 ms periodic-Hanning frames hopped
// by 10 ms, 512-point FFT power spectrum, 20 linearly spaced triangular
// filters up to Nyquist, log (floored), orthonormal DCT-II, and first and
// second deltas over a +/-1 window with replicated edges. No pre-emphasis,
// no VAD, no normalization, no padding of the tail.
struct LfccConfig {
    int sample_rate = 16000;
    double window_s = 0.020;
    double hop_s = 0.010;
    int fft_size = 512;
    int n_filters = 20;
    int n_ceps = 20;
    double log_floor = 1e-30;

    int win_samples() const { return (int)std::lround(window_s * sample_rate); }
    int hop_samples() const { return (int)std::lround(hop_s * sample_rate); }
    int feat_dim() const { return 3 * n_ceps; }
};

struct FeatureMatrix {
    Tensor<float> data;  // [N, 3*n_ceps]
    double hop_s = 0.010;
    double window_s = 0.020;

    int64_t frames() const { return data.dim(0); }
    int64_t dim() const { return data.dim(1); }
};

namespace dsp {

/// In-place iterative radix-2 FFT (decimation in time).
inline void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
    const size_t n = re.size();
    check((n & (n - 1)) == 0 && n >= 2, "fft: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / (double)len;
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const double ur = re[i + k], ui = im[i + k];
                const double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
                const double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

inline std::vector<double> power_spectrum(const std::vector<double>& frame, int fft_size) {
    check((int)frame.size() <= fft_size, "power_spectrum: frame longer than FFT size");
    std::vector<double> re(fft_size, 0.0), im(fft_size, 0.0);
    std::copy(frame.begin(), frame.end(), re.begin());
    fft_inplace(re, im);
    std::vector<double> p(fft_size / 2 + 1);
    for (int k = 0; k <= fft_size / 2; ++k) p[k] = re[k] * re[k] + im[k] * im[k];
    return p;
}

/// Triangular filters with linearly spaced edges over [0, Nyquist].
/// Returns [n_filters][n_bins] weights.
inline std::vector<std::vector<double>> linear_filterbank(const LfccConfig& cfg) {
    const int bins = cfg.fft_size / 2 + 1;
    const double nyquist = cfg.sample_rate / 2.0;
    std::vector<double> edges(cfg.n_filters + 2);
    for (int i = 0; i < (int)edges.size(); ++i) edges[i] = nyquist * i / (cfg.n_filters + 1);
    std::vector<std::vector<double>> fb(cfg.n_filters, std::vector<double>(bins, 0.0));
    for (int f = 0; f < cfg.n_filters; ++f) {
        const double lo = edges[f], c = edges[f + 1], hi = edges[f + 2];
        for (int k = 0; k < bins; ++k) {
            const double hz = (double)k * cfg.sample_rate / cfg.fft_size;
            if (hz > lo && hz < c)
                fb[f][k] = (hz - lo) / (c - lo);
            else if (hz >= c && hz < hi)
                fb[f][k] = (hi - hz) / (hi - c);
        }
    }
    return fb;
}

inline double filter_center_hz(const LfccConfig& cfg, int f) {
    return (cfg.sample_rate / 2.0) * (f + 1) / (cfg.n_filters + 1);
}

/// Orthonormal DCT-II of x (length N), keeping `keep` coefficients.
inline std::vector<double> dct2_ortho(const std::vector<double>& x, int keep) {
    const int n = (int)x.size();
    std::vector<double> out(keep, 0.0);
    for (int j = 0; j < keep; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += x[i] * std::cos(M_PI * (i + 0.5) * j / n);
        out[j] = acc * (j == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
    }
    return out;
}

/// Delta over a +/-1 window with replicate-padded edges:
/// d[t] = (c[t+1] - c[t-1]) / 2.
inline std::vector<std::vector<double>> deltas(const std::vector<std::vector<double>>& c) {
    const int n = (int)c.size();
    std::vector<std::vector<double>> d(n);
    for (int t = 0; t < n; ++t) {
        const auto& next = c[std::min(t + 1, n - 1)];
        const auto& prev = c[std::max(t - 1, 0)];
        d[t].resize(c[t].size());
        for (size_t k = 0; k < c[t].size(); ++k) d[t][k] = (next[k] - prev[k]) / 2.0;
    }
    return d;
}

}  // namespace dsp

/// Splits the clip into windowed frames ([N][win_samples], Hanning applied).
/// The tail that does not fill a window is dropped.
inline std::vector<std::vector<double>> frame_and_window(const AudioClip& clip, const LfccConfig& cfg) {
    const int win = cfg.win_samples(), hop = cfg.hop_samples();
    check((int)clip.samples.size() >= win,
          "frame_and_window: clip of " + std::to_string(clip.samples.size()) + " samples is shorter than one " +
              std::to_string(win) + "-sample window");
    check(clip.sample_rate == cfg.sample_rate, "frame_and_window: sample rate mismatch");
    const int64_t n_frames = ((int64_t)clip.samples.size() - win) / hop + 1;
    // periodic Hanning
    std::vector<double> window(win);
    for (int i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);
    std::vector<std::vector<double>> frames((size_t)n_frames, std::vector<double>(win));
    for (int64_t t = 0; t < n_frames; ++t)
        for (int i = 0; i < win; ++i) frames[t][i] = (double)clip.samples[t * hop + i] * window[i];
    return frames;
}

/// Full front-end: frames -> 60-dim LFCC rows (static | delta | delta-delta).
inline FeatureMatrix lfcc(const AudioClip& clip, const LfccConfig& cfg = LfccConfig{}) {
    auto frames = frame_and_window(clip, cfg);
    const auto fb = dsp::linear_filterbank(cfg);
    const int64_t n = (int64_t)frames.size();

    std::vector<std::vector<double>> statics(n);
    for (int64_t t = 0; t < n; ++t) {
        auto p = dsp::power_spectrum(frames[t], cfg.fft_size);
        std::vector<double> loge(cfg.n_filters);
        for (int f = 0; f < cfg.n_filters; ++f) {
            double e = 0.0;
            for (size_t k = 0; k < p.size(); ++k) e += fb[f][k] * p[k];
            loge[f] = std::log(std::max(e, cfg.log_floor));
        }
        statics[t] = dsp::dct2_ortho(loge, cfg.n_ceps);
    }
    auto d1 = dsp::deltas(statics);
    auto d2 = dsp::deltas(d1);

    FeatureMatrix fm;
    fm.hop_s = cfg.hop_s;
    fm.window_s = cfg.window_s;
    fm.data = Tensor<float>({n, (int64_t)cfg.feat_dim()});
    float* out = fm.data.data();
    for (int64_t t = 0; t < n; ++t) {
        for (int k = 0; k < cfg.n_ceps; ++k) {
            out[t * cfg.feat_dim() + k] = (float)statics[t][k];
            out[t * cfg.feat_dim() + cfg.n_ceps + k] = (float)d1[t][k];
            out[t * cfg.feat_dim() + 2 * cfg.n_ceps + k] = (float)d2[t][k];
        }
    }
    check_finite(fm.data, "lfcc");
    return fm;
}

// Feature file: header of two little-endian uint32 (N, dim) followed by
// N*dim row-major little-endian float32.
inline void write_feature_matrix(const std::string& path, const FeatureMatrix& fm) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_feature_matrix: cannot open " + path);
    uint32_t n = (uint32_t)fm.frames(), d = (uint32_t)fm.dim();
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&d), 4);
    f.write(reinterpret_cast<const char*>(fm.data.data()), (std::streamsize)(4 * n * d));
    check(f.good(), "write_feature_matrix: write failed for " + path);
}

inline FeatureMatrix read_feature_matrix(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_feature_matrix: cannot open " + path);
    uint32_t n = 0, d = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&d), 4);
    check(f.good() && n > 0 && d > 0, "read_feature_matrix: bad header in " + path);
    FeatureMatrix fm;
    fm.data = Tensor<float>({(int64_t)n, (int64_t)d});
    f.read(reinterpret_cast<char*>(fm.data.data()), (std::streamsize)(4 * (int64_t)n * d));
    check(f.good(), "read_feature_matrix: truncated body in " + path);
    return fm;
}

}  // namespace spoofdet
