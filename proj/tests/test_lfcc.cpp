#include <catch2/catch_amalgamated.hpp>

#include "spoofdet/lfcc.hpp"

#include <filesystem>
#include <random>

using namespace spoofdet;

namespace {

AudioClip sine(double hz, double seconds, double amp = 0.5, int sr = 16000) {
    AudioClip c;
    c.sample_rate = sr;
    c.samples.resize((size_t)std::llround(seconds * sr));
    for (size_t i = 0; i < c.samples.size(); ++i)
        c.samples[i] = (float)(amp * std::sin(2.0 * M_PI * hz * i / sr));
    return c;
}

}  // namespace

TEST_CASE("framing arithmetic: 1.0 s at 16 kHz gives 99 frames") {
    AudioClip c;
    c.samples.assign(16000, 0.0f);
    auto frames = frame_and_window(c, LfccConfig{});
    REQUIRE(frames.size() == 99);
    for (auto& f : frames) REQUIRE(f.size() == 320);
}

TEST_CASE("constant-zero clip gives all-zero frames") {
    AudioClip c;
    c.samples.assign(4000, 0.0f);
    auto frames = frame_and_window(c, LfccConfig{});
    for (auto& f : frames)
        for (double v : f) REQUIRE(v == 0.0);
}

TEST_CASE("clip shorter than one window is rejected") {
    AudioClip c;
    c.samples.assign(300, 0.1f);
    REQUIRE_THROWS(frame_and_window(c, LfccConfig{}));
}

TEST_CASE("windowed unit impulse at frame center picks up the Hanning peak") {
    AudioClip c;
    c.samples.assign(16000, 0.0f);
    // center of frame 3: start 3*160, center +160
    c.samples[3 * 160 + 160] = 0.25f;
    auto frames = frame_and_window(c, LfccConfig{});
    // periodic Hanning peaks at exactly 1.0 at n = win/2
    REQUIRE(frames[3][160] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("feature dimensionality is exactly 60 for any input") {
    for (double secs : {0.05, 0.1, 0.73, 1.0}) {
        auto fm = lfcc(sine(440.0, secs));
        REQUIRE(fm.dim() == 60);
        REQUIRE(fm.frames() == ((int64_t)(secs * 16000) - 320) / 160 + 1);
    }
}

TEST_CASE("silence maps statics to the DCT of the log floor; deltas are zero") {
    AudioClip c;
    c.samples.assign(8000, 0.0f);
    auto fm = lfcc(c);
    const double c0 = std::log(1e-30) * std::sqrt(20.0);
    for (int64_t t = 0; t < fm.frames(); ++t) {
        REQUIRE(fm.data.data()[t * 60 + 0] == Catch::Approx(c0).epsilon(1e-6));
        for (int k = 1; k < 20; ++k) REQUIRE(std::abs(fm.data.data()[t * 60 + k]) < 1e-9);
        for (int k = 20; k < 60; ++k) REQUIRE(fm.data.data()[t * 60 + k] == 0.0f);
    }
}

TEST_CASE("delta of a time-constant static sequence is zero") {
    std::vector<std::vector<double>> c(7, std::vector<double>{1.0, -2.0, 0.5});
    auto d = dsp::deltas(c);
    for (auto& row : d)
        for (double v : row) REQUIRE(v == 0.0);
}

TEST_CASE("single 1 kHz sine concentrates energy in the nearest filter") {
    LfccConfig cfg;
    auto clip = sine(1000.0, 0.5);
    auto frames = frame_and_window(clip, cfg);
    auto fb = dsp::linear_filterbank(cfg);
    auto p = dsp::power_spectrum(frames[frames.size() / 2], cfg.fft_size);
    int argmax = 0;
    double best = -1.0;
    for (int f = 0; f < cfg.n_filters; ++f) {
        double e = 0.0;
        for (size_t k = 0; k < p.size(); ++k) e += fb[f][k] * p[k];
        if (e > best) {
            best = e;
            argmax = f;
        }
    }
    int nearest = 0;
    double bestdist = 1e18;
    for (int f = 0; f < cfg.n_filters; ++f) {
        double dist = std::abs(dsp::filter_center_hz(cfg, f) - 1000.0);
        if (dist < bestdist) {
            bestdist = dist;
            nearest = f;
        }
    }
    REQUIRE(argmax == nearest);
}

TEST_CASE("fft matches a naive DFT") {
    std::mt19937_64 rng(42);
    std::vector<double> x(512);
    for (auto& v : x) v = double(rng() >> 11) * 0x1.0p-53 - 0.5;
    std::vector<double> re = x, im(512, 0.0);
    dsp::fft_inplace(re, im);
    for (int k = 0; k < 512; k += 37) {
        double sr = 0.0, si = 0.0;
        for (int n = 0; n < 512; ++n) {
            sr += x[n] * std::cos(-2.0 * M_PI * k * n / 512);
            si += x[n] * std::sin(-2.0 * M_PI * k * n / 512);
        }
        REQUIRE(std::abs(re[k] - sr) < 1e-8);
        REQUIRE(std::abs(im[k] - si) < 1e-8);
    }
}

TEST_CASE("time shift by one hop shifts features by one frame, bitwise") {
    auto clip = sine(620.0, 0.8, 0.4);
    // prepend exactly one hop of leading context
    AudioClip shifted;
    shifted.sample_rate = clip.sample_rate;
    shifted.samples.assign(160, 0.05f);
    shifted.samples.insert(shifted.samples.end(), clip.samples.begin(), clip.samples.end());

    auto a = lfcc(clip);
    auto b = lfcc(shifted);
    REQUIRE(b.frames() == a.frames() + 1);
    // interior frames (away from delta edge effects) must be bitwise equal
    for (int64_t t = 2; t + 2 < a.frames(); ++t)
        for (int64_t k = 0; k < 60; ++k)
            REQUIRE(b.data.data()[(t + 1) * 60 + k] == a.data.data()[t * 60 + k]);
}

TEST_CASE("global gain shifts c0 only; deltas are invariant") {
    auto clip = sine(900.0, 0.5, 0.2);
    const double alpha = 3.7;

    LfccConfig cfg;
    // static pipeline with an exact double-precision gain on the frames
    auto run_static = [&](const AudioClip& c, double gain) {
        auto frames = frame_and_window(c, cfg);
        auto fb = dsp::linear_filterbank(cfg);
        std::vector<std::vector<double>> statics(frames.size());
        for (size_t t = 0; t < frames.size(); ++t) {
            for (auto& v : frames[t]) v *= gain;
            auto p = dsp::power_spectrum(frames[t], cfg.fft_size);
            std::vector<double> loge(cfg.n_filters);
            for (int f = 0; f < cfg.n_filters; ++f) {
                double e = 0.0;
                for (size_t k = 0; k < p.size(); ++k) e += fb[f][k] * p[k];
                loge[f] = std::log(std::max(e, cfg.log_floor));
            }
            statics[t] = dsp::dct2_ortho(loge, cfg.n_ceps);
        }
        return statics;
    };
    auto s1 = run_static(clip, 1.0);
    auto s2 = run_static(clip, alpha);
    const double c0_shift = 2.0 * std::log(alpha) * std::sqrt(20.0);
    for (size_t t = 0; t < s1.size(); ++t) {
        REQUIRE(s2[t][0] - s1[t][0] == Catch::Approx(c0_shift).epsilon(1e-9));
        for (int k = 1; k < 20; ++k) REQUIRE(s2[t][k] == Catch::Approx(s1[t][k]).margin(1e-9));
    }
    auto d1 = dsp::deltas(s1), d2 = dsp::deltas(s2);
    for (size_t t = 0; t < d1.size(); ++t)
        for (int k = 0; k < 20; ++k) REQUIRE(d2[t][k] == Catch::Approx(d1[t][k]).margin(1e-9));
}

TEST_CASE("feature matrix file round trip is bitwise") {
    auto fm = lfcc(sine(333.0, 0.4));
    auto path = std::filesystem::temp_directory_path() / "spoofdet_feat_test.bin";
    write_feature_matrix(path.string(), fm);
    auto back = read_feature_matrix(path.string());
    REQUIRE(back.frames() == fm.frames());
    REQUIRE(back.dim() == fm.dim());
    REQUIRE(back.data.vec() == fm.data.vec());
    std::filesystem::remove(path);
}

TEST_CASE("raw float32 files load with the caller's sample rate") {
    auto clip = sine(250.0, 0.1, 0.5);
    auto path = std::filesystem::temp_directory_path() / "spoofdet_raw_test.f32";
    {
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(clip.samples.data()),
                (std::streamsize)(clip.samples.size() * 4));
    }
    auto back = read_raw_f32(path.string(), 16000);
    REQUIRE(back.sample_rate == 16000);
    REQUIRE(back.samples == clip.samples);
    std::filesystem::remove(path);

    {
        std::ofstream f(path, std::ios::binary);
        f.write("abc", 3);  // not a multiple of 4
    }
    REQUIRE_THROWS(read_raw_f32(path.string(), 16000));
    std::filesystem::remove(path);
}

TEST_CASE("wav round trip preserves quantized samples") {
    auto clip = sine(440.0, 0.2, 0.8);
    auto path = std::filesystem::temp_directory_path() / "spoofdet_wav_test.wav";
    write_wav16(path.string(), clip);
    auto back = read_wav16(path.string());
    REQUIRE(back.sample_rate == clip.sample_rate);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        int q = (int)std::lround((double)clip.samples[i] * 32767.0);
        REQUIRE(back.samples[i] == (float)q / 32768.0f);
    }
    // writing the same clip twice produces identical bytes
    auto path2 = std::filesystem::temp_directory_path() / "spoofdet_wav_test2.wav";
    write_wav16(path2.string(), clip);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}
