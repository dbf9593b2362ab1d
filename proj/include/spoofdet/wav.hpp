#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>

#include "spoofdet/tensor.hpp"

namespace spoofdet {

/// Mono waveform with samples in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 16000;
};

namespace wavio {

inline void put_u32(std::string& s, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    s.append(b, 4);
}
inline void put_u16(std::string& s, uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    s.append(b, 2);
}

}  // namespace wavio

/// Writes 16-bit PCM mono. Samples are clamped, then rounded half away from
/// zero so regeneration is byte-exact.
inline void write_wav16(const std::string& path, const AudioClip& clip) {
    check(!clip.samples.empty() && clip.sample_rate > 0, "write_wav16: empty clip");
    std::string out;
    const uint32_t data_bytes = (uint32_t)clip.samples.size() * 2;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    wavio::put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    wavio::put_u32(out, 16);
    wavio::put_u16(out, 1);  // PCM
    wavio::put_u16(out, 1);  // mono
    wavio::put_u32(out, (uint32_t)clip.sample_rate);
    wavio::put_u32(out, (uint32_t)clip.sample_rate * 2);
    wavio::put_u16(out, 2);
    wavio::put_u16(out, 16);
    out += "data";
    wavio::put_u32(out, data_bytes);
    for (float v : clip.samples) {
        float c = std::min(1.0f, std::max(-1.0f, v));
        int q = (int)std::lround((double)c * 32767.0);
        q = std::min(32767, std::max(-32768, q));
        wavio::put_u16(out, (uint16_t)(int16_t)q);
    }
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_wav16: cannot open " + path);
    f.write(out.data(), (std::streamsize)out.size());
    check(f.good(), "write_wav16: write failed for " + path);
}

inline AudioClip read_wav16(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_wav16: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check(buf.size() >= 44 && buf.compare(0, 4, "RIFF") == 0 && buf.compare(8, 4, "WAVE") == 0,
          "read_wav16: " + path + " is not a RIFF/WAVE file");

    auto rd_u32 = [&](size_t o) {
        uint32_t v;
        std::memcpy(&v, buf.data() + o, 4);
        return v;
    };
    auto rd_u16 = [&](size_t o) {
        uint16_t v;
        std::memcpy(&v, buf.data() + o, 2);
        return v;
    };

    AudioClip clip;
    size_t pos = 12;
    bool have_fmt = false, have_data = false;
    while (pos + 8 <= buf.size()) {
        std::string id = buf.substr(pos, 4);
        uint32_t sz = rd_u32(pos + 4);
        if (id == "fmt ") {
            check(sz >= 16, "read_wav16: short fmt chunk");
            check(rd_u16(pos + 8) == 1, "read_wav16: only PCM supported");
            check(rd_u16(pos + 10) == 1, "read_wav16: only mono supported");
            clip.sample_rate = (int)rd_u32(pos + 12);
            check(rd_u16(pos + 22) == 16, "read_wav16: only 16-bit supported");
            have_fmt = true;
        } else if (id == "data") {
            check(have_fmt, "read_wav16: data chunk before fmt");
            check(pos + 8 + sz <= buf.size(), "read_wav16: truncated data chunk");
            clip.samples.resize(sz / 2);
            for (size_t i = 0; i < clip.samples.size(); ++i)
                clip.samples[i] = (float)(int16_t)rd_u16(pos + 8 + 2 * i) / 32768.0f;
            have_data = true;
        }
        pos += 8 + sz + (sz & 1);
    }
    check(have_data, "read_wav16: no data chunk in " + path);
    check(!clip.samples.empty(), "read_wav16: empty audio in " + path);
    return clip;
}

/// Raw little-endian float32 samples (no header); sample rate supplied by
/// the caller.
inline AudioClip read_raw_f32(const std::string& path, int sample_rate) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_raw_f32: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check(buf.size() % 4 == 0, "read_raw_f32: size not a multiple of 4 in " + path);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(buf.size() / 4);
    std::memcpy(clip.samples.data(), buf.data(), buf.size());
    check(!clip.samples.empty(), "read_raw_f32: empty file " + path);
    return clip;
}

}  // namespace spoofdet
