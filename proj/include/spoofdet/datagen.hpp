#pragma once

#include <filesystem>
#include <fstream>

#include "spoofdet/lfcc.hpp"
#include "spoofdet/model.hpp"

namespace spoofdet {

// One label unit is 10 ms (160 samples at 16 kHz); one embedding frame is
// 160 ms (16 units). Labels use the same 1=bona/2=spoof convention as the
// losses.
constexpr int kUnitMs = 10;
constexpr int kUnitsPerFrame = 16;

struct ProtocolEntry {
    std::string trial_id;
    int utt_label = kBonaFide;
    std::string split;  // train | dev | eval
};

struct SegmentLabelTrack {
    std::vector<int> unit_labels;  // per 10 ms
    double spoof_ratio = 0.0;

    static double ratio_of(const std::vector<int>& units) {
        int64_t spoofed = 0;
        for (int u : units) spoofed += u == kSpoof;
        return units.empty() ? 0.0 : (double)spoofed / (double)units.size();
    }
};

inline int utt_label_from_units(const std::vector<int>& units) {
    for (int u : units)
        if (u == kSpoof) return kSpoof;
    return kBonaFide;
}

/// Maps 10 ms unit labels to embedding-frame labels. Frame m covers units
/// [16m, 16m+16); it is spoof when at least half of its units are spoofed
/// (ties go to spoof).
inline std::vector<int> frame_labels_for_m(const std::vector<int>& units, int64_t m_frames) {
    check(m_frames >= 1, "frame_labels: empty coverage (no embedding frames)");
    check((int64_t)units.size() >= m_frames * kUnitsPerFrame,
          "frame_labels: " + std::to_string(units.size()) + " units cannot cover " +
              std::to_string(m_frames) + " embedding frames");
    std::vector<int> out(m_frames);
    for (int64_t m = 0; m < m_frames; ++m) {
        int spoofed = 0;
        for (int64_t u = m * kUnitsPerFrame; u < (m + 1) * kUnitsPerFrame; ++u)
            spoofed += units[u] == kSpoof;
        out[m] = spoofed * 2 >= kUnitsPerFrame ? kSpoof : kBonaFide;
    }
    return out;
}

inline std::vector<int> align_labels_to_frames(const std::vector<int>& units, int64_t n_feat_frames) {
    return frame_labels_for_m(units, embedding_frames(n_feat_frames));
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Bona fide trials are harmonic tones (a small set of "speakers" with fixed
/// f0), spoofed trials splice band-passed noise bursts into such a carrier
/// at 10 ms boundaries with 2 ms crossfades. Both families share loudness.
struct SynthSpec {
    struct SplitCounts {
        int bona = 0, spoof = 0;
    };
    SplitCounts train{200, 200}, dev{50, 50}, eval{50, 50};
    double min_duration_s = 0.60, max_duration_s = 1.00;
    double min_spoof_ratio = 0.02, max_spoof_ratio = 0.98;
    int sample_rate = 16000;
    double rms = 0.08;
    int harmonics = 8;
    uint64_t seed = 1;
};

namespace synth {

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline void rms_normalize(std::vector<double>& x, double target) {
    double acc = 0;
    for (double v : x) acc += v * v;
    const double rms = std::sqrt(acc / (double)x.size());
    if (rms > 1e-12)
        for (double& v : x) v *= target / rms;
}

/// Harmonic-tone family: per-speaker f0 with vibrato, decaying harmonic
/// amplitudes, a slow amplitude envelope, and a low noise floor.
inline std::vector<double> bona_signal(int64_t n_samples, int sr, int harmonics, std::mt19937_64& rng) {
    static const double f0_table[] = {118.0, 141.0, 167.0, 196.0, 228.0, 262.0};
    const double f0 = f0_table[rng() % 6] * (0.97 + 0.06 * init::uniform01(rng));
    std::vector<double> amps(harmonics), phases(harmonics);
    for (int h = 0; h < harmonics; ++h) {
        amps[h] = std::pow(h + 1.0, -0.8) * (0.8 + 0.4 * init::uniform01(rng));
        phases[h] = 2.0 * M_PI * init::uniform01(rng);
    }
    const double vib_rate = 3.0 + 3.0 * init::uniform01(rng);
    const double vib_phase = 2.0 * M_PI * init::uniform01(rng);
    const double env_rate = 1.5 + 2.0 * init::uniform01(rng);
    const double env_phase = 2.0 * M_PI * init::uniform01(rng);
    std::vector<double> x(n_samples);
    double phase0 = 2.0 * M_PI * init::uniform01(rng);
    for (int64_t i = 0; i < n_samples; ++i) {
        const double t = (double)i / sr;
        const double f = f0 * (1.0 + 0.012 * std::sin(2.0 * M_PI * vib_rate * t + vib_phase));
        phase0 += 2.0 * M_PI * f / sr;
        double v = 0;
        for (int h = 0; h < harmonics; ++h) v += amps[h] * std::sin((h + 1) * phase0 + phases[h]);
        const double env = 1.0 + 0.15 * std::sin(2.0 * M_PI * env_rate * t + env_phase);
        x[i] = v * env + 0.02 * init::gaussian(rng);
    }
    return x;
}

/// Noise-burst family: white noise through a band-pass biquad.
inline std::vector<double> spoof_signal(int64_t n_samples, int sr, std::mt19937_64& rng) {
    const double fc = 500.0 + 3000.0 * init::uniform01(rng);
    const double q = 1.0 + 2.0 * init::uniform01(rng);
    const double w = 2.0 * M_PI * fc / sr;
    const double alpha = std::sin(w) / (2.0 * q);
    const double b0 = alpha, b2 = -alpha;
    const double a0 = 1.0 + alpha, a1 = -2.0 * std::cos(w), a2 = 1.0 - alpha;
    std::vector<double> x(n_samples);
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (int64_t i = 0; i < n_samples; ++i) {
        const double in = init::gaussian(rng);
        const double out = (b0 * in + b2 * x2 - a1 * y1 - a2 * y2) / a0;
        x2 = x1;
        x1 = in;
        y2 = y1;
        y1 = out;
        x[i] = out;
    }
    return x;
}

}  // namespace synth

struct GeneratedTrial {
    ProtocolEntry entry;
    SegmentLabelTrack track;
    AudioClip clip;
};

/// Deterministically generates one trial. For spoofed trials,
/// requested_ratio in (0,1) fixes the fraction of spoofed units (rounded to
/// whole units, clamped to [1, units-1]).
inline GeneratedTrial generate_trial(const SynthSpec& spec, const std::string& split, int64_t index,
                                     bool spoofed, double requested_ratio) {
    const int sr = spec.sample_rate;
    const int64_t unit_samples = sr / 100;  // 10 ms
    std::mt19937_64 rng(synth::mix_seed(spec.seed, std::hash<std::string>{}(split), (uint64_t)index));

    const int64_t min_units = (int64_t)std::llround(spec.min_duration_s * 100);
    const int64_t max_units = (int64_t)std::llround(spec.max_duration_s * 100);
    const int64_t units = min_units + (int64_t)(rng() % (uint64_t)(max_units - min_units + 1));
    const int64_t n = units * unit_samples;

    GeneratedTrial out;
    out.entry.trial_id = (spoofed ? "spoof_" : "bona_") + split + "_" + std::to_string(index);
    out.entry.split = split;
    out.track.unit_labels.assign(units, kBonaFide);

    auto carrier = synth::bona_signal(n, sr, spec.harmonics, rng);
    synth::rms_normalize(carrier, spec.rms);

    if (spoofed) {
        check(requested_ratio > 0.0 && requested_ratio < 1.0,
              "generate_trial: spoofed trial needs a spoof ratio strictly inside (0,1), got " +
                  std::to_string(requested_ratio));
        int64_t n_spoof = (int64_t)std::llround(requested_ratio * (double)units);
        n_spoof = std::max<int64_t>(1, std::min(units - 1, n_spoof));

        // spans: split the spoofed units into k random parts, the bona
        // remainder into k+1 gaps, and interleave
        const int64_t k = 1 + (int64_t)(rng() % (uint64_t)std::min<int64_t>(3, n_spoof));
        std::vector<int64_t> span_len(k, 1), gap_len(k + 1, 0);
        for (int64_t extra = n_spoof - k; extra > 0; --extra) ++span_len[rng() % k];
        for (int64_t extra = units - n_spoof; extra > 0; --extra) ++gap_len[rng() % (k + 1)];

        const int64_t fade = sr / 500;  // 2 ms
        int64_t unit_pos = 0;
        for (int64_t s = 0; s < k; ++s) {
            unit_pos += gap_len[s];
            const int64_t u0 = unit_pos, u1 = unit_pos + span_len[s];
            unit_pos = u1;
            for (int64_t u = u0; u < u1; ++u) out.track.unit_labels[u] = kSpoof;

            const int64_t s0 = u0 * unit_samples, s1 = u1 * unit_samples;
            auto burst = synth::spoof_signal(s1 - s0, sr, rng);
            synth::rms_normalize(burst, spec.rms);
            for (int64_t i = s0; i < s1; ++i) {
                double mixw = 1.0;
                if (i - s0 < fade) mixw = 0.5 - 0.5 * std::cos(M_PI * (i - s0 + 1) / fade);
                if (s1 - 1 - i < fade) mixw = std::min(mixw, 0.5 - 0.5 * std::cos(M_PI * (s1 - i) / fade));
                carrier[i] = mixw * burst[i - s0] + (1.0 - mixw) * carrier[i];
            }
        }
        out.entry.utt_label = kSpoof;
    }
    out.track.spoof_ratio = SegmentLabelTrack::ratio_of(out.track.unit_labels);
    check(out.entry.utt_label == utt_label_from_units(out.track.unit_labels),
          "generate_trial: utterance label does not match unit labels");

    // keep headroom for the 16-bit writer
    double peak = 0;
    for (double v : carrier) peak = std::max(peak, std::abs(v));
    const double gain = peak > 0.95 ? 0.95 / peak : 1.0;
    out.clip.sample_rate = sr;
    out.clip.samples.resize(n);
    for (int64_t i = 0; i < n; ++i) out.clip.samples[i] = (float)(carrier[i] * gain);
    return out;
}

// ---------------------------------------------------------------------------
// Protocol and label file formats
// ---------------------------------------------------------------------------

inline const char* label_name(int label) { return label == kBonaFide ? "bonafide" : "spoof"; }
inline int label_from_string(const std::string& s, const std::string& where) {
    if (s == "bonafide") return kBonaFide;
    if (s == "spoof") return kSpoof;
    throw std::runtime_error(where + ": unknown label '" + s + "'");
}

inline void write_protocol(const std::string& path, const std::vector<ProtocolEntry>& entries) {
    std::ofstream f(path);
    check(f.good(), "write_protocol: cannot open " + path);
    for (const auto& e : entries) f << e.trial_id << ' ' << label_name(e.utt_label) << ' ' << e.split << '\n';
    check(f.good(), "write_protocol: write failed for " + path);
}

inline std::vector<ProtocolEntry> read_protocol(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "read_protocol: cannot open " + path);
    std::vector<ProtocolEntry> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        ProtocolEntry e;
        std::string label;
        if (!(is >> e.trial_id >> label >> e.split))
            throw std::runtime_error("read_protocol: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        std::string extra;
        if (is >> extra)
            throw std::runtime_error("read_protocol: trailing fields on line " + std::to_string(lineno) +
                                     " in " + path);
        e.utt_label = label_from_string(label, "read_protocol line " + std::to_string(lineno));
        out.push_back(std::move(e));
    }
    return out;
}

/// Segment labels as run-length spans: `trial_id start_ms-end_ms-label ...`,
/// spans contiguous from 0 with 10 ms-aligned boundaries.
inline void write_segment_labels(const std::string& path,
                                 const std::vector<std::pair<std::string, SegmentLabelTrack>>& tracks) {
    std::ofstream f(path);
    check(f.good(), "write_segment_labels: cannot open " + path);
    for (const auto& [id, track] : tracks) {
        f << id;
        const auto& u = track.unit_labels;
        for (size_t i = 0; i < u.size();) {
            size_t j = i;
            while (j < u.size() && u[j] == u[i]) ++j;
            f << ' ' << i * kUnitMs << '-' << j * kUnitMs << '-' << label_name(u[i]);
            i = j;
        }
        f << '\n';
    }
    check(f.good(), "write_segment_labels: write failed for " + path);
}

inline std::vector<std::pair<std::string, SegmentLabelTrack>> read_segment_labels(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "read_segment_labels: cannot open " + path);
    std::vector<std::pair<std::string, SegmentLabelTrack>> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = "read_segment_labels: line " + std::to_string(lineno) + " in " + path;
        std::istringstream is(line);
        std::string id, span;
        if (!(is >> id)) throw std::runtime_error(where + ": missing trial id");
        SegmentLabelTrack track;
        int64_t cursor_ms = 0;
        while (is >> span) {
            const size_t d1 = span.find('-');
            const size_t d2 = span.find('-', d1 + 1);
            if (d1 == std::string::npos || d2 == std::string::npos)
                throw std::runtime_error(where + ": malformed span '" + span + "'");
            int64_t start = 0, end = 0;
            try {
                start = std::stoll(span.substr(0, d1));
                end = std::stoll(span.substr(d1 + 1, d2 - d1 - 1));
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": malformed span '" + span + "'");
            }
            const int label = label_from_string(span.substr(d2 + 1), where);
            if (start != cursor_ms || end <= start || start % kUnitMs || end % kUnitMs)
                throw std::runtime_error(where + ": spans must tile contiguously on the 10 ms grid");
            cursor_ms = end;
            for (int64_t u = start / kUnitMs; u < end / kUnitMs; ++u) track.unit_labels.push_back(label);
        }
        if (track.unit_labels.empty()) throw std::runtime_error(where + ": no spans");
        track.spoof_ratio = SegmentLabelTrack::ratio_of(track.unit_labels);
        out.emplace_back(id, std::move(track));
    }
    return out;
}

/// Flags trials whose protocol label disagrees with OR over unit labels.
inline std::vector<std::string> consistency_errors(
    const std::vector<ProtocolEntry>& entries,
    const std::vector<std::pair<std::string, SegmentLabelTrack>>& tracks) {
    std::map<std::string, const SegmentLabelTrack*> by_id;
    for (const auto& [id, track] : tracks) by_id[id] = &track;
    std::vector<std::string> bad;
    for (const auto& e : entries) {
        auto it = by_id.find(e.trial_id);
        if (it == by_id.end()) {
            bad.push_back(e.trial_id + ": no segment label track");
            continue;
        }
        if (utt_label_from_units(it->second->unit_labels) != e.utt_label)
            bad.push_back(e.trial_id + ": utterance label does not equal OR over unit labels");
    }
    return bad;
}

/// Generates the corpus under out_dir: wav/<trial>.wav plus protocol.txt and
/// segment_labels.txt. Spoof ratios are stratified across each split so the
/// configured range (extremes included) is always covered.
inline void generate_corpus(const SynthSpec& spec, const std::string& out_dir) {
    check(spec.min_spoof_ratio > 0.0 && spec.max_spoof_ratio < 1.0 &&
              spec.min_spoof_ratio <= spec.max_spoof_ratio,
          "generate_corpus: spoof-ratio range must lie strictly inside (0,1)");
    check(spec.min_duration_s >= 0.2 && spec.max_duration_s >= spec.min_duration_s,
          "generate_corpus: bad duration range");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "wav");

    std::vector<ProtocolEntry> entries;
    std::vector<std::pair<std::string, SegmentLabelTrack>> tracks;
    const std::pair<std::string, SynthSpec::SplitCounts> splits[] = {
        {"train", spec.train}, {"dev", spec.dev}, {"eval", spec.eval}};
    for (const auto& [split, counts] : splits) {
        for (int i = 0; i < counts.bona; ++i) {
            auto t = generate_trial(spec, split, i, false, 0.0);
            write_wav16((fs::path(out_dir) / "wav" / (t.entry.trial_id + ".wav")).string(), t.clip);
            entries.push_back(t.entry);
            tracks.emplace_back(t.entry.trial_id, t.track);
        }
        for (int i = 0; i < counts.spoof; ++i) {
            const double ratio = spec.min_spoof_ratio + (spec.max_spoof_ratio - spec.min_spoof_ratio) *
                                                            ((double)i + 0.5) / (double)counts.spoof;
            auto t = generate_trial(spec, split, counts.bona + i, true, ratio);
            write_wav16((fs::path(out_dir) / "wav" / (t.entry.trial_id + ".wav")).string(), t.clip);
            entries.push_back(t.entry);
            tracks.emplace_back(t.entry.trial_id, t.track);
        }
    }
    write_protocol((fs::path(out_dir) / "protocol.txt").string(), entries);
    write_segment_labels((fs::path(out_dir) / "segment_labels.txt").string(), tracks);
    auto bad = consistency_errors(entries, tracks);
    check(bad.empty(), "generate_corpus: inconsistent output: " + (bad.empty() ? "" : bad[0]));
}

/// Minimal format validator for ASVspoof 2019 LA protocol files (five
/// whitespace fields, bonafide/spoof key). Audio is never loaded.
struct Asvspoof2019Counts {
    int64_t bona = 0, spoof = 0;
};
inline Asvspoof2019Counts validate_asvspoof2019_protocol(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "validate_asvspoof2019_protocol: cannot open " + path);
    Asvspoof2019Counts counts;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string spk, trial, dash, attack, key, extra;
        if (!(is >> spk >> trial >> dash >> attack >> key) || (is >> extra))
            throw std::runtime_error("validate_asvspoof2019_protocol: malformed line " +
                                     std::to_string(lineno) + " in " + path);
        if (key == "bonafide")
            ++counts.bona;
        else if (key == "spoof")
            ++counts.spoof;
        else
            throw std::runtime_error("validate_asvspoof2019_protocol: bad key on line " +
                                     std::to_string(lineno) + " in " + path);
    }
    return counts;
}

}  // namespace spoofdet
