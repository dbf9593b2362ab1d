#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "spoofdet/datagen.hpp"

using namespace spoofdet;
namespace fs = std::filesystem;

TEST_CASE("requested ratio 0.25 on a 2.0 s trial spoofs exactly 50 of 200 units") {
    SynthSpec spec;
    spec.min_duration_s = spec.max_duration_s = 2.0;
    auto t = generate_trial(spec, "train", 0, true, 0.25);
    REQUIRE(t.track.unit_labels.size() == 200);
    int64_t spoofed = 0;
    for (int u : t.track.unit_labels) spoofed += u == kSpoof;
    REQUIRE(spoofed == 50);
    REQUIRE(t.track.spoof_ratio == 0.25);
    REQUIRE(t.entry.utt_label == kSpoof);
}

TEST_CASE("an all-bona trial has bona fide utterance label and all-bona units") {
    SynthSpec spec;
    auto t = generate_trial(spec, "dev", 3, false, 0.0);
    REQUIRE(t.entry.utt_label == kBonaFide);
    for (int u : t.track.unit_labels) REQUIRE(u == kBonaFide);
    REQUIRE(t.track.spoof_ratio == 0.0);
}

TEST_CASE("regeneration with the same seed is bitwise identical") {
    SynthSpec spec;
    auto a = generate_trial(spec, "train", 7, true, 0.4);
    auto b = generate_trial(spec, "train", 7, true, 0.4);
    REQUIRE(a.clip.samples == b.clip.samples);
    REQUIRE(a.track.unit_labels == b.track.unit_labels);

    SynthSpec other = spec;
    other.seed = 2;
    auto c = generate_trial(other, "train", 7, true, 0.4);
    REQUIRE(a.clip.samples != c.clip.samples);
}

TEST_CASE("a spoof trial with ratio 0 is an error") {
    SynthSpec spec;
    REQUIRE_THROWS(generate_trial(spec, "train", 0, true, 0.0));
    SynthSpec bad;
    bad.min_spoof_ratio = 0.0;
    REQUIRE_THROWS(generate_corpus(bad, (fs::temp_directory_path() / "never_written").string()));
}

TEST_CASE("frame label rule: 9/16 spoof, 8/16 spoof (tie), 7/16 bona") {
    auto units_with = [](int spoofed) {
        std::vector<int> u(16, kBonaFide);
        for (int i = 0; i < spoofed; ++i) u[i] = kSpoof;
        return u;
    };
    REQUIRE(frame_labels_for_m(units_with(9), 1) == std::vector<int>{kSpoof});
    REQUIRE(frame_labels_for_m(units_with(8), 1) == std::vector<int>{kSpoof});
    REQUIRE(frame_labels_for_m(units_with(7), 1) == std::vector<int>{kBonaFide});
}

TEST_CASE("alignment is total and matches the brute-force overlap oracle on 100 tracks") {
    std::mt19937_64 rng(77);
    for (int tc = 0; tc < 100; ++tc) {
        const int64_t units = 48 + (int64_t)(rng() % 150);
        std::vector<int> u(units);
        std::vector<oracles::LabeledSpan> spans;
        int64_t pos = 0;
        while (pos < units) {
            int64_t len = 1 + (int64_t)(rng() % 25);
            len = std::min(len, units - pos);
            const bool spoof = rng() % 2 == 0;
            for (int64_t i = pos; i < pos + len; ++i) u[i] = spoof ? kSpoof : kBonaFide;
            spans.push_back({pos * kUnitMs, (pos + len) * kUnitMs, spoof});
            pos += len;
        }
        // N consistent with the audio: units of 10 ms, frames of 10 ms hop
        const int64_t n_feat = units - 1;
        if (embedding_frames(n_feat) < 1) continue;
        auto frames = align_labels_to_frames(u, n_feat);
        REQUIRE((int64_t)frames.size() == embedding_frames(n_feat));
        for (int64_t m = 0; m < (int64_t)frames.size(); ++m) {
            const bool oracle_spoof = oracles::frame_is_spoof_by_overlap(spans, m);
            REQUIRE((frames[m] == kSpoof) == oracle_spoof);
        }
        // idempotent
        REQUIRE(align_labels_to_frames(u, n_feat) == frames);
    }
}

TEST_CASE("alignment demands full unit coverage") {
    std::vector<int> u(20, kBonaFide);
    REQUIRE_THROWS(frame_labels_for_m(u, 2));  // needs 32 units
    REQUIRE_THROWS(frame_labels_for_m(u, 0));
}

TEST_CASE("generated corpus: protocols, labels, coverage and round trips") {
    SynthSpec spec;
    spec.train = {8, 20};
    spec.dev = {4, 6};
    spec.eval = {4, 6};
    spec.min_duration_s = 0.30;
    spec.max_duration_s = 0.55;
    auto dir = fs::temp_directory_path() / "spoofdet_datagen_test";
    fs::remove_all(dir);
    generate_corpus(spec, dir.string());

    auto protocol = read_protocol((dir / "protocol.txt").string());
    auto tracks = read_segment_labels((dir / "segment_labels.txt").string());
    REQUIRE(protocol.size() == 48);
    REQUIRE(tracks.size() == 48);

    std::map<std::string, SegmentLabelTrack> by_id(tracks.begin(), tracks.end());
    double min_ratio = 1.0, max_ratio = 0.0;
    for (const auto& e : protocol) {
        const auto& track = by_id.at(e.trial_id);
        // utterance label is OR over unit labels, for every generated trial
        REQUIRE(utt_label_from_units(track.unit_labels) == e.utt_label);
        if (e.utt_label == kSpoof) {
            min_ratio = std::min(min_ratio, track.spoof_ratio);
            max_ratio = std::max(max_ratio, track.spoof_ratio);
        }
        auto clip = read_wav16((dir / "wav" / (e.trial_id + ".wav")).string());
        REQUIRE(clip.samples.size() == track.unit_labels.size() * 160);
    }
    // defaults ask for coverage below 5% and above 95%; the stratified grid
    // keeps that true even for this small corpus
    REQUIRE(min_ratio < 0.05);
    REQUIRE(max_ratio > 0.95);

    REQUIRE(consistency_errors(protocol, tracks).empty());

    // write -> read -> write round trip is byte-stable
    write_protocol((dir / "protocol2.txt").string(), protocol);
    write_segment_labels((dir / "segment_labels2.txt").string(), tracks);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    REQUIRE(slurp(dir / "protocol.txt") == slurp(dir / "protocol2.txt"));
    REQUIRE(slurp(dir / "segment_labels.txt") == slurp(dir / "segment_labels2.txt"));

    // corpus regeneration is byte-identical
    auto dir2 = fs::temp_directory_path() / "spoofdet_datagen_test_b";
    fs::remove_all(dir2);
    generate_corpus(spec, dir2.string());
    REQUIRE(slurp(dir / "protocol.txt") == slurp(dir2 / "protocol.txt"));
    REQUIRE(slurp(dir / "segment_labels.txt") == slurp(dir2 / "segment_labels.txt"));
    REQUIRE(slurp(dir / "wav" / (protocol[9].trial_id + ".wav")) ==
            slurp(dir2 / "wav" / (protocol[9].trial_id + ".wav")));

    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("spoof ratio recomputed on read matches the generator's value") {
    SynthSpec spec;
    auto t = generate_trial(spec, "train", 11, true, 0.37);
    auto dir = fs::temp_directory_path() / "spoofdet_ratio_test";
    fs::create_directories(dir);
    write_segment_labels((dir / "labels.txt").string(), {{t.entry.trial_id, t.track}});
    auto back = read_segment_labels((dir / "labels.txt").string());
    REQUIRE(back.size() == 1);
    REQUIRE(std::abs(back[0].second.spoof_ratio - t.track.spoof_ratio) < 1e-9);
    REQUIRE(back[0].second.unit_labels == t.track.unit_labels);
    fs::remove_all(dir);
}

TEST_CASE("malformed files carry line numbers; consistency check flags bad labels") {
    auto dir = fs::temp_directory_path() / "spoofdet_badfiles_test";
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "bad_protocol.txt");
        f << "t0 bonafide train\nt1 wat train\n";
    }
    try {
        read_protocol((dir / "bad_protocol.txt").string());
        FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
    }
    {
        std::ofstream f(dir / "bad_labels.txt");
        f << "t0 0-200-bonafide\nt1 0-100-bonafide 150-200-spoof\n";
    }
    try {
        read_segment_labels((dir / "bad_labels.txt").string());
        FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
    }

    // protocol says spoof but all units are bona
    std::vector<ProtocolEntry> protocol{{"t0", kSpoof, "train"}};
    SegmentLabelTrack track;
    track.unit_labels.assign(30, kBonaFide);
    auto bad = consistency_errors(protocol, {{"t0", track}});
    REQUIRE(bad.size() == 1);
    REQUIRE(bad[0].find("t0") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("asvspoof 2019 protocol stub validates format only") {
    auto dir = fs::temp_directory_path() / "spoofdet_asv_test";
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "proto.txt");
        f << "LA_0079 LA_T_1138215 - - bonafide\n";
        f << "LA_0079 LA_T_1271820 - A01 spoof\n";
    }
    auto counts = validate_asvspoof2019_protocol((dir / "proto.txt").string());
    REQUIRE(counts.bona == 1);
    REQUIRE(counts.spoof == 1);
    {
        std::ofstream f(dir / "bad.txt");
        f << "LA_0079 LA_T_1138215 - - genuine\n";
    }
    REQUIRE_THROWS(validate_asvspoof2019_protocol((dir / "bad.txt").string()));
    fs::remove_all(dir);
}
