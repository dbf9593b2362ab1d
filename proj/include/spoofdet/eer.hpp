#pragma once

#include "spoofdet/datagen.hpp"
#include "spoofdet/objective.hpp"

namespace spoofdet {

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

/// Equal error rate with higher score meaning more bona fide. Thresholds are
/// applied as `score >= threshold accepts`; sweeping them gives operating
/// points FAR(t) = P(spoof >= t), FRR(t) = P(bona < t). FAR - FRR is
/// non-increasing in t, and the EER is read at its zero crossing, linearly
/// interpolated between the two adjacent operating points when the crossing
/// falls between them.
///
/// Interpolation keeps the result in [0, 0.5] for any score set whose
/// direction is not systematically inverted; step-function conventions
/// (nearest operating point) can exceed 0.5 even on mildly adversarial
/// inputs, which is why the interpolated convention is used here.
inline EerResult compute_eer(std::vector<double> bona, std::vector<double> spoof) {
    check(!bona.empty(), "compute_eer: empty bona fide class");
    check(!spoof.empty(), "compute_eer: empty spoof class");
    for (double v : bona) check(std::isfinite(v), "compute_eer: non-finite bona fide score");
    for (double v : spoof) check(std::isfinite(v), "compute_eer: non-finite spoof score");
    std::sort(bona.begin(), bona.end());
    std::sort(spoof.begin(), spoof.end());

    std::vector<double> thresholds;
    thresholds.reserve(bona.size() + spoof.size());
    thresholds.insert(thresholds.end(), bona.begin(), bona.end());
    thresholds.insert(thresholds.end(), spoof.begin(), spoof.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    auto far_frr = [&](double t) {
        const double far =
            (double)(spoof.end() - std::lower_bound(spoof.begin(), spoof.end(), t)) / (double)spoof.size();
        const double frr =
            (double)(std::lower_bound(bona.begin(), bona.end(), t) - bona.begin()) / (double)bona.size();
        return std::pair<double, double>(far, frr);
    };

    // below the minimum score: FAR=1, FRR=0
    double prev_far = 1.0, prev_frr = 0.0, prev_t = thresholds.front() - 1.0;
    for (size_t i = 0; i <= thresholds.size(); ++i) {
        double t, far, frr;
        if (i < thresholds.size()) {
            t = thresholds[i];
            std::tie(far, frr) = far_frr(t);
        } else {  // above the maximum score
            t = thresholds.back() + 1.0;
            far = 0.0;
            frr = 1.0;
        }
        const double d = far - frr;
        if (d == 0.0) return {far, t};
        if (d < 0.0) {
            const double dprev = prev_far - prev_frr;  // > 0 here
            const double w = dprev / (dprev - d);
            return {prev_far + w * (far - prev_far), prev_t + w * (t - prev_t)};
        }
        prev_far = far;
        prev_frr = frr;
        prev_t = t;
    }
    throw std::runtime_error("compute_eer: no crossing found");
}

/// Raw operating points for DET export: threshold, FAR, FRR per distinct
/// score.
inline void write_det_points(const std::string& path, std::vector<double> bona, std::vector<double> spoof) {
    check(!bona.empty() && !spoof.empty(), "write_det_points: empty class");
    std::sort(bona.begin(), bona.end());
    std::sort(spoof.begin(), spoof.end());
    std::vector<double> thresholds;
    thresholds.insert(thresholds.end(), bona.begin(), bona.end());
    thresholds.insert(thresholds.end(), spoof.begin(), spoof.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::ofstream f(path);
    check(f.good(), "write_det_points: cannot open " + path);
    f << "threshold,far,frr\n" << std::setprecision(17);
    for (double t : thresholds) {
        const double far =
            (double)(spoof.end() - std::lower_bound(spoof.begin(), spoof.end(), t)) / (double)spoof.size();
        const double frr =
            (double)(std::lower_bound(bona.begin(), bona.end(), t) - bona.begin()) / (double)bona.size();
        f << t << ',' << far << ',' << frr << '\n';
    }
}

struct EvalReport {
    double utt_eer = 0.0, utt_threshold = 0.0;
    double seg_eer = 0.0, seg_threshold = 0.0;
    int64_t n_trials = 0, n_bona_trials = 0, n_spoof_trials = 0;
    int64_t n_frames = 0, n_bona_frames = 0, n_spoof_frames = 0;
};

/// Pooled per-class score lists at both levels, for DET export.
struct ScorePools {
    std::vector<double> utt_bona, utt_spoof, seg_bona, seg_spoof;
};

/// Scores every protocol trial at both levels. The segmental EER pools all
/// valid frames across trials into one score set. Any missing record or
/// frame-count mismatch is collected into one itemized error.
inline EvalReport evaluate_scores(const std::vector<ScoreRecord>& records,
                                  const std::vector<ProtocolEntry>& protocol,
                                  const std::vector<std::pair<std::string, SegmentLabelTrack>>& tracks,
                                  ScorePools* pools = nullptr) {
    check(!protocol.empty(), "evaluate_scores: empty protocol");
    std::map<std::string, const ScoreRecord*> by_id;
    for (const auto& r : records) by_id[r.trial_id] = &r;
    std::map<std::string, const SegmentLabelTrack*> track_by_id;
    for (const auto& [id, t] : tracks) track_by_id[id] = &t;

    std::vector<std::string> problems;
    std::vector<double> utt_bona, utt_spoof, seg_bona, seg_spoof;
    EvalReport rep;
    for (const auto& e : protocol) {
        auto it = by_id.find(e.trial_id);
        if (it == by_id.end()) {
            problems.push_back(e.trial_id + ": missing score record");
            continue;
        }
        auto tk = track_by_id.find(e.trial_id);
        if (tk == track_by_id.end()) {
            problems.push_back(e.trial_id + ": missing segment label track");
            continue;
        }
        const auto& rec = *it->second;
        const int64_t m = (int64_t)rec.seg_scores.size();
        if ((int64_t)tk->second->unit_labels.size() < m * kUnitsPerFrame) {
            problems.push_back(e.trial_id + ": " + std::to_string(tk->second->unit_labels.size()) +
                               " label units cannot cover " + std::to_string(m) + " segment scores");
            continue;
        }
        rep.n_trials += 1;
        (e.utt_label == kBonaFide ? rep.n_bona_trials : rep.n_spoof_trials) += 1;
        (e.utt_label == kBonaFide ? utt_bona : utt_spoof).push_back(rec.utt_score);
        auto frame_labels = frame_labels_for_m(tk->second->unit_labels, m);
        for (int64_t i = 0; i < m; ++i) {
            rep.n_frames += 1;
            (frame_labels[i] == kBonaFide ? rep.n_bona_frames : rep.n_spoof_frames) += 1;
            (frame_labels[i] == kBonaFide ? seg_bona : seg_spoof).push_back(rec.seg_scores[i]);
        }
    }
    if (!problems.empty()) {
        std::string msg = "evaluate_scores: " + std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw std::runtime_error(msg);
    }
    auto utt = compute_eer(utt_bona, utt_spoof);
    auto seg = compute_eer(seg_bona, seg_spoof);
    rep.utt_eer = utt.eer;
    rep.utt_threshold = utt.threshold;
    rep.seg_eer = seg.eer;
    rep.seg_threshold = seg.threshold;
    if (pools) *pools = {std::move(utt_bona), std::move(utt_spoof), std::move(seg_bona), std::move(seg_spoof)};
    return rep;
}

inline std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "utterance_eer " << r.utt_eer << "\n";
    os << "utterance_threshold " << r.utt_threshold << "\n";
    os << "segmental_eer " << r.seg_eer << "\n";
    os << "segmental_threshold " << r.seg_threshold << "\n";
    os << "trials " << r.n_trials << " (bona " << r.n_bona_trials << ", spoof " << r.n_spoof_trials << ")\n";
    os << "frames " << r.n_frames << " (bona " << r.n_bona_frames << ", spoof " << r.n_spoof_frames << ")\n";
    return os.str();
}

inline void write_report(const std::string& text_path, const std::string& csv_path, const EvalReport& r) {
    {
        std::ofstream f(text_path);
        check(f.good(), "write_report: cannot open " + text_path);
        f << report_text(r);
    }
    std::ofstream f(csv_path);
    check(f.good(), "write_report: cannot open " + csv_path);
    f << "utt_eer,utt_threshold,seg_eer,seg_threshold,trials,bona_trials,spoof_trials,frames,bona_frames,"
         "spoof_frames\n";
    f << std::setprecision(17) << r.utt_eer << ',' << r.utt_threshold << ',' << r.seg_eer << ','
      << r.seg_threshold << ',' << r.n_trials << ',' << r.n_bona_trials << ',' << r.n_spoof_trials << ','
      << r.n_frames << ',' << r.n_bona_frames << ',' << r.n_spoof_frames << '\n';
}

}  // namespace spoofdet
