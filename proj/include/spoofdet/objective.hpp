#pragma once

#include <fstream>
#include <iomanip>

#include "spoofdet/model.hpp"

namespace spoofdet {

/// MSE between per-trial cosines [B,2] and one-hot targets, averaged over
/// the batch: (1/B) sum_j sum_k (cos_{j,k} - 1(y_j=k))^2.
template <typename T>
Tensor<T> loss_utt(const Tensor<T>& cos_utt, const std::vector<int>& labels) {
    check(cos_utt.ndim() == 2 && cos_utt.dim(1) == 2, "loss_utt: expected [B,2] cosines");
    const int64_t B = cos_utt.dim(0);
    check((int64_t)labels.size() == B, "loss_utt: labels size mismatch");
    Tensor<T> target({B, 2});
    for (int64_t b = 0; b < B; ++b) {
        check(labels[b] == kBonaFide || labels[b] == kSpoof, "loss_utt: label must be 1 or 2");
        target.data()[b * 2 + (labels[b] - 1)] = T(1);
    }
    auto d = ops::sub(cos_utt, target);
    return ops::scale(ops::sum_all(ops::mul(d, d)), T(1) / T(B));
}

/// Segmental MSE with per-trial normalization: each trial contributes the
/// mean over its valid frames, and the batch mean of those is returned.
/// Padded frames contribute exactly zero.
template <typename T>
Tensor<T> loss_seg(const Tensor<T>& cos_seg, const std::vector<std::vector<int>>& labels,
                   const std::vector<int64_t>& lens) {
    check(cos_seg.ndim() == 3 && cos_seg.dim(2) == 2, "loss_seg: expected [B,M,2] cosines");
    const int64_t B = cos_seg.dim(0), M = cos_seg.dim(1);
    check((int64_t)labels.size() == B && (int64_t)lens.size() == B, "loss_seg: batch size mismatch");
    Tensor<T> target({B, M, 2});
    Tensor<T> weight({B, M, 2});
    for (int64_t b = 0; b < B; ++b) {
        check(lens[b] >= 1 && lens[b] <= M, "loss_seg: invalid valid-frame count");
        check((int64_t)labels[b].size() == lens[b],
              "loss_seg: trial " + std::to_string(b) + " has " + std::to_string(labels[b].size()) +
                  " frame labels for " + std::to_string(lens[b]) + " embedding frames");
        const T w = T(1) / (T(B) * T(lens[b]));
        for (int64_t m = 0; m < lens[b]; ++m) {
            check(labels[b][m] == kBonaFide || labels[b][m] == kSpoof, "loss_seg: label must be 1 or 2");
            target.data()[(b * M + m) * 2 + (labels[b][m] - 1)] = T(1);
            weight.data()[(b * M + m) * 2 + 0] = w;
            weight.data()[(b * M + m) * 2 + 1] = w;
        }
    }
    auto d = ops::sub(cos_seg, target);
    return ops::sum_all(ops::mul(ops::mul(d, d), weight));
}

template <typename T>
struct LossValue {
    Tensor<T> total;
    std::map<std::string, T> parts;  // "utt" and/or "seg"
};

/// Unweighted sum of the two level losses (the seg weight is configurable
/// but defaults to 1).
template <typename T>
LossValue<T> fused_loss(const Tensor<T>& lu, const Tensor<T>& ls, T seg_weight = T(1)) {
    LossValue<T> out;
    out.total = ops::add(lu, seg_weight == T(1) ? ls : ops::scale(ls, seg_weight));
    out.parts["utt"] = lu.item();
    out.parts["seg"] = ls.item();
    return out;
}

// ---------------------------------------------------------------------------
// Score derivation (inference only, single trial)
// ---------------------------------------------------------------------------

/// Which route produced a record:
///   utt-direct          both levels read straight off their own branches
///   utt-derived-seg     utterance branch only; segment scores are the AP
///                       decomposition terms
///   seg-direct          segment branch of a two-branch model; utterance
///                       column recomputed as min over frames
///   seg-derived-utt-min segment branch only; utterance score is the min
enum class ScoreSource { UttDirect, UttDerivedSeg, SegDirect, SegDerivedUttMin };

inline const char* score_source_name(ScoreSource s) {
    switch (s) {
        case ScoreSource::UttDirect: return "utt-direct";
        case ScoreSource::UttDerivedSeg: return "utt-derived-seg";
        case ScoreSource::SegDirect: return "seg-direct";
        case ScoreSource::SegDerivedUttMin: return "seg-derived-utt-min";
    }
    return "?";
}

inline ScoreSource score_source_from_string(const std::string& s) {
    for (ScoreSource v : {ScoreSource::UttDirect, ScoreSource::UttDerivedSeg, ScoreSource::SegDirect,
                          ScoreSource::SegDerivedUttMin})
        if (s == score_source_name(v)) return v;
    throw std::runtime_error("unknown score source '" + s + "'");
}

struct ScoreRecord {
    std::string trial_id;
    double utt_score = 0.0;
    std::vector<double> seg_scores;
    ScoreSource source = ScoreSource::UttDirect;
};

/// Utterance-head scores for one trial. h is [M,E], classes [2,E]. The
/// stored segment scores are the decomposition terms
/// (|h_m| / |o|) c1.h_m_hat = c1.h_m / |o|, whose mean over m equals the
/// utterance cosine exactly (average pooling identity).
template <typename T>
ScoreRecord scores_from_utt_model(const Tensor<T>& h, const Tensor<T>& classes,
                                  const std::string& trial_id, T eps = T(1e-8)) {
    check(h.ndim() == 2 && classes.ndim() == 2 && classes.dim(0) == 2 && classes.dim(1) == h.dim(1),
          "scores_from_utt_model: shape mismatch");
    const int64_t M = h.dim(0), E = h.dim(1);
    std::vector<T> o(E, T(0));
    for (int64_t m = 0; m < M; ++m)
        for (int64_t e = 0; e < E; ++e) o[e] += h.data()[m * E + e] / T(M);
    T norm_o = T(0);
    for (int64_t e = 0; e < E; ++e) norm_o += o[e] * o[e];
    norm_o = std::sqrt(norm_o);
    check(norm_o > eps, "scores_from_utt_model: degenerate trial " + trial_id +
                            " (pooled embedding norm below epsilon)");
    T norm_c = T(0);
    for (int64_t e = 0; e < E; ++e) norm_c += classes.data()[e] * classes.data()[e];
    norm_c = std::sqrt(std::max(norm_c, eps));

    ScoreRecord rec;
    rec.trial_id = trial_id;
    rec.source = ScoreSource::UttDerivedSeg;
    rec.seg_scores.resize(M);
    T dot_o = T(0);
    for (int64_t e = 0; e < E; ++e) dot_o += (classes.data()[e] / norm_c) * o[e];
    rec.utt_score = (double)(dot_o / norm_o);
    for (int64_t m = 0; m < M; ++m) {
        T dot = T(0);
        for (int64_t e = 0; e < E; ++e) dot += (classes.data()[e] / norm_c) * h.data()[m * E + e];
        rec.seg_scores[m] = (double)(dot / norm_o);
    }
    return rec;
}

/// Segment-head scores for one trial: the bona-fide cosines per frame, with
/// the utterance score as their minimum.
inline ScoreRecord scores_from_seg_model(const std::vector<double>& seg_cos1,
                                         const std::string& trial_id) {
    check(!seg_cos1.empty(), "scores_from_seg_model: no frames");
    ScoreRecord rec;
    rec.trial_id = trial_id;
    rec.source = ScoreSource::SegDerivedUttMin;
    rec.seg_scores = seg_cos1;
    rec.utt_score = *std::min_element(seg_cos1.begin(), seg_cos1.end());
    return rec;
}

/// Binary-branch scores: the main record takes each level from its own
/// branch; the companion record re-derives the utterance score from the
/// segment branch via min, for derived-vs-direct analysis.
inline std::pair<ScoreRecord, ScoreRecord> scores_binary_branch(double utt_cos1,
                                                                const std::vector<double>& seg_cos1,
                                                                const std::string& trial_id) {
    check(!seg_cos1.empty(), "scores_binary_branch: no frames");
    ScoreRecord main;
    main.trial_id = trial_id;
    main.source = ScoreSource::UttDirect;
    main.utt_score = utt_cos1;
    main.seg_scores = seg_cos1;
    ScoreRecord alt = scores_from_seg_model(seg_cos1, trial_id);
    alt.source = ScoreSource::SegDirect;
    return {main, alt};
}

/// Runs one trial's features [N,feat_dim] through the bundle (eval mode) and
/// derives the variant's scores. For two-branch models the second element
/// carries the segment-branch-only record; otherwise it is empty.
template <typename T>
std::pair<ScoreRecord, std::optional<ScoreRecord>> score_trial(const ModelBundle<T>& bundle,
                                                               const Tensor<T>& feats,
                                                               const std::string& trial_id) {
    check(feats.ndim() == 2, "score_trial: expected [N,feat_dim]");
    const int64_t N = feats.dim(0), D = feats.dim(1);
    Tensor<T> x = Tensor<T>::from({1, 1, N, D}, feats.vec());
    std::vector<int64_t> emb_lens;
    auto h3 = bundle.embeddings(x, {N}, false, nullptr, &emb_lens);
    const int64_t M = emb_lens[0], E = h3.dim(2);
    Tensor<T> h = Tensor<T>::from({M, E}, std::vector<T>(h3.data(), h3.data() + M * E));

    auto seg_cos1 = [&]() {
        auto cos = bundle.segment_branch(ops::reshape(h, {1, M, E}), "seg");
        std::vector<double> s(M);
        for (int64_t m = 0; m < M; ++m) s[m] = (double)cos.data()[m * 2];
        return s;
    };

    switch (bundle.variant) {
        case Variant::Utt:
        case Variant::UttU:
            return {scores_from_utt_model(h, bundle.classes("utt"), trial_id), std::nullopt};
        case Variant::Seg:
        case Variant::SegU:
            return {scores_from_seg_model(seg_cos1(), trial_id), std::nullopt};
        case Variant::MulBS:
        case Variant::UttBW:
        case Variant::SegBW: {
            check(bundle.has_head("utt") && bundle.has_head("seg"),
                  "score_trial: two-branch variant is missing a head");
            // same utterance-cosine arithmetic as the single-branch route, so
            // warm-up expansion preserves scores bitwise
            const double utt = scores_from_utt_model(h, bundle.classes("utt"), trial_id).utt_score;
            auto [main, alt] = scores_binary_branch(utt, seg_cos1(), trial_id);
            return {main, alt};
        }
    }
    throw std::runtime_error("score_trial: unreachable");
}

// ---------------------------------------------------------------------------
// Score file: one line per trial,
//   trial_id utt_score M seg_score_1 ... seg_score_M source
// ---------------------------------------------------------------------------

inline void write_score_file(const std::string& path, const std::vector<ScoreRecord>& records) {
    std::ofstream f(path);
    check(f.good(), "write_score_file: cannot open " + path);
    f << std::setprecision(17);
    for (const auto& r : records) {
        check(!r.seg_scores.empty(), "write_score_file: record " + r.trial_id + " has no segment scores");
        f << r.trial_id << ' ' << r.utt_score << ' ' << r.seg_scores.size();
        for (double s : r.seg_scores) f << ' ' << s;
        f << ' ' << score_source_name(r.source) << '\n';
    }
    check(f.good(), "write_score_file: write failed for " + path);
}

inline std::vector<ScoreRecord> read_score_file(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "read_score_file: cannot open " + path);
    std::vector<ScoreRecord> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        ScoreRecord r;
        size_t m = 0;
        if (!(is >> r.trial_id >> r.utt_score >> m) || m == 0)
            throw std::runtime_error("read_score_file: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        r.seg_scores.resize(m);
        for (size_t i = 0; i < m; ++i)
            if (!(is >> r.seg_scores[i]))
                throw std::runtime_error("read_score_file: malformed line " + std::to_string(lineno) +
                                         " in " + path);
        std::string src;
        if (!(is >> src))
            throw std::runtime_error("read_score_file: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        r.source = score_source_from_string(src);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace spoofdet
