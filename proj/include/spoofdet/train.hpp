#pragma once

#include <chrono>

#include "spoofdet/checkpoint.hpp"
#include "spoofdet/eer.hpp"
#include "spoofdet/lfcc.hpp"

namespace spoofdet {

struct Trial {
    std::string id;
    int utt_label = kBonaFide;
    std::string split;
    Tensor<float> feats;           // [N, feat_dim]
    std::vector<int> unit_labels;  // empty if no segment track was available
    std::vector<int> frame_labels;
    double spoof_ratio = 0.0;
};

struct Corpus {
    std::vector<Trial> train, dev, eval;

    const std::vector<Trial>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "dev") return dev;
        if (name == "eval") return eval;
        throw std::runtime_error("Corpus: unknown split '" + name + "'");
    }
};

/// Reads a generated corpus directory (protocol.txt, segment_labels.txt,
/// wav/) and extracts features for every trial.
inline Corpus load_corpus(const std::string& dir, const LfccConfig& feat_cfg = LfccConfig{}) {
    namespace fs = std::filesystem;
    auto protocol = read_protocol((fs::path(dir) / "protocol.txt").string());
    std::map<std::string, SegmentLabelTrack> tracks;
    const auto label_path = fs::path(dir) / "segment_labels.txt";
    if (fs::exists(label_path))
        for (auto& [id, t] : read_segment_labels(label_path.string())) tracks[id] = std::move(t);

    Corpus corpus;
    for (const auto& e : protocol) {
        Trial t;
        t.id = e.trial_id;
        t.utt_label = e.utt_label;
        t.split = e.split;
        auto clip = read_wav16((fs::path(dir) / "wav" / (e.trial_id + ".wav")).string());
        t.feats = lfcc(clip, feat_cfg).data;
        auto it = tracks.find(e.trial_id);
        if (it != tracks.end()) {
            t.unit_labels = it->second.unit_labels;
            t.spoof_ratio = it->second.spoof_ratio;
            t.frame_labels = align_labels_to_frames(t.unit_labels, t.feats.dim(0));
        }
        if (e.split == "train")
            corpus.train.push_back(std::move(t));
        else if (e.split == "dev")
            corpus.dev.push_back(std::move(t));
        else if (e.split == "eval")
            corpus.eval.push_back(std::move(t));
        else
            throw std::runtime_error("load_corpus: unknown split '" + e.split + "' for " + e.trial_id);
    }
    check(!corpus.train.empty() && !corpus.dev.empty(), "load_corpus: need train and dev splits in " + dir);
    return corpus;
}

// ---------------------------------------------------------------------------
// Schedule and early stopping
// ---------------------------------------------------------------------------

inline double lr_at_epoch(double lr_init, int halving_period, int epoch) {
    return lr_init * std::pow(2.0, -(double)(epoch / halving_period));
}

/// Stops once the best dev loss has not improved by at least min_delta for
/// `patience` consecutive epochs.
class EarlyStopper {
  public:
    EarlyStopper(int patience, double min_delta = 1e-6) : patience_(patience), min_delta_(min_delta) {}

    /// Feed one epoch's dev loss; true means halt after this epoch.
    bool update(int epoch, double dev_loss) {
        if (best_epoch_ < 0 || dev_loss <= best_ - min_delta_) {
            best_ = dev_loss;
            best_epoch_ = epoch;
        }
        return epoch - best_epoch_ >= patience_;
    }

    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }

  private:
    int patience_;
    double min_delta_;
    double best_ = 0.0;
    int best_epoch_ = -1;
};

struct TrainSettings {
    Variant variant = Variant::Seg;
    uint64_t seed = 1;
    double lr_init = 3e-4;
    int lr_halving_period_epochs = 10;
    int early_stop_patience_epochs = 70;
    int batch_size = 8;
    int max_epochs = 100;
    std::string warmup_checkpoint;  // required for UttBW/SegBW
    double loss_weight_seg = 1.0;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double dev_loss_utt = 0.0;
    double dev_loss_seg = 0.0;
    double wall_s = 0.0;  // not serialized; kept for live reporting
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_dev_loss = 0.0;
};

inline void write_run_record_csv(const std::string& path, const RunRecord& rec) {
    std::ofstream f(path);
    check(f.good(), "write_run_record_csv: cannot open " + path);
    f << "epoch,lr,train_loss,dev_loss,dev_loss_utt,dev_loss_seg\n" << std::setprecision(17);
    for (const auto& e : rec.epochs)
        f << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.dev_loss << ',' << e.dev_loss_utt
          << ',' << e.dev_loss_seg << '\n';
    check(f.good(), "write_run_record_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

namespace train_detail {

struct Batch {
    Tensor<float> x;  // [B,1,Nmax,D]
    std::vector<int64_t> feat_lens;
    std::vector<int> utt_labels;
    std::vector<std::vector<int>> frame_labels;
};

/// Length-bucketed batches: trials sorted by frame count (ties by id) and
/// chunked; the caller shuffles batch order per epoch.
inline std::vector<std::vector<size_t>> bucket_batches(const std::vector<Trial>& trials, int batch_size) {
    std::vector<size_t> order(trials.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (trials[a].feats.dim(0) != trials[b].feats.dim(0))
            return trials[a].feats.dim(0) < trials[b].feats.dim(0);
        return trials[a].id < trials[b].id;
    });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += batch_size) {
        batches.emplace_back(order.begin() + i,
                             order.begin() + std::min(order.size(), i + (size_t)batch_size));
    }
    return batches;
}

inline Batch assemble(const std::vector<Trial>& trials, const std::vector<size_t>& idx) {
    Batch b;
    int64_t nmax = 0, d = trials[idx[0]].feats.dim(1);
    for (size_t i : idx) nmax = std::max(nmax, trials[i].feats.dim(0));
    b.x = Tensor<float>({(int64_t)idx.size(), 1, nmax, d});
    for (size_t bi = 0; bi < idx.size(); ++bi) {
        const Trial& t = trials[idx[bi]];
        std::copy(t.feats.data(), t.feats.data() + t.feats.numel(), b.x.data() + bi * nmax * d);
        b.feat_lens.push_back(t.feats.dim(0));
        b.utt_labels.push_back(t.utt_label);
        b.frame_labels.push_back(t.frame_labels);
    }
    return b;
}

/// Variant-specific loss wiring on one batch's embeddings.
inline LossValue<float> batch_loss(const ModelBundle<float>& bundle, const Tensor<float>& h,
                                   const std::vector<int64_t>& emb_lens, const Batch& batch,
                                   double loss_weight_seg) {
    auto seg_labels_for = [&](void) {
        std::vector<std::vector<int>> out;
        for (size_t i = 0; i < batch.frame_labels.size(); ++i) {
            check(!batch.frame_labels[i].empty(), "train: missing segment labels for a variant that needs them");
            out.push_back(std::vector<int>(batch.frame_labels[i].begin(),
                                           batch.frame_labels[i].begin() + emb_lens[i]));
        }
        return out;
    };
    switch (bundle.variant) {
        case Variant::Utt: {
            auto [o, cos] = bundle.utterance_branch(h, emb_lens);
            LossValue<float> out;
            out.total = loss_utt(cos, batch.utt_labels);
            out.parts["utt"] = out.total.item();
            return out;
        }
        case Variant::Seg: {
            auto cos = bundle.segment_branch(h, "seg");
            LossValue<float> out;
            out.total = loss_seg(cos, seg_labels_for(), emb_lens);
            out.parts["seg"] = out.total.item();
            return out;
        }
        case Variant::UttU: {
            // one shared head: utterance loss through AP, segment loss from
            // the same class vectors applied per frame
            auto [o, cos_u] = bundle.utterance_branch(h, emb_lens);
            auto cos_s = bundle.segment_branch(h, "utt");
            return fused_loss(loss_utt(cos_u, batch.utt_labels), loss_seg(cos_s, seg_labels_for(), emb_lens),
                              (float)loss_weight_seg);
        }
        case Variant::SegU: {
            // utterance cosines taken from the argmin frame of the bona fide
            // column: the min subgradient flows to that frame only
            auto cos_s = bundle.segment_branch(h, "seg");
            auto cos_u = ops::argmin_select(cos_s, emb_lens);
            return fused_loss(loss_utt(cos_u, batch.utt_labels), loss_seg(cos_s, seg_labels_for(), emb_lens),
                              (float)loss_weight_seg);
        }
        case Variant::MulBS:
        case Variant::UttBW:
        case Variant::SegBW: {
            auto [o, cos_u] = bundle.utterance_branch(h, emb_lens);
            auto cos_s = bundle.segment_branch(h, "seg");
            return fused_loss(loss_utt(cos_u, batch.utt_labels), loss_seg(cos_s, seg_labels_for(), emb_lens),
                              (float)loss_weight_seg);
        }
    }
    throw std::runtime_error("batch_loss: unreachable");
}

}  // namespace train_detail

// ---------------------------------------------------------------------------
// Warm-up expansion
// ---------------------------------------------------------------------------

/// Expands a single-task checkpoint into its two-branch variant: backbone,
/// existing head, and batch-norm statistics are copied verbatim; only the
/// new head is freshly initialized from `seed`. Before fine-tuning, the
/// original branch therefore scores bitwise-identically to the checkpoint.
inline ModelBundle<float> warmup_expand(const ModelBundle<float>& pretrained, Variant target,
                                        uint64_t seed) {
    check(target == Variant::UttBW || target == Variant::SegBW,
          "warmup_expand: target must be UttBW or SegBW");
    const Variant expected = target == Variant::UttBW ? Variant::Utt : Variant::Seg;
    check(pretrained.variant == expected,
          std::string("warmup_expand: ") + variant_name(target) + " must start from a " +
              variant_name(expected) + " checkpoint, got " + variant_name(pretrained.variant));
    ModelBundle<float> out = build_model_unchecked<float>(target, pretrained.cfg, seed);
    for (auto& [name, t] : out.params)
        if (pretrained.params.contains(name)) {
            const auto& src = pretrained.params.at(name);
            check(src.shape() == t.shape(), "warmup_expand: shape mismatch for " + name);
            std::copy(src.data(), src.data() + src.numel(), t.data());
        }
    for (auto& [name, t] : out.buffers) {
        const auto& src = pretrained.buffers.at(name);
        std::copy(src.data(), src.data() + src.numel(), t.data());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    ModelBundle<float> best;  // parameters and buffers at the best dev epoch
    RunRecord record;
};

inline TrainResult train(const TrainSettings& settings, const ModelConfig& model_cfg, const Corpus& corpus,
                         const std::function<void(const EpochRecord&)>& on_epoch = nullptr,
                         const std::function<bool(int, const ModelBundle<float>&)>& stop_after_epoch = nullptr) {
    check(!corpus.train.empty() && !corpus.dev.empty(), "train: corpus needs train and dev splits");
    if (has_seg_head(settings.variant) || settings.variant == Variant::UttU)
        for (const auto& t : corpus.train)
            check(!t.frame_labels.empty(),
                  "train: variant " + std::string(variant_name(settings.variant)) +
                      " needs segment labels, but trial " + t.id + " has none");

    ModelBundle<float> bundle;
    if (is_warmup(settings.variant)) {
        check(!settings.warmup_checkpoint.empty(),
              std::string("train: variant ") + variant_name(settings.variant) +
                  " requires a warm-up checkpoint");
        auto loaded = read_checkpoint(settings.warmup_checkpoint);
        bundle = warmup_expand(loaded.bundle, settings.variant, settings.seed);
    } else {
        check(settings.warmup_checkpoint.empty(),
              std::string("train: variant ") + variant_name(settings.variant) +
                  " must not be given a warm-up checkpoint");
        bundle = build_model<float>(settings.variant, model_cfg, settings.seed);
    }
    bundle.set_all_requires_grad(true);

    std::vector<AdamState<float>> adam;
    for (auto& [name, p] : bundle.params) adam.push_back(adam_init(p, (float)settings.lr_init));

    auto train_batches = train_detail::bucket_batches(corpus.train, settings.batch_size);
    auto dev_batches = train_detail::bucket_batches(corpus.dev, settings.batch_size);

    std::mt19937_64 dropout_rng(synth::mix_seed(settings.seed, 0x9a7, 1));
    EarlyStopper stopper(settings.early_stop_patience_epochs);
    TrainResult result;
    ModelBundle<float> best;

    for (int epoch = 0; epoch < settings.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(settings.lr_init, settings.lr_halving_period_epochs, epoch);
        for (auto& s : adam) s.lr = (float)lr;

        std::vector<size_t> batch_order(train_batches.size());
        for (size_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;
        std::mt19937_64 shuffle_rng(synth::mix_seed(settings.seed, 0x5f1, (uint64_t)epoch));
        std::shuffle(batch_order.begin(), batch_order.end(), shuffle_rng);

        double train_loss_sum = 0.0;
        int64_t n_train = 0;
        for (size_t bi : batch_order) {
            auto batch = train_detail::assemble(corpus.train, train_batches[bi]);
            Tape<float> tape;
            std::vector<int64_t> emb_lens;
            auto h = bundle.embeddings(batch.x, batch.feat_lens, true, &dropout_rng, &emb_lens);
            auto loss = train_detail::batch_loss(bundle, h, emb_lens, batch, settings.loss_weight_seg);
            tape.backward(loss.total);
            size_t pi = 0;
            for (auto& [name, p] : bundle.params) {
                auto g = tape.grad(p);
                adam_step(p, g, adam[pi++]);
            }
            train_loss_sum += (double)loss.total.item() * (double)batch.feat_lens.size();
            n_train += (int64_t)batch.feat_lens.size();
        }

        double dev_loss_sum = 0.0, dev_utt_sum = 0.0, dev_seg_sum = 0.0;
        int64_t n_dev = 0;
        for (const auto& idx : dev_batches) {
            auto batch = train_detail::assemble(corpus.dev, idx);
            std::vector<int64_t> emb_lens;
            auto h = bundle.embeddings(batch.x, batch.feat_lens, false, nullptr, &emb_lens);
            auto loss = train_detail::batch_loss(bundle, h, emb_lens, batch, settings.loss_weight_seg);
            const double w = (double)batch.feat_lens.size();
            dev_loss_sum += (double)loss.total.item() * w;
            if (loss.parts.count("utt")) dev_utt_sum += (double)loss.parts.at("utt") * w;
            if (loss.parts.count("seg")) dev_seg_sum += (double)loss.parts.at("seg") * w;
            n_dev += (int64_t)w;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = train_loss_sum / (double)n_train;
        rec.dev_loss = dev_loss_sum / (double)n_dev;
        rec.dev_loss_utt = dev_utt_sum / (double)n_dev;
        rec.dev_loss_seg = dev_seg_sum / (double)n_dev;
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.record.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        const int prev_best = stopper.best_epoch();
        const bool stop = stopper.update(epoch, rec.dev_loss);
        if (stopper.best_epoch() == epoch && stopper.best_epoch() != prev_best) best = bundle.clone();
        if (stop) break;
        if (stop_after_epoch && stop_after_epoch(epoch, bundle)) break;
    }

    result.record.best_epoch = stopper.best_epoch();
    result.record.best_dev_loss = stopper.best_loss();
    result.best = best.params.size() ? std::move(best) : bundle.clone();
    result.best.variant = bundle.variant;
    result.best.set_all_requires_grad(false);
    return result;
}

// ---------------------------------------------------------------------------
// Scoring and evaluation over corpus splits
// ---------------------------------------------------------------------------

inline std::vector<ScoreRecord> score_split(const ModelBundle<float>& bundle,
                                            const std::vector<Trial>& trials,
                                            std::vector<ScoreRecord>* alt_records = nullptr) {
    std::vector<ScoreRecord> out;
    for (const auto& t : trials) {
        auto [main, alt] = score_trial(bundle, t.feats, t.id);
        out.push_back(std::move(main));
        if (alt_records && alt.has_value()) alt_records->push_back(std::move(*alt));
    }
    return out;
}

inline EvalReport evaluate_split(const ModelBundle<float>& bundle, const std::vector<Trial>& trials) {
    auto records = score_split(bundle, trials);
    std::vector<ProtocolEntry> protocol;
    std::vector<std::pair<std::string, SegmentLabelTrack>> tracks;
    for (const auto& t : trials) {
        protocol.push_back({t.id, t.utt_label, t.split});
        SegmentLabelTrack track;
        track.unit_labels = t.unit_labels;
        track.spoof_ratio = t.spoof_ratio;
        tracks.emplace_back(t.id, std::move(track));
    }
    return evaluate_scores(records, protocol, tracks);
}

// ---------------------------------------------------------------------------
// Multi-seed protocol
// ---------------------------------------------------------------------------

struct SeedOutcome {
    uint64_t seed = 0;
    double dev_utt_eer = 0.0, dev_seg_eer = 0.0;
    double eval_utt_eer = 0.0, eval_seg_eer = 0.0;
};

struct MultiSeedReport {
    std::vector<SeedOutcome> per_seed;
    double mean_dev_utt_eer = 0.0, mean_dev_seg_eer = 0.0;
    double mean_eval_utt_eer = 0.0, mean_eval_seg_eer = 0.0;
    size_t selected_pretrained = SIZE_MAX;  // warm-up variants only
};

/// Index of the best pre-trained run by dev EER: utterance EER for
/// Utt-based warm-up, segmental EER for Seg-based.
inline size_t pick_best_pretrained(Variant base, const std::vector<SeedOutcome>& outcomes) {
    check(!outcomes.empty(), "pick_best_pretrained: no outcomes");
    size_t best = 0;
    for (size_t i = 1; i < outcomes.size(); ++i) {
        const double a = base == Variant::Utt ? outcomes[i].dev_utt_eer : outcomes[i].dev_seg_eer;
        const double b = base == Variant::Utt ? outcomes[best].dev_utt_eer : outcomes[best].dev_seg_eer;
        if (a < b) best = i;
    }
    return best;
}

/// Trains one run per seed and aggregates both-level EERs on dev and eval.
/// Warm-up variants without an explicit checkpoint pre-train their base
/// variant for every seed first and fine-tune from the best-dev one.
inline MultiSeedReport multi_seed_protocol(TrainSettings settings, const ModelConfig& model_cfg,
                                           const Corpus& corpus, const std::vector<uint64_t>& seeds,
                                           const std::string& work_dir = "") {
    check(!seeds.empty(), "multi_seed_protocol: need at least one seed");
    MultiSeedReport report;

    std::string warmup_ckpt = settings.warmup_checkpoint;
    if (is_warmup(settings.variant) && warmup_ckpt.empty()) {
        check(!work_dir.empty(), "multi_seed_protocol: warm-up selection needs a work directory");
        TrainSettings base = settings;
        base.variant = settings.variant == Variant::UttBW ? Variant::Utt : Variant::Seg;
        base.warmup_checkpoint.clear();
        std::vector<SeedOutcome> base_outcomes;
        std::vector<std::string> ckpts;
        for (uint64_t seed : seeds) {
            base.seed = seed;
            auto res = train(base, model_cfg, corpus);
            auto rep = evaluate_split(res.best, corpus.dev);
            SeedOutcome o;
            o.seed = seed;
            o.dev_utt_eer = rep.utt_eer;
            o.dev_seg_eer = rep.seg_eer;
            base_outcomes.push_back(o);
            const std::string path = work_dir + "/pretrained_" + variant_name(base.variant) + "_" +
                                     std::to_string(seed) + ".ckpt";
            write_checkpoint(path, res.best, nullptr, (uint32_t)res.record.best_epoch, 0);
            ckpts.push_back(path);
        }
        report.selected_pretrained = pick_best_pretrained(base.variant, base_outcomes);
        warmup_ckpt = ckpts[report.selected_pretrained];
    }

    for (uint64_t seed : seeds) {
        TrainSettings s = settings;
        s.seed = seed;
        s.warmup_checkpoint = is_warmup(settings.variant) ? warmup_ckpt : "";
        auto res = train(s, model_cfg, corpus);
        SeedOutcome o;
        o.seed = seed;
        auto dev = evaluate_split(res.best, corpus.dev);
        o.dev_utt_eer = dev.utt_eer;
        o.dev_seg_eer = dev.seg_eer;
        if (!corpus.eval.empty()) {
            auto ev = evaluate_split(res.best, corpus.eval);
            o.eval_utt_eer = ev.utt_eer;
            o.eval_seg_eer = ev.seg_eer;
        }
        report.per_seed.push_back(o);
    }
    for (const auto& o : report.per_seed) {
        report.mean_dev_utt_eer += o.dev_utt_eer / (double)report.per_seed.size();
        report.mean_dev_seg_eer += o.dev_seg_eer / (double)report.per_seed.size();
        report.mean_eval_utt_eer += o.eval_utt_eer / (double)report.per_seed.size();
        report.mean_eval_seg_eer += o.eval_seg_eer / (double)report.per_seed.size();
    }
    return report;
}

}  // namespace spoofdet
