#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "spoofdet/config.hpp"
#include "spoofdet/train.hpp"

using namespace spoofdet;
namespace fs = std::filesystem;

namespace {

// Small corpus shared by the training tests: ~0.4 s trials (M=2).
const Corpus& micro_corpus() {
    static Corpus corpus = [] {
        SynthSpec spec;
        spec.train = {6, 6};
        spec.dev = {3, 3};
        spec.eval = {3, 3};
        spec.min_duration_s = 0.34;
        spec.max_duration_s = 0.46;
        // frames come out nearly pure, so the classes separate cleanly
        spec.min_spoof_ratio = 0.85;
        spec.max_spoof_ratio = 0.95;
        spec.seed = 7;
        auto dir = fs::temp_directory_path() / "spoofdet_micro_corpus";
        fs::remove_all(dir);
        generate_corpus(spec, dir.string());
        Corpus c = load_corpus(dir.string());
        fs::remove_all(dir);
        return c;
    }();
    return corpus;
}

std::string csv_of(const RunRecord& rec) {
    auto path = fs::temp_directory_path() / "spoofdet_runrec_tmp.csv";
    write_run_record_csv(path.string(), rec);
    std::ifstream f(path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    fs::remove(path);
    return s;
}

}  // namespace

TEST_CASE("learning rate halves every ten epochs") {
    for (int e = 0; e < 10; ++e) REQUIRE(lr_at_epoch(3e-4, 10, e) == 3e-4);
    for (int e = 10; e < 20; ++e) REQUIRE(lr_at_epoch(3e-4, 10, e) == 1.5e-4);
    for (int e = 0; e < 100; ++e)
        REQUIRE(lr_at_epoch(3e-4, 10, e) == Catch::Approx(3e-4 * std::pow(2.0, -(e / 10))).epsilon(1e-12));
}

TEST_CASE("early stopping halts exactly patience epochs after the best epoch") {
    EarlyStopper s(5);
    std::vector<double> losses{1.0, 0.8, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    int stopped_at = -1;
    for (int e = 0; e < (int)losses.size(); ++e)
        if (s.update(e, losses[e])) {
            stopped_at = e;
            break;
        }
    REQUIRE(s.best_epoch() == 3);
    REQUIRE(stopped_at == 8);  // 3 + patience

    // an improvement below the 1e-6 threshold does not reset patience
    EarlyStopper s2(3);
    REQUIRE_FALSE(s2.update(0, 1.0));
    REQUIRE_FALSE(s2.update(1, 1.0 - 1e-9));
    REQUIRE_FALSE(s2.update(2, 1.0 - 2e-9));
    REQUIRE(s2.update(3, 1.0 - 3e-9));
    REQUIRE(s2.best_epoch() == 0);
}

TEST_CASE("training is deterministic: same config and seed, identical records") {
    TrainSettings settings;
    settings.variant = Variant::Seg;
    settings.seed = 5;
    settings.batch_size = 4;
    settings.max_epochs = 2;
    auto r1 = train(settings, ModelConfig{}, micro_corpus());
    auto r2 = train(settings, ModelConfig{}, micro_corpus());
    REQUIRE(csv_of(r1.record) == csv_of(r2.record));

    auto p1 = fs::temp_directory_path() / "spoofdet_det_a.ckpt";
    auto p2 = fs::temp_directory_path() / "spoofdet_det_b.ckpt";
    write_checkpoint(p1.string(), r1.best, nullptr, 0, 1);
    write_checkpoint(p2.string(), r2.best, nullptr, 0, 1);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("recorded learning rates follow the closed form") {
    TrainSettings settings;
    settings.variant = Variant::Utt;
    settings.seed = 2;
    settings.batch_size = 6;
    settings.max_epochs = 12;
    auto res = train(settings, ModelConfig{}, micro_corpus());
    REQUIRE(res.record.epochs.size() == 12);
    for (const auto& e : res.record.epochs)
        REQUIRE(e.lr == lr_at_epoch(settings.lr_init, settings.lr_halving_period_epochs, e.epoch));
    // single-task utterance run records no segment part
    for (const auto& e : res.record.epochs) REQUIRE(e.dev_loss_seg == 0.0);
}

TEST_CASE("dev loss on the separable toy corpus falls below 0.1 within 50 epochs") {
    TrainSettings settings;
    settings.variant = Variant::Seg;
    settings.seed = 3;
    settings.batch_size = 2;
    settings.max_epochs = 50;
    settings.lr_init = 1e-3;
    double best_seen = 1e9;
    auto res = train(
        settings, ModelConfig{}, micro_corpus(),
        [&](const EpochRecord& e) { best_seen = std::min(best_seen, e.dev_loss); },
        [&](int, const ModelBundle<float>&) { return best_seen < 0.1; });
    REQUIRE(best_seen < 0.1);
}

TEST_CASE("warm-up expansion copies the original branch bitwise") {
    TrainSettings settings;
    settings.seed = 11;
    settings.batch_size = 4;
    settings.max_epochs = 2;

    SECTION("Seg -> SegBW keeps segment scores identical") {
        settings.variant = Variant::Seg;
        auto pre = train(settings, ModelConfig{}, micro_corpus());
        auto expanded = warmup_expand(pre.best, Variant::SegBW, 99);
        for (const auto& t : micro_corpus().dev) {
            auto [a, a_alt] = score_trial(pre.best, t.feats, t.id);
            auto [b, b_alt] = score_trial(expanded, t.feats, t.id);
            REQUIRE(b_alt.has_value());
            REQUIRE(a.seg_scores == b.seg_scores);       // bitwise
            REQUIRE(a.utt_score == b_alt->utt_score);    // min over the same frames
        }
    }
    SECTION("Utt -> UttBW keeps utterance scores identical") {
        settings.variant = Variant::Utt;
        auto pre = train(settings, ModelConfig{}, micro_corpus());
        auto expanded = warmup_expand(pre.best, Variant::UttBW, 99);
        for (const auto& t : micro_corpus().dev) {
            auto [a, a_alt] = score_trial(pre.best, t.feats, t.id);
            auto [b, b_alt] = score_trial(expanded, t.feats, t.id);
            REQUIRE(a.utt_score == b.utt_score);
        }
    }
    SECTION("new head parameters depend on the seed, copied ones do not") {
        settings.variant = Variant::Seg;
        auto pre = train(settings, ModelConfig{}, micro_corpus());
        auto e1 = warmup_expand(pre.best, Variant::SegBW, 1);
        auto e2 = warmup_expand(pre.best, Variant::SegBW, 2);
        REQUIRE(e1.classes("utt").vec() != e2.classes("utt").vec());
        REQUIRE(e1.classes("seg").vec() == e2.classes("seg").vec());
        for (auto& [name, t] : pre.best.params) REQUIRE(e1.params.at(name).vec() == t.vec());
    }
    SECTION("direction mismatch is an error") {
        settings.variant = Variant::Seg;
        auto pre = train(settings, ModelConfig{}, micro_corpus());
        REQUIRE_THROWS(warmup_expand(pre.best, Variant::UttBW, 1));
    }
}

TEST_CASE("train validates warm-up checkpoints and segment labels") {
    TrainSettings settings;
    settings.variant = Variant::UttBW;
    settings.max_epochs = 1;
    REQUIRE_THROWS(train(settings, ModelConfig{}, micro_corpus()));  // no checkpoint

    settings.variant = Variant::Seg;
    settings.warmup_checkpoint = "something.ckpt";
    REQUIRE_THROWS(train(settings, ModelConfig{}, micro_corpus()));  // unexpected checkpoint

    settings.warmup_checkpoint.clear();
    Corpus stripped = micro_corpus();
    for (auto& t : stripped.train) t.frame_labels.clear();
    REQUIRE_THROWS(train(settings, ModelConfig{}, stripped));  // segment labels gone

    // the utterance-only variant does not need them
    settings.variant = Variant::Utt;
    settings.max_epochs = 1;
    REQUIRE_NOTHROW(train(settings, ModelConfig{}, stripped));
}

TEST_CASE("fused-loss gradients reach both heads; single parts stay isolated") {
    auto bundle = build_model<float>(Variant::MulBS, ModelConfig{}, 21);
    bundle.set_all_requires_grad(true);
    const auto& trials = micro_corpus().train;
    auto batches = train_detail::bucket_batches(trials, 4);
    auto batch = train_detail::assemble(trials, batches[0]);

    auto grad_norm = [](const Tensor<float>& g) {
        double n = 0;
        for (int64_t i = 0; i < g.numel(); ++i) n += (double)g.data()[i] * g.data()[i];
        return n;
    };

    {
        Tape<float> tape;
        std::mt19937_64 rng(1);
        std::vector<int64_t> emb_lens;
        auto h = bundle.embeddings(batch.x, batch.feat_lens, true, &rng, &emb_lens);
        auto loss = train_detail::batch_loss(bundle, h, emb_lens, batch, 1.0);
        tape.backward(loss.total);
        REQUIRE(grad_norm(tape.grad(bundle.classes("utt"))) > 0.0);
        REQUIRE(grad_norm(tape.grad(bundle.classes("seg"))) > 0.0);
        REQUIRE(grad_norm(tape.grad(bundle.params.at("Conv_0.w"))) > 0.0);
    }
    {
        // utterance part alone: the segment head's class vectors get nothing
        Tape<float> tape;
        std::mt19937_64 rng(1);
        tape.watch(bundle.classes("seg"));
        std::vector<int64_t> emb_lens;
        auto h = bundle.embeddings(batch.x, batch.feat_lens, true, &rng, &emb_lens);
        auto [o, cos_u] = bundle.utterance_branch(h, emb_lens);
        tape.backward(loss_utt(cos_u, batch.utt_labels));
        REQUIRE(grad_norm(tape.grad(bundle.classes("seg"))) == 0.0);
        REQUIRE(grad_norm(tape.grad(bundle.classes("utt"))) > 0.0);
    }
}

TEST_CASE("checkpoint round trip preserves everything bitwise") {
    auto bundle = build_model<float>(Variant::MulBS, ModelConfig{}, 31);
    std::vector<AdamState<float>> adam;
    std::mt19937_64 rng(5);
    for (auto& [name, p] : bundle.params) {
        auto s = adam_init(p, 2.5e-4f);
        s.t = 17;
        for (int64_t i = 0; i < s.m.numel(); ++i) {
            s.m.data()[i] = (float)init::uniform01(rng);
            s.v.data()[i] = (float)init::uniform01(rng);
        }
        adam.push_back(std::move(s));
    }
    auto path = fs::temp_directory_path() / "spoofdet_ckpt_roundtrip.ckpt";
    write_checkpoint(path.string(), bundle, &adam, 23, 0xdeadbeef12345678ULL);
    auto loaded = read_checkpoint(path.string());
    REQUIRE(loaded.epoch == 23);
    REQUIRE(loaded.config_hash == 0xdeadbeef12345678ULL);
    REQUIRE(loaded.bundle.variant == Variant::MulBS);
    REQUIRE(loaded.has_adam);
    auto it = loaded.bundle.params.begin();
    size_t pi = 0;
    for (auto& [name, p] : bundle.params) {
        REQUIRE(it->first == name);
        REQUIRE(it->second.vec() == p.vec());
        REQUIRE(loaded.adam[pi].m.vec() == adam[pi].m.vec());
        REQUIRE(loaded.adam[pi].v.vec() == adam[pi].v.vec());
        REQUIRE(loaded.adam[pi].t == 17);
        ++it;
        ++pi;
    }
    auto bit = loaded.bundle.buffers.begin();
    for (auto& [name, b] : bundle.buffers) {
        REQUIRE(bit->second.vec() == b.vec());
        ++bit;
    }
    fs::remove(path);
}

TEST_CASE("run record CSV has the documented columns") {
    RunRecord rec;
    rec.epochs.push_back({0, 3e-4, 1.5, 1.25, 0.75, 0.5, 9.0});
    auto s = csv_of(rec);
    REQUIRE(s.rfind("epoch,lr,train_loss,dev_loss,dev_loss_utt,dev_loss_seg\n", 0) == 0);
    REQUIRE(s.find("9.0") == std::string::npos);  // wall clock is not serialized
}

TEST_CASE("multi-seed protocol aggregates means and selects pre-trained models") {
    SECTION("selection picks argmin dev EER of the matching level") {
        std::vector<SeedOutcome> outcomes(3);
        outcomes[0].dev_utt_eer = 0.3;
        outcomes[0].dev_seg_eer = 0.1;
        outcomes[1].dev_utt_eer = 0.1;
        outcomes[1].dev_seg_eer = 0.3;
        outcomes[2].dev_utt_eer = 0.2;
        outcomes[2].dev_seg_eer = 0.2;
        REQUIRE(pick_best_pretrained(Variant::Utt, outcomes) == 1);
        REQUIRE(pick_best_pretrained(Variant::Seg, outcomes) == 0);
    }
    SECTION("one seed: report equals the single run; means are hand averages") {
        TrainSettings settings;
        settings.variant = Variant::Seg;
        settings.batch_size = 4;
        settings.max_epochs = 2;
        auto rep = multi_seed_protocol(settings, ModelConfig{}, micro_corpus(), {5});
        REQUIRE(rep.per_seed.size() == 1);
        REQUIRE(rep.mean_dev_utt_eer == rep.per_seed[0].dev_utt_eer);
        REQUIRE(rep.mean_dev_seg_eer == rep.per_seed[0].dev_seg_eer);

        auto rep2 = multi_seed_protocol(settings, ModelConfig{}, micro_corpus(), {5, 6});
        REQUIRE(rep2.per_seed.size() == 2);
        REQUIRE(rep2.mean_dev_seg_eer ==
                Catch::Approx((rep2.per_seed[0].dev_seg_eer + rep2.per_seed[1].dev_seg_eer) / 2.0));
    }
}

TEST_CASE("config: defaults, overrides, unknown keys, hashing") {
    auto cfg = resolve_config(json{{"variant", "MulBS"}});
    REQUIRE(cfg.at("train").at("batch_size").get<int>() == 8);
    REQUIRE(cfg.at("variant").get<std::string>() == "MulBS");

    apply_override(cfg, "train.batch_size=4");
    REQUIRE(cfg.at("train").at("batch_size").get<int>() == 4);
    apply_override(cfg, "model.use_se=false");
    REQUIRE(cfg.at("model").at("use_se").get<bool>() == false);
    REQUIRE_THROWS(apply_override(cfg, "train.nonsense=1"));
    REQUIRE_THROWS(resolve_config(json{{"varian", "Seg"}}));

    auto h1 = config_hash(cfg);
    apply_override(cfg, "seed=2");
    REQUIRE(config_hash(cfg) != h1);

    auto parsed = parse_config(cfg);
    REQUIRE(parsed.train.variant == Variant::MulBS);
    REQUIRE(parsed.train.batch_size == 4);
    REQUIRE(parsed.model.use_se == false);
    REQUIRE(parsed.model.feat_dim == 60);
    REQUIRE(parsed.datagen.seed == 2);
}
