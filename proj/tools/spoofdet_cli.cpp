// Command-line front end: data generation, training, scoring, evaluation,
// gradient checking and model inspection for the partial-spoof
// countermeasure library.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "spoofdet/config.hpp"
#include "spoofdet/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace spoofdet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string variant;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults apply when omitted)");
    auto* seed = cmd->add_option("--seed", args.seed, "random seed (overrides the config)");
    seed->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--variant", args.variant, "model variant: Utt Seg UttU SegU MulBS UttBW SegBW");
    cmd->add_option("--override", args.overrides, "config override(s), dotted.path=value")
        ->take_all();
    auto* out = cmd->add_option("--out", args.out_dir, "output directory");
    if (needs_out) out->required();
}

json resolve(const CommonArgs& args) {
    json cfg = args.config_path.empty() ? default_config() : load_config(args.config_path);
    for (const auto& kv : args.overrides) apply_override(cfg, kv);
    if (args.seed_set) cfg["seed"] = args.seed;
    if (!args.variant.empty()) cfg["variant"] = args.variant;
    return cfg;
}

void snapshot(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_config_snapshot((fs::path(out_dir) / "config_resolved.json").string(), cfg);
}

std::string fmt_eer(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << 100.0 * v;
    return os.str();
}

int cmd_gen_data(const CommonArgs& args) {
    json cfg = resolve(args);
    snapshot(cfg, args.out_dir);
    AppConfig app = parse_config(cfg);
    generate_corpus(app.datagen, args.out_dir);
    auto protocol = read_protocol((fs::path(args.out_dir) / "protocol.txt").string());
    std::cout << "gen-data out=" << args.out_dir << " trials=" << protocol.size()
              << " seed=" << app.datagen.seed << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir, const std::string& warmup_ckpt) {
    json cfg = resolve(args);
    AppConfig app = parse_config(cfg);
    if (!warmup_ckpt.empty()) {
        app.train.warmup_checkpoint = warmup_ckpt;
        cfg["train"]["warmup_checkpoint"] = warmup_ckpt;
    }
    snapshot(cfg, args.out_dir);
    const uint64_t hash = config_hash(cfg);

    Corpus corpus = load_corpus(data_dir, app.features);
    std::cout << "train variant=" << variant_name(app.train.variant) << " seed=" << app.train.seed
              << " train_trials=" << corpus.train.size() << " dev_trials=" << corpus.dev.size() << "\n";
    auto result = train(app.train, app.model, corpus, [](const EpochRecord& e) {
        std::cout << "epoch=" << e.epoch << " lr=" << e.lr << " train_loss=" << e.train_loss
                  << " dev_loss=" << e.dev_loss << " dev_loss_utt=" << e.dev_loss_utt
                  << " dev_loss_seg=" << e.dev_loss_seg << " wall_s=" << e.wall_s << "\n";
    });
    const std::string ckpt_path = (fs::path(args.out_dir) / "checkpoint.ckpt").string();
    write_checkpoint(ckpt_path, result.best, nullptr, (uint32_t)result.record.best_epoch, hash);
    write_run_record_csv((fs::path(args.out_dir) / "run_record.csv").string(), result.record);
    std::cout << "best_epoch=" << result.record.best_epoch << " best_dev_loss=" << result.record.best_dev_loss
              << " checkpoint=" << ckpt_path << "\n";
    return 0;
}

int cmd_score(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt_path,
              const std::string& split) {
    json cfg = resolve(args);
    snapshot(cfg, args.out_dir);
    AppConfig app = parse_config(cfg);
    auto loaded = read_checkpoint(ckpt_path);
    Corpus corpus = load_corpus(data_dir, app.features);
    const auto& trials = corpus.split(split);
    check(!trials.empty(), "score: split '" + split + "' is empty");

    std::vector<ScoreRecord> alt;
    auto records = score_split(loaded.bundle, trials, &alt);
    const std::string path = (fs::path(args.out_dir) / ("scores_" + split + ".txt")).string();
    write_score_file(path, records);
    std::cout << "score variant=" << variant_name(loaded.bundle.variant) << " split=" << split
              << " trials=" << records.size() << " file=" << path << "\n";
    if (!alt.empty()) {
        const std::string alt_path =
            (fs::path(args.out_dir) / ("scores_" + split + "_segbranch.txt")).string();
        write_score_file(alt_path, alt);
        std::cout << "score derived-vs-direct file=" << alt_path << "\n";
    }
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& scores_path,
             const std::string& split) {
    json cfg = resolve(args);
    snapshot(cfg, args.out_dir);
    auto records = read_score_file(scores_path);
    auto protocol = read_protocol((fs::path(data_dir) / "protocol.txt").string());
    std::vector<ProtocolEntry> filtered;
    for (auto& e : protocol)
        if (e.split == split) filtered.push_back(e);
    check(!filtered.empty(), "eval: no trials in split '" + split + "'");
    auto tracks = read_segment_labels((fs::path(data_dir) / "segment_labels.txt").string());

    ScorePools pools;
    auto report = evaluate_scores(records, filtered, tracks, &pools);
    write_report((fs::path(args.out_dir) / "report.txt").string(),
                 (fs::path(args.out_dir) / "report.csv").string(), report);
    write_det_points((fs::path(args.out_dir) / "det_utterance.csv").string(), pools.utt_bona,
                     pools.utt_spoof);
    write_det_points((fs::path(args.out_dir) / "det_segmental.csv").string(), pools.seg_bona,
                     pools.seg_spoof);
    std::cout << "eval split=" << split << " utt_eer=" << fmt_eer(report.utt_eer)
              << "% seg_eer=" << fmt_eer(report.seg_eer) << "% trials=" << report.n_trials
              << " frames=" << report.n_frames << "\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args, int n_seeds) {
    if (!args.out_dir.empty()) snapshot(resolve(args), args.out_dir);
    auto results = run_gradcheck_suite(n_seeds);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " op=" << r.name << " max_rel_err=" << std::scientific
                  << r.max_rel_err << std::defaultfloat << " tolerance=" << r.tolerance << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "gradcheck: all operators pass" : "gradcheck: FAILURES above") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_describe(const CommonArgs& args) {
    json cfg = resolve(args);
    AppConfig app = parse_config(cfg);
    std::cout << describe_model(app.train.variant, app.model);
    if (!args.out_dir.empty()) {
        snapshot(cfg, args.out_dir);
        std::ofstream f(fs::path(args.out_dir) / "layer_table.txt");
        f << describe_model(app.train.variant, app.model);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"partial-spoof countermeasure toolkit"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, score_args, eval_args, grad_args, desc_args;
    std::string data_dir, warmup_ckpt, ckpt_path, scores_path, split = "dev";
    int gradcheck_seeds = 5;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
    add_common(gen, gen_args, true);

    auto* tr = app.add_subcommand("train", "train one model variant");
    add_common(tr, train_args, true);
    tr->add_option("--data", data_dir, "corpus directory")->required();
    tr->add_option("--warmup-ckpt", warmup_ckpt, "pre-trained checkpoint for UttBW/SegBW");

    auto* sc = app.add_subcommand("score", "score a corpus split with a checkpoint");
    add_common(sc, score_args, true);
    sc->add_option("--data", data_dir, "corpus directory")->required();
    sc->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    sc->add_option("--split", split, "train|dev|eval");

    auto* ev = app.add_subcommand("eval", "compute both-level EERs from a score file");
    add_common(ev, eval_args, true);
    ev->add_option("--data", data_dir, "corpus directory")->required();
    ev->add_option("--scores", scores_path, "score file")->required();
    ev->add_option("--split", split, "train|dev|eval");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for all operators");
    add_common(gc, grad_args, false);
    gc->add_option("--seeds", gradcheck_seeds, "seeds per operator");

    auto* de = app.add_subcommand("describe-model", "print the realized layer table");
    add_common(de, desc_args, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (tr->parsed()) return cmd_train(train_args, data_dir, warmup_ckpt);
        if (sc->parsed()) return cmd_score(score_args, data_dir, ckpt_path, split);
        if (ev->parsed()) return cmd_eval(eval_args, data_dir, scores_path, split);
        if (gc->parsed()) return cmd_gradcheck(grad_args, gradcheck_seeds);
        if (de->parsed()) return cmd_describe(desc_args);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ';';
        std::cerr << "error: cmd=" << app.get_subcommands()[0]->get_name() << " msg=\"" << msg << "\"\n";
        return 1;
    }
    return 0;
}
