#pragma once

#include <json.hpp>

#include "spoofdet/train.hpp"

namespace spoofdet {

using json = nlohmann::json;

inline json default_config() {
    return json{
        {"variant", "Seg"},
        {"seed", 1},
        {"train",
         {{"lr_init", 3e-4},
          {"lr_halving_period_epochs", 10},
          {"early_stop_patience_epochs", 70},
          {"batch_size", 8},
          {"max_epochs", 100},
          {"warmup_checkpoint", ""},
          {"loss_weight_seg", 1.0}}},
        {"model",
         {{"se_reduction", 2},
          {"use_se", true},
          {"lstm_hidden", 48},
          {"dropout", 0.5},
          {"bn_momentum", 0.1},
          {"bn_eps", 1e-5}}},
        {"features",
         {{"sample_rate", 16000},
          {"window_s", 0.020},
          {"hop_s", 0.010},
          {"fft_size", 512},
          {"n_filters", 20},
          {"n_ceps", 20},
          {"log_floor", 1e-30}}},
        {"datagen",
         {{"train_bona", 200},
          {"train_spoof", 200},
          {"dev_bona", 50},
          {"dev_spoof", 50},
          {"eval_bona", 50},
          {"eval_spoof", 50},
          {"min_duration_s", 0.60},
          {"max_duration_s", 1.00},
          {"min_spoof_ratio", 0.02},
          {"max_spoof_ratio", 0.98},
          {"rms", 0.08},
          {"harmonics", 8}}},
    };
}

namespace config_detail {

inline void reject_unknown(const json& value, const json& schema, const std::string& prefix) {
    if (!value.is_object()) return;
    for (auto it = value.begin(); it != value.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw std::runtime_error("config: unknown key '" + path + "'");
        reject_unknown(it.value(), schema.at(it.key()), path);
    }
}

inline void merge_defaults(json& value, const json& defaults) {
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
        if (!value.contains(it.key()))
            value[it.key()] = it.value();
        else if (it.value().is_object())
            merge_defaults(value[it.key()], it.value());
    }
}

}  // namespace config_detail

/// Parses and completes a config: unknown keys are rejected, missing keys
/// take their defaults.
inline json resolve_config(const json& user) {
    config_detail::reject_unknown(user, default_config(), "");
    json resolved = user;
    config_detail::merge_defaults(resolved, default_config());
    return resolved;
}

inline json load_config(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_config: cannot open " + path);
    json user;
    try {
        user = json::parse(f);
    } catch (const std::exception& e) {
        throw std::runtime_error("load_config: " + path + ": " + e.what());
    }
    return resolve_config(user);
}

/// Applies one `dotted.path=value` override. The value is parsed as JSON
/// when possible, otherwise taken as a string.
inline void apply_override(json& cfg, const std::string& kv) {
    const size_t eq = kv.find('=');
    check(eq != std::string::npos && eq > 0, "override '" + kv + "' is not key=value");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const std::exception&) {
        value = raw;
    }
    json* node = &cfg;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        check(node->contains(key), "config: unknown key '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    // re-validate types/keys against the schema shape
    config_detail::reject_unknown(cfg, default_config(), "");
}

inline uint64_t config_hash(const json& cfg) {
    const std::string s = cfg.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct AppConfig {
    TrainSettings train;
    ModelConfig model;
    LfccConfig features;
    SynthSpec datagen;
};

inline AppConfig parse_config(const json& cfg) {
    AppConfig out;
    out.train.variant = variant_from_string(cfg.at("variant").get<std::string>());
    out.train.seed = cfg.at("seed").get<uint64_t>();
    const auto& t = cfg.at("train");
    out.train.lr_init = t.at("lr_init").get<double>();
    out.train.lr_halving_period_epochs = t.at("lr_halving_period_epochs").get<int>();
    out.train.early_stop_patience_epochs = t.at("early_stop_patience_epochs").get<int>();
    out.train.batch_size = t.at("batch_size").get<int>();
    out.train.max_epochs = t.at("max_epochs").get<int>();
    out.train.warmup_checkpoint = t.at("warmup_checkpoint").get<std::string>();
    out.train.loss_weight_seg = t.at("loss_weight_seg").get<double>();
    check(out.train.batch_size >= 1 && out.train.max_epochs >= 1 && out.train.lr_init > 0 &&
              out.train.lr_halving_period_epochs >= 1 && out.train.early_stop_patience_epochs >= 1,
          "config: bad train section");

    const auto& m = cfg.at("model");
    out.model.se_reduction = m.at("se_reduction").get<int>();
    out.model.use_se = m.at("use_se").get<bool>();
    out.model.lstm_hidden = m.at("lstm_hidden").get<int>();
    out.model.dropout = m.at("dropout").get<double>();
    out.model.bn_momentum = m.at("bn_momentum").get<double>();
    out.model.bn_eps = m.at("bn_eps").get<double>();

    const auto& f = cfg.at("features");
    out.features.sample_rate = f.at("sample_rate").get<int>();
    out.features.window_s = f.at("window_s").get<double>();
    out.features.hop_s = f.at("hop_s").get<double>();
    out.features.fft_size = f.at("fft_size").get<int>();
    out.features.n_filters = f.at("n_filters").get<int>();
    out.features.n_ceps = f.at("n_ceps").get<int>();
    out.features.log_floor = f.at("log_floor").get<double>();
    out.model.feat_dim = out.features.feat_dim();

    const auto& d = cfg.at("datagen");
    out.datagen.train = {d.at("train_bona").get<int>(), d.at("train_spoof").get<int>()};
    out.datagen.dev = {d.at("dev_bona").get<int>(), d.at("dev_spoof").get<int>()};
    out.datagen.eval = {d.at("eval_bona").get<int>(), d.at("eval_spoof").get<int>()};
    out.datagen.min_duration_s = d.at("min_duration_s").get<double>();
    out.datagen.max_duration_s = d.at("max_duration_s").get<double>();
    out.datagen.min_spoof_ratio = d.at("min_spoof_ratio").get<double>();
    out.datagen.max_spoof_ratio = d.at("max_spoof_ratio").get<double>();
    out.datagen.rms = d.at("rms").get<double>();
    out.datagen.harmonics = d.at("harmonics").get<int>();
    out.datagen.sample_rate = out.features.sample_rate;
    out.datagen.seed = out.train.seed;
    return out;
}

inline void write_config_snapshot(const std::string& path, const json& cfg) {
    std::ofstream f(path);
    check(f.good(), "write_config_snapshot: cannot open " + path);
    f << cfg.dump(2) << "\n";
}

}  // namespace spoofdet
