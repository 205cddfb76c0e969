#include "anysat/serde.hpp"

#include <algorithm>
#include <fstream>

#include "anysat/runconfig.hpp"

namespace anysat {

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(context + ": unknown key \"" + key + "\"");
    }
}

json to_json(const ModalitySpec& m) {
    json j;
    j["name"] = m.name;
    j["pixel_m"] = m.pixel_m;
    j["t_min"] = m.t_min;
    j["t_max"] = m.t_max;
    j["channels"] = m.channels;
    j["delta_px"] = m.delta_px;
    j["role"] = m.role == ModalitySpec::Role::Context ? "context" : "normal";
    j["has_dates"] = m.has_dates;
    return j;
}

ModalitySpec modality_from_json(const json& j) {
    reject_unknown_keys(
        j, {"name", "pixel_m", "t_min", "t_max", "channels", "delta_px", "role", "has_dates"},
        "modality");
    ModalitySpec m;
    m.name = j.at("name").get<std::string>();
    m.pixel_m = j.at("pixel_m").get<double>();
    if (j.contains("t_min")) m.t_min = j.at("t_min").get<size_t>();
    if (j.contains("t_max")) m.t_max = j.at("t_max").get<size_t>();
    m.channels = j.at("channels").get<size_t>();
    if (j.contains("delta_px")) m.delta_px = j.at("delta_px").get<size_t>();
    if (j.contains("role")) {
        std::string role = j.at("role").get<std::string>();
        if (role == "context")
            m.role = ModalitySpec::Role::Context;
        else if (role == "normal")
            m.role = ModalitySpec::Role::Normal;
        else
            throw ConfigError("modality " + m.name + ": unknown role \"" + role + "\"");
    }
    if (j.contains("has_dates")) m.has_dates = j.at("has_dates").get<bool>();
    return m;
}

json to_json(const DatasetSpec& d) {
    json j;
    j["name"] = d.name;
    j["tile_m"] = d.tile_m;
    j["modalities"] = d.modalities;
    j["batch_size"] = d.batch_size;
    j["patch_sizes"] = d.patch_sizes;
    j["num_tiles"] = d.num_tiles;
    return j;
}

DatasetSpec dataset_from_json(const json& j) {
    reject_unknown_keys(j, {"name", "tile_m", "modalities", "batch_size", "patch_sizes", "num_tiles"},
                        "dataset");
    DatasetSpec d;
    d.name = j.at("name").get<std::string>();
    d.tile_m = j.at("tile_m").get<double>();
    d.modalities = j.at("modalities").get<std::vector<std::string>>();
    if (j.contains("batch_size")) d.batch_size = j.at("batch_size").get<size_t>();
    d.patch_sizes = j.at("patch_sizes").get<std::vector<double>>();
    if (j.contains("num_tiles")) d.num_tiles = j.at("num_tiles").get<size_t>();
    return d;
}

json to_json(const SyntheticConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["num_classes"] = c.num_classes;
    j["noise_std"] = c.noise_std;
    j["mixing_seed"] = c.mixing_seed;
    j["temporal_amplitude"] = c.temporal_amplitude;
    j["label_mode"] = c.label_mode;
    return j;
}

SyntheticConfig synthetic_from_json(const json& j) {
    reject_unknown_keys(
        j, {"seed", "num_classes", "noise_std", "mixing_seed", "temporal_amplitude", "label_mode"},
        "synthetic config");
    SyntheticConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<size_t>();
    if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
    if (j.contains("mixing_seed")) c.mixing_seed = j.at("mixing_seed").get<uint64_t>();
    if (j.contains("temporal_amplitude"))
        c.temporal_amplitude = j.at("temporal_amplitude").get<double>();
    if (j.contains("label_mode")) c.label_mode = j.at("label_mode").get<std::string>();
    validate_synthetic_config(c);
    return c;
}

ModelConfig model_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"embed_width", "heads", "encoder_blocks", "combiner_blocks",
                         "predictor_blocks", "ltae_heads", "ltae_key_width", "date_enc_width"},
                        "model");
    ModelConfig c;
    if (j.contains("embed_width")) c.embed_width = j.at("embed_width").get<size_t>();
    if (j.contains("heads")) c.heads = j.at("heads").get<size_t>();
    if (j.contains("encoder_blocks")) c.encoder_blocks = j.at("encoder_blocks").get<size_t>();
    if (j.contains("combiner_blocks")) c.combiner_blocks = j.at("combiner_blocks").get<size_t>();
    if (j.contains("predictor_blocks")) c.predictor_blocks = j.at("predictor_blocks").get<size_t>();
    if (j.contains("ltae_heads")) c.ltae_heads = j.at("ltae_heads").get<size_t>();
    if (j.contains("ltae_key_width")) c.ltae_key_width = j.at("ltae_key_width").get<size_t>();
    if (j.contains("date_enc_width")) c.date_enc_width = j.at("date_enc_width").get<size_t>();
    c.validate();
    return c;
}

SslConfig ssl_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"tau", "ema_m", "lambda_con", "num_rects", "area_min", "area_max",
                         "aspect_min", "aspect_max", "mask_rate", "resample_limit", "random_drop",
                         "no_contrastive"},
                        "ssl");
    SslConfig c;
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("ema_m")) c.ema_m = j.at("ema_m").get<double>();
    if (j.contains("lambda_con")) c.lambda_con = j.at("lambda_con").get<double>();
    if (j.contains("num_rects")) c.num_rects = j.at("num_rects").get<size_t>();
    if (j.contains("area_min")) c.area_min = j.at("area_min").get<double>();
    if (j.contains("area_max")) c.area_max = j.at("area_max").get<double>();
    if (j.contains("aspect_min")) c.aspect_min = j.at("aspect_min").get<double>();
    if (j.contains("aspect_max")) c.aspect_max = j.at("aspect_max").get<double>();
    if (j.contains("mask_rate")) c.mask_rate = j.at("mask_rate").get<double>();
    if (j.contains("resample_limit")) c.resample_limit = j.at("resample_limit").get<size_t>();
    if (j.contains("random_drop")) c.random_drop = j.at("random_drop").get<bool>();
    if (j.contains("no_contrastive")) c.no_contrastive = j.at("no_contrastive").get<bool>();
    c.validate();
    return c;
}

AdamWConfig adamw_from_json(const json& j) {
    reject_unknown_keys(j, {"lr", "beta1", "beta2", "eps", "weight_decay"}, "optim");
    AdamWConfig c;
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (c.lr <= 0) throw ConfigError("optim: lr must be positive");
    return c;
}

LrScheduleConfig schedule_from_json(const json& j) {
    reject_unknown_keys(
        j, {"kind", "base_lr", "min_lr", "warmup_steps", "total_steps", "patience", "factor"},
        "schedule");
    LrScheduleConfig c;
    if (j.contains("kind")) {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "constant")
            c.kind = LrScheduleConfig::Kind::Constant;
        else if (kind == "warmup-cosine")
            c.kind = LrScheduleConfig::Kind::WarmupCosine;
        else if (kind == "plateau")
            c.kind = LrScheduleConfig::Kind::ReduceOnPlateau;
        else
            throw ConfigError("schedule: unknown kind \"" + kind + "\"");
    }
    if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
    if (j.contains("min_lr")) c.min_lr = j.at("min_lr").get<double>();
    if (j.contains("warmup_steps")) c.warmup_steps = j.at("warmup_steps").get<size_t>();
    if (j.contains("total_steps")) c.total_steps = j.at("total_steps").get<size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<size_t>();
    if (j.contains("factor")) c.factor = j.at("factor").get<double>();
    if (c.base_lr <= 0 || c.min_lr <= 0)
        throw ConfigError("schedule: learning rates must be positive");
    if (c.total_steps == 0) throw ConfigError("schedule: total_steps must be positive");
    return c;
}

TaskConfig task_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"mode", "task", "label_mode", "m_ref", "n_classes", "epochs", "patch_m",
                         "head_hidden", "naive_semseg", "lr"},
                        "task");
    TaskConfig c;
    if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
    if (j.contains("task")) c.task = j.at("task").get<std::string>();
    if (j.contains("label_mode")) c.label_mode = j.at("label_mode").get<std::string>();
    if (j.contains("m_ref")) c.m_ref = j.at("m_ref").get<std::string>();
    if (j.contains("n_classes")) c.n_classes = j.at("n_classes").get<size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<size_t>();
    if (j.contains("patch_m")) c.patch_m = j.at("patch_m").get<double>();
    if (j.contains("head_hidden")) c.head_hidden = j.at("head_hidden").get<size_t>();
    if (j.contains("naive_semseg")) c.naive_semseg = j.at("naive_semseg").get<bool>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (c.mode != "scratch" && c.mode != "finetune" && c.mode != "probe")
        throw ConfigError("task: unknown mode \"" + c.mode + "\"");
    if (c.task != "classify" && c.task != "segment" && c.task != "changedet")
        throw ConfigError("task: unknown task \"" + c.task + "\"");
    if (c.label_mode != "multiclass" && c.label_mode != "multilabel")
        throw ConfigError("task: unknown label_mode \"" + c.label_mode + "\"");
    if (c.lr <= 0) throw ConfigError("task: lr must be positive");
    return c;
}

ModalityRegistry RunConfig::registry() const {
    ModalityRegistry reg;
    for (const ModalitySpec& m : modalities) {
        if (!reg.emplace(m.name, m).second)
            throw ConfigError("run config: duplicate modality \"" + m.name + "\"");
    }
    return reg;
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown_keys(
        j, {"model", "ssl", "optim", "schedule", "seed", "dataset", "modalities", "synthetic",
            "task"},
        "run config");
    RunConfig c;
    c.raw = j;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("ssl")) c.ssl = ssl_from_json(j.at("ssl"));
    if (j.contains("optim")) c.optim = adamw_from_json(j.at("optim"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("modalities")) {
        if (!j.at("modalities").is_array())
            throw ConfigError("run config: modalities must be an array");
        for (const json& m : j.at("modalities")) c.modalities.push_back(modality_from_json(m));
    }
    if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("synthetic")) c.synth = synthetic_from_json(j.at("synthetic"));
    if (j.contains("task")) c.task = task_from_json(j.at("task"));
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_run_config: cannot open " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("load_run_config: " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace anysat
