#pragma once

// The CLI's strict-schema run configuration: one JSON document covering
// model, ssl, optimizer, schedule, data, and task sections. Unknown keys are
// fatal; a content hash of the parsed document is embedded in outputs.

#include <json.hpp>

#include "anysat/heads.hpp"
#include "anysat/ssl.hpp"

namespace anysat {

struct TaskConfig {
    std::string mode = "probe";             // scratch | finetune | probe
    std::string task = "classify";          // classify | segment | changedet
    std::string label_mode = "multiclass";  // multiclass | multilabel
    std::string m_ref;
    size_t n_classes = 0;
    size_t epochs = 3;
    double patch_m = 0;
    size_t head_hidden = 0;
    bool naive_semseg = false;
    double lr = 1e-3;
};

struct RunConfig {
    ModelConfig model;
    SslConfig ssl;
    AdamWConfig optim;
    LrScheduleConfig schedule;
    uint64_t seed = 0;
    DatasetSpec dataset;                  // synth-data only
    std::vector<ModalitySpec> modalities; // registry entries
    SyntheticConfig synth;
    TaskConfig task;
    nlohmann::json raw;                   // parsed document, for hashing

    ModalityRegistry registry() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

ModelConfig model_from_json(const nlohmann::json& j);
SslConfig ssl_from_json(const nlohmann::json& j);
AdamWConfig adamw_from_json(const nlohmann::json& j);
LrScheduleConfig schedule_from_json(const nlohmann::json& j);
TaskConfig task_from_json(const nlohmann::json& j);

}  // namespace anysat
