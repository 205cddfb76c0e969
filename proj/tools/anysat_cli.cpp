// anysat: synthetic data generation, pretraining, downstream adaptation, and
// evaluation over the checkpoint and tile formats defined by the library.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "anysat/checkpoint.hpp"
#include "anysat/heads.hpp"
#include "anysat/runconfig.hpp"
#include "anysat/serde.hpp"
#include "anysat/ssl.hpp"

namespace {

using anysat::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

// FNV-1a over leaf names and raw f64 bits, independent of file layout.
std::string param_hash(const anysat::ParamTree& tree) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const std::string& name : tree.names()) {
        mix(name.data(), name.size());
        const std::vector<double>& data = tree.get(name).data();
        mix(data.data(), data.size() * sizeof(double));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

anysat::RunConfig load_config(const std::string& path) {
    anysat::RunConfig cfg = anysat::load_run_config(path);
    if (const char* env = std::getenv("ANYSAT_SEED")) {
        cfg.seed = std::strtoull(env, nullptr, 10);
        cfg.raw["seed"] = cfg.seed;
    }
    return cfg;
}

json trace_to_json(const anysat::TraceRecord& r) {
    json j;
    j["step"] = r.step;
    j["dataset"] = r.dataset;
    j["P"] = r.patch_m;
    j["l_jepa"] = r.l_jepa;
    j["l_con"] = r.l_con;
    j["total"] = r.total;
    j["lr"] = r.lr;
    return j;
}

int cmd_synth_data(const std::string& config_path, const std::string& out_dir) {
    anysat::RunConfig cfg = load_config(config_path);
    anysat::SyntheticConfig synth = cfg.synth;
    synth.seed = cfg.seed;
    anysat::ValidatedDataset ds = anysat::validate_dataset_spec(cfg.dataset, cfg.registry());
    anysat::synth_generate(ds, synth, out_dir);
    std::cout << "dataset " << ds.spec.name << ": " << ds.spec.num_tiles << " tiles, tile_m="
              << ds.spec.tile_m << ", config_hash=" << anysat::config_hash(cfg.raw) << "\n";
    std::cout << "modalities (" << ds.modality_specs.size() << "):\n";
    for (const anysat::ModalitySpec& m : ds.modality_specs)
        std::cout << "  " << m.name << " pixel_m=" << m.pixel_m << " channels=" << m.channels
                  << " t=[" << m.t_min << "," << m.t_max << "]"
                  << (m.role == anysat::ModalitySpec::Role::Context ? " context" : "") << "\n";
    return kExitOk;
}

int cmd_pretrain(const std::string& config_path, const std::vector<std::string>& data_dirs,
                 size_t steps, const std::string& out_path, const std::string& resume_path,
                 const std::string& trace_path, const std::string& ablation) {
    if (steps == 0) throw anysat::ConfigError("pretrain: --steps must be positive");
    anysat::RunConfig cfg = load_config(config_path);
    std::string hash = anysat::config_hash(cfg.raw);

    anysat::SslConfig scfg = cfg.ssl;
    if (ablation == "random-drop")
        scfg.random_drop = true;
    else if (ablation == "no-contrastive")
        scfg.no_contrastive = true;
    else if (!ablation.empty())
        throw anysat::ConfigError("pretrain: unknown ablation \"" + ablation + "\"");

    anysat::ModalityRegistry registry = cfg.registry();
    std::vector<anysat::Dataset> datasets;
    for (const std::string& dir : data_dirs)
        datasets.push_back(anysat::open_dataset(dir, registry));

    anysat::LrScheduleConfig sched = cfg.schedule;
    if (!cfg.raw.contains("schedule")) sched.base_lr = cfg.optim.lr;

    anysat::ParamTree resume_student, resume_teacher;
    anysat::ParamTree* student_ptr = nullptr;
    anysat::ParamTree* teacher_ptr = nullptr;
    size_t start_step = 0;
    if (!resume_path.empty()) {
        anysat::LoadedCheckpoint ck = anysat::load_checkpoint(resume_path);
        if (ck.metadata.value("config_hash", "") != hash)
            std::cerr << "warning: resume checkpoint config hash "
                      << ck.metadata.value("config_hash", "?") << " differs from " << hash << "\n";
        resume_student = std::move(ck.trees.at("student"));
        resume_teacher = std::move(ck.trees.at("teacher"));
        student_ptr = &resume_student;
        teacher_ptr = &resume_teacher;
        start_step = ck.metadata.value("step", 0ULL);
    }

    std::ofstream trace;
    if (!trace_path.empty()) {
        trace.open(trace_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
        if (!trace) throw anysat::IoError("pretrain: cannot open trace file " + trace_path);
    }
    auto on_step = [&](const anysat::TraceRecord& r) {
        if (trace) trace << trace_to_json(r).dump() << "\n";
    };

    anysat::PretrainResult result =
        anysat::pretrain(datasets, cfg.model, scfg, cfg.optim, sched, steps, cfg.seed, on_step,
                         student_ptr, teacher_ptr, start_step);

    json meta;
    meta["config_hash"] = hash;
    meta["step"] = result.final_step;
    meta["seed"] = cfg.seed;
    meta["student_params"] = result.student.total_scalars();
    meta["teacher_params"] = result.teacher.total_scalars();
    meta["backbone_hash"] = param_hash(result.teacher);
    anysat::save_checkpoint(out_path, meta,
                            {{"student", &result.student}, {"teacher", &result.teacher}});
    std::cout << "pretrained " << result.final_step << " steps, final total loss "
              << (result.trace.empty() ? 0.0 : result.trace.back().total) << ", wrote " << out_path
              << "\n";
    return kExitOk;
}

anysat::AdaptConfig adapt_config_from(const anysat::RunConfig& cfg, const std::string& mode,
                                      const std::string& task) {
    anysat::AdaptConfig a;
    a.mode = mode == "scratch"    ? anysat::AdaptMode::Scratch
             : mode == "finetune" ? anysat::AdaptMode::Finetune
                                  : anysat::AdaptMode::Probe;
    a.task = task == "classify" ? anysat::AdaptTask::Classify : anysat::AdaptTask::Segment;
    a.label_mode = cfg.task.label_mode == "multilabel" ? anysat::TaskMode::Multilabel
                                                       : anysat::TaskMode::Multiclass;
    a.m_ref = cfg.task.m_ref;
    a.n_classes = task == "changedet" ? 2 : cfg.task.n_classes;
    a.epochs = cfg.task.epochs;
    a.seed = cfg.seed;
    a.patch_m = cfg.task.patch_m;
    a.head_hidden = cfg.task.head_hidden;
    a.naive_semseg = cfg.task.naive_semseg;
    a.optim = cfg.optim;
    a.optim.lr = cfg.task.lr;
    return a;
}

int cmd_adapt(const std::string& config_path, const std::string& mode, const std::string& task,
              const std::string& ckpt_path, const std::string& data_dir,
              const std::string& out_path) {
    anysat::RunConfig cfg = load_config(config_path);
    anysat::AdaptConfig acfg = adapt_config_from(cfg, mode, task);

    anysat::Dataset data = anysat::open_dataset(data_dir, cfg.registry());
    anysat::ParamTree pretrained;
    bool have_pretrained = false;
    if (!ckpt_path.empty()) {
        anysat::LoadedCheckpoint ck = anysat::load_checkpoint(ckpt_path);
        auto it = ck.trees.find("teacher");
        if (it == ck.trees.end()) it = ck.trees.find("backbone");
        if (it == ck.trees.end())
            throw anysat::IoError("adapt: checkpoint " + ckpt_path +
                                  " holds neither a teacher nor a backbone tree");
        pretrained = std::move(it->second);
        have_pretrained = true;
    } else if (mode != "scratch") {
        throw anysat::ConfigError("adapt: --ckpt is required for mode " + mode);
    }

    anysat::AdaptResult result =
        anysat::adapt(data, have_pretrained ? &pretrained : nullptr, cfg.model, acfg);

    json meta;
    meta["config_hash"] = anysat::config_hash(cfg.raw);
    meta["seed"] = cfg.seed;
    meta["backbone_hash"] = param_hash(result.backbone);
    meta["task"] = {{"mode", mode},
                    {"task", task},
                    {"label_mode", cfg.task.label_mode},
                    {"m_ref", acfg.m_ref},
                    {"n_classes", acfg.n_classes},
                    {"patch_m", acfg.patch_m},
                    {"head_hidden", acfg.head_hidden},
                    {"naive_semseg", acfg.naive_semseg}};
    meta["probe_on_random"] = result.probe_on_random;
    meta["backbone_frozen_ok"] = result.backbone_frozen_ok;
    anysat::save_checkpoint(out_path, meta,
                            {{"backbone", &result.backbone}, {"head", &result.head}});
    std::cout << "adapted (" << mode << "/" << task << "), final epoch loss "
              << result.epoch_losses.back() << ", eval accuracy " << result.eval_metrics.accuracy
              << ", wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_dir, const std::string& metrics_path,
             std::string csv_path) {
    anysat::RunConfig cfg = load_config(config_path);
    anysat::LoadedCheckpoint ck = anysat::load_checkpoint(ckpt_path);
    if (!ck.metadata.contains("task"))
        throw anysat::IoError("eval: checkpoint " + ckpt_path + " lacks task metadata");
    const json& tj = ck.metadata.at("task");

    anysat::AdaptConfig acfg =
        adapt_config_from(cfg, tj.value("mode", "probe"), tj.value("task", "classify"));
    acfg.label_mode = tj.value("label_mode", "multiclass") == std::string("multilabel")
                          ? anysat::TaskMode::Multilabel
                          : anysat::TaskMode::Multiclass;
    acfg.m_ref = tj.value("m_ref", "");
    acfg.n_classes = tj.value("n_classes", acfg.n_classes);
    acfg.patch_m = tj.value("patch_m", 0.0);
    acfg.naive_semseg = tj.value("naive_semseg", false);

    anysat::Dataset data = anysat::open_dataset(data_dir, cfg.registry());
    anysat::EvalOutput out = anysat::evaluate(data, ck.trees.at("backbone"), ck.trees.at("head"),
                                              cfg.model, acfg);

    json mj;
    mj["config_hash"] = anysat::config_hash(cfg.raw);
    mj["checkpoint_config_hash"] = ck.metadata.value("config_hash", "");
    mj["task"] = tj;
    mj["accuracy"] = out.metrics.accuracy;
    mj["weighted_f1"] = out.metrics.weighted_f1;
    mj["macro_f1"] = out.metrics.macro_f1;
    mj["miou"] = out.metrics.miou;
    mj["per_class_iou"] = out.metrics.per_class_iou;
    if (!out.pred_ml.empty()) {
        mj["pred"] = out.pred_ml;
        mj["label"] = out.label_ml;
    } else {
        mj["pred"] = out.pred;
        mj["label"] = out.label;
    }
    std::ofstream ms(metrics_path, std::ios::trunc);
    if (!ms) throw anysat::IoError("eval: cannot open " + metrics_path);
    ms << mj.dump(2) << "\n";

    if (csv_path.empty()) csv_path = metrics_path + ".csv";
    std::ofstream cs(csv_path, std::ios::trunc);
    if (!cs) throw anysat::IoError("eval: cannot open " + csv_path);
    cs << "class,iou\n";
    for (size_t c = 0; c < out.metrics.per_class_iou.size(); ++c)
        cs << c << "," << out.metrics.per_class_iou[c] << "\n";

    std::cout << "accuracy " << out.metrics.accuracy << ", weighted F1 " << out.metrics.weighted_f1
              << ", mIoU " << out.metrics.miou << ", wrote " << metrics_path << " and " << csv_path
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AnySat: multimodal Earth-observation pretraining and adaptation"};
    app.require_subcommand(1);

    std::string config_path, out_path, ckpt_path, data_dir, resume_path, trace_path, ablation;
    std::string mode, task, metrics_path, csv_path;
    std::vector<std::string> data_dirs;
    size_t steps = 0;

    CLI::App* synth = app.add_subcommand("synth-data", "Generate a synthetic dataset");
    synth->add_option("--config", config_path, "Run config JSON")->required();
    synth->add_option("--out", out_path, "Output dataset directory")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
    pre->add_option("--config", config_path, "Run config JSON")->required();
    pre->add_option("--data", data_dirs, "Dataset directories")->required()->expected(-1);
    pre->add_option("--steps", steps, "Optimizer steps")->required();
    pre->add_option("--out", out_path, "Output checkpoint")->required();
    pre->add_option("--resume", resume_path, "Checkpoint to continue from");
    pre->add_option("--trace", trace_path, "Loss trace file (line-delimited JSON)");
    pre->add_option("--ablation", ablation, "random-drop or no-contrastive");

    CLI::App* ad = app.add_subcommand("adapt", "Train a downstream head");
    ad->add_option("--config", config_path, "Run config JSON")->required();
    ad->add_option("--mode", mode, "scratch, finetune, or probe")
        ->required()
        ->check(CLI::IsMember({"scratch", "finetune", "probe"}));
    ad->add_option("--task", task, "classify, segment, or changedet")
        ->required()
        ->check(CLI::IsMember({"classify", "segment", "changedet"}));
    ad->add_option("--ckpt", ckpt_path, "Pretrained checkpoint (optional for scratch)");
    ad->add_option("--data", data_dir, "Dataset directory")->required();
    ad->add_option("--out", out_path, "Output checkpoint")->required();

    CLI::App* ev = app.add_subcommand("eval", "Evaluate an adapted checkpoint");
    ev->add_option("--config", config_path, "Run config JSON")->required();
    ev->add_option("--ckpt", ckpt_path, "Adapted checkpoint")->required();
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--metrics", metrics_path, "Metrics JSON output")->required();
    ev->add_option("--csv", csv_path, "Per-class CSV output (default: metrics path + .csv)");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth_data(config_path, out_path);
        if (pre->parsed())
            return cmd_pretrain(config_path, data_dirs, steps, out_path, resume_path, trace_path,
                                ablation);
        if (ad->parsed())
            return cmd_adapt(config_path, mode, task, ckpt_path, data_dir, out_path);
        if (ev->parsed())
            return cmd_eval(config_path, ckpt_path, data_dir, metrics_path, csv_path);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    } catch (const anysat::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const anysat::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const anysat::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const anysat::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
