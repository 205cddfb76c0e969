#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "anysat/checkpoint.hpp"
#include "anysat/runconfig.hpp"
#include "anysat/serde.hpp"

using namespace anysat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("anysat_cli_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

ParamTree random_tree(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    ParamTree tree;
    auto fill = [&](const std::string& name, std::vector<size_t> shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        std::vector<double> data(n);
        for (double& v : data) v = dist(rng);
        tree.create(name, Tensor::from(std::move(shape), std::move(data), true));
    };
    fill("proj/s2/lin/w", {3, 8});
    fill("proj/s2/lin/b", {8});
    fill("trans/cls", {8});
    fill("comb/query", {8});
    fill("ssl/mask", {8});
    return tree;
}

json minimal_run_config() {
    return json::parse(R"({
        "seed": 11,
        "model": {"embed_width": 16, "heads": 2},
        "ssl": {"tau": 0.2, "random_drop": true},
        "optim": {"lr": 0.001, "weight_decay": 0.05},
        "schedule": {"kind": "warmup-cosine", "base_lr": 0.001, "warmup_steps": 5,
                     "total_steps": 50},
        "modalities": [
            {"name": "s2", "pixel_m": 10, "channels": 4, "has_dates": true, "t_min": 2,
             "t_max": 4},
            {"name": "aerial", "pixel_m": 5, "channels": 3, "delta_px": 2}
        ],
        "dataset": {"name": "demo", "tile_m": 40, "modalities": ["s2", "aerial"],
                    "patch_sizes": [10, 20], "num_tiles": 4},
        "synthetic": {"num_classes": 3, "noise_std": 0.1},
        "task": {"mode": "probe", "task": "classify", "n_classes": 3, "epochs": 2, "lr": 0.01}
    })");
}

}  // namespace

TEST_CASE("checkpoint round-trip is bitwise lossless") {
    TempDir tmp;
    ParamTree a = random_tree(1), b = random_tree(2);
    json meta = {{"config_hash", "deadbeefcafef00d"}, {"step", 42}, {"seed", 7}};
    std::string path = tmp.file("x.ckpt");
    save_checkpoint(path, meta, {{"student", &a}, {"teacher", &b}});

    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.metadata == meta);
    REQUIRE(ck.trees.size() == 2);
    for (const auto& [name, orig] : {std::pair{"student", &a}, std::pair{"teacher", &b}}) {
        const ParamTree& loaded = ck.trees.at(name);
        CHECK(loaded.names() == orig->names());
        for (const std::string& leaf : orig->names()) {
            CHECK(loaded.get(leaf).shape() == orig->get(leaf).shape());
            CHECK(loaded.get(leaf).data() == orig->get(leaf).data());
        }
    }
}

TEST_CASE("checkpoint save then save again produces identical bytes") {
    TempDir tmp;
    ParamTree a = random_tree(3);
    json meta = {{"step", 1}};
    save_checkpoint(tmp.file("a.ckpt"), meta, {{"t", &a}});
    save_checkpoint(tmp.file("b.ckpt"), meta, {{"t", &a}});
    std::ifstream fa(tmp.file("a.ckpt"), std::ios::binary);
    std::ifstream fb(tmp.file("b.ckpt"), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
}

TEST_CASE("corrupt checkpoints are rejected") {
    TempDir tmp;
    ParamTree a = random_tree(4);
    std::string path = tmp.file("x.ckpt");
    save_checkpoint(path, {{"step", 0}}, {{"t", &a}});

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("WRONGMAG", 8);
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
    }
    SUBCASE("truncated payload") {
        auto size = fs::file_size(path);
        fs::resize_file(path, size - 11);
        CHECK_THROWS_AS(load_checkpoint(path), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(tmp.file("nope.ckpt")), IoError);
    }
}

TEST_CASE("f32 records are accepted and widened") {
    TempDir tmp;
    std::string path = tmp.file("f32.ckpt");
    {
        std::ofstream os(path, std::ios::binary);
        os.write("ANYSATCK", 8);
        uint32_t version = 1;
        os.write(reinterpret_cast<char*>(&version), 4);
        std::string meta = "{}";
        uint64_t len = meta.size();
        os.write(reinterpret_cast<char*>(&len), 8);
        os.write(meta.data(), 2);
        std::string name = "t/w";
        uint32_t nlen = static_cast<uint32_t>(name.size());
        os.write(reinterpret_cast<char*>(&nlen), 4);
        os.write(name.data(), 3);
        os.put(0);  // f32
        os.put(1);  // rank 1
        uint64_t dim = 2;
        os.write(reinterpret_cast<char*>(&dim), 8);
        float vals[2] = {1.5f, -0.25f};
        os.write(reinterpret_cast<char*>(vals), 8);
    }
    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.trees.at("t").get("w").data() == std::vector<double>{1.5, -0.25});
}

TEST_CASE("config hash is stable and content sensitive") {
    json a = minimal_run_config();
    json b = minimal_run_config();
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b["seed"] = 12;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("run config parses every section") {
    RunConfig cfg = run_config_from_json(minimal_run_config());
    CHECK(cfg.seed == 11);
    CHECK(cfg.model.embed_width == 16);
    CHECK(cfg.model.heads == 2);
    CHECK(cfg.model.predictor_blocks == 3);
    CHECK(cfg.ssl.tau == 0.2);
    CHECK(cfg.ssl.random_drop);
    CHECK(cfg.ssl.ema_m == 0.996);
    CHECK(cfg.optim.lr == 0.001);
    CHECK(cfg.optim.weight_decay == 0.05);
    CHECK(cfg.schedule.kind == LrScheduleConfig::Kind::WarmupCosine);
    CHECK(cfg.schedule.warmup_steps == 5);
    CHECK(cfg.modalities.size() == 2);
    CHECK(cfg.registry().at("aerial").delta_px == 2);
    CHECK(cfg.dataset.patch_sizes == std::vector<double>{10, 20});
    CHECK(cfg.synth.num_classes == 3);
    CHECK(cfg.task.mode == "probe");
    CHECK(cfg.task.n_classes == 3);
}

TEST_CASE("run config defaults carry the pretraining constants") {
    RunConfig cfg = run_config_from_json(json::object());
    CHECK(cfg.ssl.tau == 0.1);
    CHECK(cfg.ssl.ema_m == 0.996);
    CHECK(cfg.optim.lr == 5e-5);
    CHECK(cfg.ssl.lambda_con == 1.0);
}

TEST_CASE("unknown keys are fatal at every level") {
    json j = minimal_run_config();
    SUBCASE("top level") { j["extra"] = 1; }
    SUBCASE("model") { j["model"]["width"] = 1; }
    SUBCASE("ssl") { j["ssl"]["temperature"] = 0.1; }
    SUBCASE("optim") { j["optim"]["momentum"] = 0.9; }
    SUBCASE("schedule") { j["schedule"]["gamma"] = 0.1; }
    SUBCASE("task") { j["task"]["classes"] = 3; }
    SUBCASE("modality") { j["modalities"][0]["resolution"] = 10; }
    SUBCASE("dataset") { j["dataset"]["size"] = 40; }
    SUBCASE("synthetic") { j["synthetic"]["classes"] = 3; }
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("invalid enum strings are rejected") {
    json j = minimal_run_config();
    SUBCASE("schedule kind") { j["schedule"]["kind"] = "linear"; }
    SUBCASE("task mode") { j["task"]["mode"] = "freeze"; }
    SUBCASE("task name") { j["task"]["task"] = "detect"; }
    SUBCASE("label mode") { j["task"]["label_mode"] = "soft"; }
    SUBCASE("modality role") { j["modalities"][0]["role"] = "extra"; }
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("invalid numeric settings are rejected") {
    json j = minimal_run_config();
    SUBCASE("zero lr") { j["optim"]["lr"] = 0.0; }
    SUBCASE("negative tau") { j["ssl"]["tau"] = -0.1; }
    SUBCASE("one class") { j["synthetic"]["num_classes"] = 1; }
    SUBCASE("zero total steps") { j["schedule"]["total_steps"] = 0; }
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("load_run_config reads files and reports bad ones") {
    TempDir tmp;
    std::string good = tmp.file("good.json");
    std::ofstream(good) << minimal_run_config().dump();
    CHECK(load_run_config(good).seed == 11);

    std::string bad = tmp.file("bad.json");
    std::ofstream(bad) << "{not json";
    CHECK_THROWS_AS(load_run_config(bad), ConfigError);
    CHECK_THROWS_AS(load_run_config(tmp.file("absent.json")), IoError);
}

TEST_CASE("duplicate modalities in the registry are rejected") {
    json j = minimal_run_config();
    j["modalities"][1]["name"] = "s2";
    CHECK_THROWS_AS(run_config_from_json(j).registry(), ConfigError);
}
