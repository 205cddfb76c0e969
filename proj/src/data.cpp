#include "anysat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "anysat/serde.hpp"

namespace anysat {
namespace fs = std::filesystem;

namespace {

// Deterministic draws built directly on the mt19937_64 stream so generated
// bytes do not depend on the standard library's distribution internals.
uint64_t mix_seed(uint64_t seed, uint64_t tile_id) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + tile_id * 0xbf58476d1ce4e5b9ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

size_t uniform_index(std::mt19937_64& rng, size_t n) { return static_cast<size_t>(rng() % n); }

double normal01(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Class signature of one (modality, class) pair.
struct ClassSignature {
    std::vector<double> channel;  // C_m entries
    double freq = 1.0;
    double phase = 0.0;
};

std::vector<std::vector<ClassSignature>> build_signatures(const ValidatedDataset& ds,
                                                          const SyntheticConfig& cfg) {
    std::vector<std::vector<ClassSignature>> sig(ds.modality_specs.size());
    for (size_t mi = 0; mi < ds.modality_specs.size(); ++mi) {
        std::mt19937_64 rng(mix_seed(cfg.mixing_seed, 0x5157ULL * (mi + 1)));
        sig[mi].resize(cfg.num_classes);
        for (size_t k = 0; k < cfg.num_classes; ++k) {
            ClassSignature& s = sig[mi][k];
            s.channel.resize(ds.modality_specs[mi].channels);
            for (double& v : s.channel) v = normal01(rng);
            s.freq = 1.0 + static_cast<double>(k);
            s.phase = 2.0 * std::numbers::pi * uniform01(rng);
        }
    }
    return sig;
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError(std::string("corrupt header: truncated ") + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw IoError(std::string("corrupt header: truncated ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

constexpr char kTileMagic[8] = {'A', 'N', 'Y', 'S', 'A', 'T', 'T', 'L'};
constexpr uint32_t kTileVersion = 1;

}  // namespace

const ModalitySpec& ValidatedDataset::modality(const std::string& name) const {
    return modality_specs[modality_index(name)];
}

size_t ValidatedDataset::modality_index(const std::string& name) const {
    for (size_t i = 0; i < spec.modalities.size(); ++i)
        if (spec.modalities[i] == name) return i;
    throw ConfigError("dataset " + spec.name + ": unknown modality " + name);
}

const TileModality& TileSample::modality(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return m;
    throw ConfigError("tile " + std::to_string(tile_id) + ": modality " + name + " absent");
}

bool TileSample::has_modality(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return true;
    return false;
}

ValidatedDataset validate_dataset_spec(const DatasetSpec& spec, const ModalityRegistry& registry) {
    if (spec.batch_size < 1)
        throw ConfigError("dataset " + spec.name + ": batch size must be >= 1");
    if (spec.modalities.empty())
        throw ConfigError("dataset " + spec.name + ": no modalities listed");
    if (spec.patch_sizes.empty())
        throw ConfigError("dataset " + spec.name + ": no patch sizes listed");
    if (spec.tile_m <= 0) throw ConfigError("dataset " + spec.name + ": tile size must be positive");

    ValidatedDataset out;
    out.spec = spec;
    for (const auto& name : spec.modalities) {
        auto it = registry.find(name);
        if (it == registry.end())
            throw ConfigError("dataset " + spec.name + ": unknown modality " + name);
        const ModalitySpec& m = it->second;
        if (m.pixel_m <= 0 || m.channels < 1 || m.t_min < 1 || m.t_max < m.t_min)
            throw ConfigError("modality " + name + ": invalid resolution/channels/T range");
        out.modality_specs.push_back(m);
    }
    // One sub-patch MLP per modality must serve every patch size, so the
    // sub-patch side is the smallest clamped value across all of P_d.
    std::vector<size_t> delta(out.modality_specs.size());
    for (size_t mi = 0; mi < out.modality_specs.size(); ++mi) {
        const ModalitySpec& m = out.modality_specs[mi];
        size_t d = m.delta_px;
        if (m.role != ModalitySpec::Role::Context)
            for (double P : spec.patch_sizes) {
                size_t pps = static_cast<size_t>(std::llround(P / m.pixel_m));
                d = std::min(d, std::max<size_t>(1, pps));
            }
        delta[mi] = d;
    }
    for (double P : spec.patch_sizes) {
        patch_grid(spec.tile_m, P);  // divisibility
        std::vector<SubPatchLayout> row;
        for (size_t mi = 0; mi < out.modality_specs.size(); ++mi) {
            const ModalitySpec& m = out.modality_specs[mi];
            if (m.role == ModalitySpec::Role::Context) {
                row.push_back(SubPatchLayout{m.pixel_m, m.delta_px, 1, 1, 1});
            } else {
                row.push_back(subpatch_layout(P, m.pixel_m, delta[mi]));
            }
        }
        out.layouts.push_back(std::move(row));
    }
    out.finest_patch_m = *std::min_element(spec.patch_sizes.begin(), spec.patch_sizes.end());
    return out;
}

void validate_synthetic_config(const SyntheticConfig& cfg) {
    if (cfg.num_classes < 2) throw ConfigError("synthetic config: K must be >= 2");
    if (cfg.noise_std < 0) throw ConfigError("synthetic config: noise_std must be >= 0");
    if (cfg.label_mode != "tile" && cfg.label_mode != "pixel" && cfg.label_mode != "both")
        throw ConfigError("synthetic config: unknown label mode " + cfg.label_mode);
}

TileSample generate_tile(const ValidatedDataset& ds, const SyntheticConfig& cfg,
                         uint64_t tile_id) {
    validate_synthetic_config(cfg);
    const double S = ds.spec.tile_m;
    const double cell_m = ds.finest_patch_m;
    const size_t cells = static_cast<size_t>(std::llround(S / cell_m));

    std::mt19937_64 rng(mix_seed(cfg.seed, tile_id));

    // Latent class per finest-patch cell.
    std::vector<int> z(cells * cells);
    for (int& v : z) v = static_cast<int>(uniform_index(rng, cfg.num_classes));

    auto signatures = build_signatures(ds, cfg);

    TileSample sample;
    sample.dataset = ds.spec.name;
    sample.tile_id = tile_id;

    for (size_t mi = 0; mi < ds.modality_specs.size(); ++mi) {
        const ModalitySpec& m = ds.modality_specs[mi];
        TileModality tm;
        tm.name = m.name;
        tm.c = m.channels;
        tm.t = m.t_min + (m.t_max > m.t_min ? uniform_index(rng, m.t_max - m.t_min + 1) : 0);
        const bool context = m.role == ModalitySpec::Role::Context;
        if (context) {
            tm.h = tm.w = 1;  // footprint covers the whole tile
        } else {
            tm.h = tm.w = static_cast<size_t>(std::llround(S / m.pixel_m));
        }
        if (m.has_dates) {
            // Distinct sorted days of year.
            std::set<int> days;
            while (days.size() < tm.t) days.insert(1 + static_cast<int>(uniform_index(rng, 366)));
            tm.dates.assign(days.begin(), days.end());
        }
        tm.values.assign(tm.numel(), 0.0);
        auto render = [&](const ClassSignature& s, size_t ti, size_t ci) {
            double temporal = 1.0;
            if (tm.t > 1 || m.has_dates) {
                double day = tm.dates.empty() ? 0.0 : static_cast<double>(tm.dates[ti]);
                temporal += cfg.temporal_amplitude *
                            std::sin(2.0 * std::numbers::pi * s.freq * day / 366.0 + s.phase);
            }
            return s.channel[ci] * temporal;
        };
        if (context) {
            // Mean rendering over all cells: the coarse sensor sees the tile.
            for (size_t ti = 0; ti < tm.t; ++ti)
                for (size_t ci = 0; ci < tm.c; ++ci) {
                    double acc = 0.0;
                    for (int zc : z) acc += render(signatures[mi][zc], ti, ci);
                    tm.at(0, 0, ti, ci) = acc / static_cast<double>(z.size());
                }
        } else {
            for (size_t y = 0; y < tm.h; ++y)
                for (size_t x = 0; x < tm.w; ++x) {
                    size_t cy = std::min(cells - 1, static_cast<size_t>(static_cast<double>(y) *
                                                                        m.pixel_m / cell_m));
                    size_t cx = std::min(cells - 1, static_cast<size_t>(static_cast<double>(x) *
                                                                        m.pixel_m / cell_m));
                    const ClassSignature& s = signatures[mi][z[cy * cells + cx]];
                    for (size_t ti = 0; ti < tm.t; ++ti)
                        for (size_t ci = 0; ci < tm.c; ++ci) tm.at(y, x, ti, ci) = render(s, ti, ci);
                }
        }
        if (cfg.noise_std > 0)
            for (double& v : tm.values) v += cfg.noise_std * normal01(rng);
        sample.modalities.push_back(std::move(tm));
    }

    if (cfg.label_mode == "tile" || cfg.label_mode == "both") {
        std::set<int> present(z.begin(), z.end());
        sample.labels.tile_classes.assign(present.begin(), present.end());
    }
    if (cfg.label_mode == "pixel" || cfg.label_mode == "both") {
        sample.labels.pixel_h = sample.labels.pixel_w = cells;
        sample.labels.pixel_res_m = cell_m;
        sample.labels.pixel_classes = z;
    }
    return sample;
}

// --- tile file format -----------------------------------------------------

void store_tile(const std::string& path, const TileSample& sample) {
    json header;
    header["dataset"] = sample.dataset;
    header["tile_id"] = sample.tile_id;
    json mods = json::array();
    uint64_t offset = 0;  // floats from payload start
    for (const auto& m : sample.modalities) {
        json jm;
        jm["name"] = m.name;
        jm["shape"] = {m.h, m.w, m.t, m.c};
        jm["offset"] = offset;
        if (!m.dates.empty()) jm["dates"] = m.dates;
        offset += m.numel();
        mods.push_back(std::move(jm));
    }
    header["modalities"] = std::move(mods);
    json labels;
    labels["tile_classes"] = sample.labels.tile_classes;
    if (!sample.labels.pixel_classes.empty()) {
        labels["pixel_h"] = sample.labels.pixel_h;
        labels["pixel_w"] = sample.labels.pixel_w;
        labels["pixel_res_m"] = sample.labels.pixel_res_m;
        labels["pixel_classes"] = sample.labels.pixel_classes;
    }
    header["labels"] = std::move(labels);

    std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("store_tile: cannot open " + path);
    os.write(kTileMagic, 8);
    write_u32(os, kTileVersion);
    write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& m : sample.modalities) {
        std::vector<float> buf(m.values.begin(), m.values.end());
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw IoError("store_tile: write failed for " + path);
}

TileSample load_tile(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_tile: cannot open " + path);
    char magic[8];
    if (!is.read(magic, 8)) throw IoError("load_tile: corrupt header (truncated magic) in " + path);
    if (std::memcmp(magic, kTileMagic, 8) != 0)
        throw IoError("load_tile: bad magic bytes in " + path);
    uint32_t version = read_u32(is, "version");
    if (version != kTileVersion)
        throw IoError("load_tile: unsupported version " + std::to_string(version));
    uint64_t hlen = read_u64(is, "header length");
    std::string hs(hlen, '\0');
    if (!is.read(hs.data(), static_cast<std::streamsize>(hlen)))
        throw IoError("load_tile: corrupt header (truncated JSON) in " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw IoError(std::string("load_tile: corrupt header (bad JSON): ") + e.what());
    }

    TileSample sample;
    sample.dataset = header.at("dataset").get<std::string>();
    sample.tile_id = header.at("tile_id").get<uint64_t>();
    for (const auto& jm : header.at("modalities")) {
        TileModality m;
        m.name = jm.at("name").get<std::string>();
        auto shape = jm.at("shape").get<std::vector<size_t>>();
        if (shape.size() != 4) throw IoError("load_tile: modality shape must have 4 entries");
        m.h = shape[0];
        m.w = shape[1];
        m.t = shape[2];
        m.c = shape[3];
        if (jm.contains("dates")) m.dates = jm.at("dates").get<std::vector<int>>();
        std::vector<float> buf(m.numel());
        if (!is.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(buf.size() * sizeof(float))))
            throw IoError("load_tile: truncated payload in " + path);
        m.values.assign(buf.begin(), buf.end());
        sample.modalities.push_back(std::move(m));
    }
    const json& labels = header.at("labels");
    sample.labels.tile_classes = labels.at("tile_classes").get<std::vector<int>>();
    if (labels.contains("pixel_classes")) {
        sample.labels.pixel_h = labels.at("pixel_h").get<size_t>();
        sample.labels.pixel_w = labels.at("pixel_w").get<size_t>();
        sample.labels.pixel_res_m = labels.at("pixel_res_m").get<double>();
        sample.labels.pixel_classes = labels.at("pixel_classes").get<std::vector<int>>();
    }
    return sample;
}

// --- dataset directories --------------------------------------------------

std::string Dataset::tile_filename(uint64_t tile_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "tile_%06llu.ast", static_cast<unsigned long long>(tile_id));
    return buf;
}

TileSample Dataset::tile(uint64_t tile_id) const {
    return load_tile(dir + "/" + tile_filename(tile_id));
}

void write_manifest(const std::string& dir, const ValidatedDataset& ds,
                    const SyntheticConfig& cfg) {
    json j;
    j["dataset"] = to_json(ds.spec);
    json mods = json::array();
    for (const auto& m : ds.modality_specs) mods.push_back(to_json(m));
    j["modalities"] = std::move(mods);
    j["synthetic"] = to_json(cfg);
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    if (!os) throw IoError("write_manifest: cannot open " + dir + "/manifest.json");
    os << j.dump(2) << "\n";
}

Dataset open_dataset(const std::string& dir, const ModalityRegistry& registry) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError("open_dataset: missing manifest.json in " + dir);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("open_dataset: bad manifest: ") + e.what());
    }
    DatasetSpec spec = dataset_from_json(j.at("dataset"));
    // The manifest's own modality blocks take precedence over the registry,
    // so a dataset directory is self-describing.
    ModalityRegistry merged = registry;
    for (const auto& jm : j.at("modalities")) {
        ModalitySpec m = modality_from_json(jm);
        merged[m.name] = m;
    }
    Dataset out;
    out.dir = dir;
    out.validated = validate_dataset_spec(spec, merged);
    out.synth = synthetic_from_json(j.at("synthetic"));
    return out;
}

void synth_generate(const ValidatedDataset& ds, const SyntheticConfig& cfg,
                    const std::string& dir) {
    validate_synthetic_config(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("synth_generate: cannot create " + dir + ": " + ec.message());
    write_manifest(dir, ds, cfg);
    for (uint64_t id = 0; id < ds.spec.num_tiles; ++id)
        store_tile(dir + "/" + Dataset::tile_filename(id), generate_tile(ds, cfg, id));
}

// --- channel padding ------------------------------------------------------

Tensor pad_channels(const Tensor& x, size_t c_expected, const std::vector<bool>& present,
                    const Tensor& pad_value) {
    size_t c_in = x.shape().back();
    if (c_in > c_expected)
        throw ShapeError("pad_channels: input has " + std::to_string(c_in) +
                         " channels, expected at most " + std::to_string(c_expected));
    if (present.size() != c_expected)
        throw ShapeError("pad_channels: presence mask length " + std::to_string(present.size()) +
                         " != expected channel count " + std::to_string(c_expected));
    size_t n_present = static_cast<size_t>(std::count(present.begin(), present.end(), true));
    if (n_present != c_in)
        throw ShapeError("pad_channels: mask marks " + std::to_string(n_present) +
                         " channels present but input has " + std::to_string(c_in));
    if (c_in == c_expected) return x;

    std::vector<size_t> pad_shape = x.shape();
    pad_shape.back() = 1;
    Tensor ones = Tensor::full(pad_shape, 1.0);
    Tensor pad_col = mul(ones, pad_value);

    std::vector<Tensor> cols;
    cols.reserve(c_expected);
    size_t next_in = 0;
    size_t last_axis = x.rank() - 1;
    for (size_t j = 0; j < c_expected; ++j) {
        if (present[j])
            cols.push_back(slice(x, last_axis, next_in++, 1));
        else
            cols.push_back(pad_col);
    }
    return concat(cols, last_axis);
}

Tensor pad_channels(const Tensor& x, size_t c_expected, const Tensor& pad_value) {
    std::vector<bool> present(c_expected, false);
    for (size_t i = 0; i < x.shape().back() && i < c_expected; ++i) present[i] = true;
    if (x.shape().back() > c_expected)
        throw ShapeError("pad_channels: input has more channels than expected");
    return pad_channels(x, c_expected, present, pad_value);
}

// --- sampling -------------------------------------------------------------

SampleStep sample_step(const std::vector<ValidatedDataset>& datasets, std::mt19937_64& rng) {
    if (datasets.empty()) throw ConfigError("sample_step: empty dataset list");
    SampleStep step;
    step.dataset_index = uniform_index(rng, datasets.size());
    const ValidatedDataset& d = datasets[step.dataset_index];
    step.patch_m = d.spec.patch_sizes[uniform_index(rng, d.spec.patch_sizes.size())];
    size_t B = d.spec.batch_size;
    if (B > d.spec.num_tiles)
        throw ConfigError("sample_step: batch size " + std::to_string(B) + " exceeds " +
                          std::to_string(d.spec.num_tiles) + " tiles in " + d.spec.name);
    // Partial Fisher-Yates for a without-replacement draw.
    std::vector<uint64_t> ids(d.spec.num_tiles);
    std::iota(ids.begin(), ids.end(), 0);
    for (size_t i = 0; i < B; ++i) {
        size_t j = i + uniform_index(rng, ids.size() - i);
        std::swap(ids[i], ids[j]);
        step.tile_ids.push_back(ids[i]);
    }
    return step;
}

}  // namespace anysat
