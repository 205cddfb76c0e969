#pragma once

// Dataset descriptors, the deterministic synthetic tile generator, the tile
// file format, channel padding, and the multi-dataset batch sampler.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "anysat/geometry.hpp"
#include "anysat/tensor.hpp"

namespace anysat {

struct ModalitySpec {
    enum class Role { Normal, Context };

    std::string name;
    double pixel_m = 1.0;  // R_m, meters per pixel
    size_t t_min = 1;      // temporal observations, 1 = single date
    size_t t_max = 1;
    size_t channels = 1;   // C_m
    size_t delta_px = 1;   // requested sub-patch side in pixels
    Role role = Role::Normal;
    bool has_dates = false;
};

using ModalityRegistry = std::map<std::string, ModalitySpec>;

struct DatasetSpec {
    std::string name;
    double tile_m = 0;                    // S_d
    std::vector<std::string> modalities;  // names into the registry
    size_t batch_size = 1;                // B_d
    std::vector<double> patch_sizes;      // P_d, meters
    size_t num_tiles = 0;
};

// DatasetSpec checked against a registry, with the per-(P, modality)
// sub-patch layouts precomputed.
struct ValidatedDataset {
    DatasetSpec spec;
    std::vector<ModalitySpec> modality_specs;            // resolved, spec.modalities order
    std::vector<std::vector<SubPatchLayout>> layouts;    // [patch size index][modality index]
    double finest_patch_m = 0;                           // min of patch_sizes

    const ModalitySpec& modality(const std::string& name) const;
    size_t modality_index(const std::string& name) const;
};

ValidatedDataset validate_dataset_spec(const DatasetSpec& spec, const ModalityRegistry& registry);

struct TileModality {
    std::string name;
    size_t h = 0, w = 0, t = 0, c = 0;
    std::vector<double> values;  // (h, w, t, c) row-major
    std::vector<int> dates;      // day-of-year, size t; empty when undated

    size_t numel() const { return h * w * t * c; }
    double& at(size_t y, size_t x, size_t ti, size_t ci) {
        return values[((y * w + x) * t + ti) * c + ci];
    }
    double at(size_t y, size_t x, size_t ti, size_t ci) const {
        return values[((y * w + x) * t + ti) * c + ci];
    }
};

struct TileLabels {
    std::vector<int> tile_classes;  // sorted distinct classes present
    size_t pixel_h = 0, pixel_w = 0;
    double pixel_res_m = 0;         // meters per label pixel
    std::vector<int> pixel_classes; // (pixel_h, pixel_w), empty when absent
};

struct TileSample {
    std::string dataset;
    uint64_t tile_id = 0;
    std::vector<TileModality> modalities;
    TileLabels labels;

    const TileModality& modality(const std::string& name) const;
    bool has_modality(const std::string& name) const;
};

struct SyntheticConfig {
    uint64_t seed = 0;
    size_t num_classes = 4;        // K >= 2
    double noise_std = 0.0;
    uint64_t mixing_seed = 1;      // per-modality class-signature seed
    double temporal_amplitude = 0.5;
    std::string label_mode = "both";  // tile | pixel | both
};

void validate_synthetic_config(const SyntheticConfig& cfg);

// Pure function of (spec, cfg, tile_id).
TileSample generate_tile(const ValidatedDataset& ds, const SyntheticConfig& cfg, uint64_t tile_id);

// Writes manifest.json plus one tile file per tile under `dir`.
void synth_generate(const ValidatedDataset& ds, const SyntheticConfig& cfg,
                    const std::string& dir);

// --- tile files -----------------------------------------------------------
// magic "ANYSATTL", u32 version, u64 header length, UTF-8 JSON header,
// then little-endian f32 arrays in header order.
void store_tile(const std::string& path, const TileSample& sample);
TileSample load_tile(const std::string& path);

// Directory with manifest.json; tiles are loaded on demand.
struct Dataset {
    std::string dir;
    ValidatedDataset validated;
    SyntheticConfig synth;

    TileSample tile(uint64_t tile_id) const;
    static std::string tile_filename(uint64_t tile_id);
};

Dataset open_dataset(const std::string& dir, const ModalityRegistry& registry);
void write_manifest(const std::string& dir, const ValidatedDataset& ds,
                    const SyntheticConfig& cfg);

// --- channel padding ------------------------------------------------------
// Fills the expected channels missing from x (last axis) with the single
// learned scalar; `present` has c_expected entries of which exactly C_in are
// true. Present channels are copied bitwise.
Tensor pad_channels(const Tensor& x, size_t c_expected, const std::vector<bool>& present,
                    const Tensor& pad_value);
// Missing channels assumed to be the trailing ones.
Tensor pad_channels(const Tensor& x, size_t c_expected, const Tensor& pad_value);

// --- multi-dataset sampling ----------------------------------------------
struct SampleStep {
    size_t dataset_index = 0;
    double patch_m = 0;
    std::vector<uint64_t> tile_ids;  // B_d ids, no repeats
};

// Uniform dataset, uniform patch size, B_d tiles without replacement.
SampleStep sample_step(const std::vector<ValidatedDataset>& datasets, std::mt19937_64& rng);

}  // namespace anysat
