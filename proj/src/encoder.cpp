#include "anysat/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace anysat {

void ModelConfig::validate() const {
    if (embed_width == 0 || embed_width % 2 != 0)
        throw ConfigError("model: embed width must be even and positive");
    if (heads == 0 || embed_width % heads != 0)
        throw ConfigError("model: embed width not divisible by head count");
    if (encoder_blocks == 0 || combiner_blocks == 0 || predictor_blocks == 0)
        throw ConfigError("model: block counts must be >= 1");
    if (ltae_heads == 0 || ltae_key_width == 0)
        throw ConfigError("model: LTAE heads and key width must be >= 1");
    if (date_enc_width == 0 || date_enc_width % 2 != 0)
        throw ConfigError("model: date encoding width must be even and positive");
}

ProjectorProfiles build_projector_profiles(const std::vector<ValidatedDataset>& datasets) {
    ProjectorProfiles out;
    for (const auto& ds : datasets) {
        for (size_t mi = 0; mi < ds.modality_specs.size(); ++mi) {
            const ModalitySpec& m = ds.modality_specs[mi];
            auto [it, fresh] = out.try_emplace(m.name, ProjectorProfile{m, SIZE_MAX});
            ProjectorProfile& p = it->second;
            if (!fresh) {
                if (p.spec.role != m.role)
                    throw ConfigError("modality " + m.name + ": role differs across datasets");
                // One projector serves every dataset: size it for the widest
                // channel count and let narrower tiles pad up to it.
                p.spec.channels = std::max(p.spec.channels, m.channels);
                p.spec.t_min = std::min(p.spec.t_min, m.t_min);
                p.spec.t_max = std::max(p.spec.t_max, m.t_max);
                p.spec.has_dates = p.spec.has_dates || m.has_dates;
            }
            if (m.role == ModalitySpec::Role::Context) {
                p.delta_eff = 1;
            } else {
                for (const auto& row : ds.layouts)
                    p.delta_eff = std::min(p.delta_eff, row[mi].effective);
            }
        }
    }
    return out;
}

void make_patch_encoder(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                        std::mt19937_64& rng) {
    cfg.validate();
    const size_t E = cfg.embed_width;
    tree.create("proj/pad", Tensor::zeros({}, true));
    for (const auto& [name, p] : profiles) {
        const std::string prefix = "proj/" + name;
        const size_t C = p.spec.channels;
        if (p.temporal()) {
            if (C % cfg.ltae_heads != 0)
                throw ConfigError("modality " + name + ": " + std::to_string(C) +
                                  " channels not divisible by " + std::to_string(cfg.ltae_heads) +
                                  " LTAE heads");
            nn::make_linear(tree, prefix + "/ltae/key", C + cfg.date_enc_width,
                            cfg.ltae_heads * cfg.ltae_key_width, rng);
            tree.create(prefix + "/ltae/q",
                        normal_init({cfg.ltae_heads, cfg.ltae_key_width},
                                    1.0 / std::sqrt(static_cast<double>(cfg.ltae_key_width)), rng));
            nn::make_mlp(tree, prefix + "/ltae/out", C, 2 * E, E, rng);
        } else {
            nn::make_linear(tree, prefix + "/lin", C, E, rng);
        }
        if (p.context()) {
            nn::make_mlp(tree, prefix + "/ctx", E, 2 * E, E, rng);
        } else {
            size_t in = p.delta_eff * p.delta_eff * E;
            nn::make_mlp(tree, prefix + "/sub", in, 2 * E, E, rng);
        }
    }
    for (size_t b = 0; b < cfg.encoder_blocks; ++b)
        nn::make_block(tree, "trans/blk" + std::to_string(b), E, rng);
    tree.create("trans/cls", normal_init({E}, 0.02, rng));
    nn::make_layer_norm(tree, "trans/final_ln", E);
}

namespace {

// (T, date_enc_width) constant sinusoidal day-of-year encoding. Falls back
// to the timestep index when the series carries no dates.
Tensor day_encoding(const std::vector<int>& dates, size_t t, size_t width) {
    std::vector<double> data(t * width);
    for (size_t ti = 0; ti < t; ++ti) {
        double day = dates.size() == t ? static_cast<double>(dates[ti]) : static_cast<double>(ti);
        double base = 2.0 * std::numbers::pi * day / 366.0;
        for (size_t i = 0; i < width / 2; ++i) {
            double ang = base * static_cast<double>(i + 1);
            data[ti * width + 2 * i] = std::sin(ang);
            data[ti * width + 2 * i + 1] = std::cos(ang);
        }
    }
    return Tensor::from({t, width}, std::move(data));
}

struct LtaePooled {
    std::vector<Tensor> weights;  // per head (N, T)
    Tensor pooled;                // (N, C)
};

LtaePooled ltae_pool(const Tensor& series3, const std::vector<int>& dates, const ParamTree& tree,
                     const std::string& prefix, const ModelConfig& cfg) {
    const size_t N = series3.dim(0), T = series3.dim(1), C = series3.dim(2);
    const size_t H = cfg.ltae_heads, dk = cfg.ltae_key_width;
    if (C % H != 0)
        throw ShapeError("ltae_forward: " + std::to_string(C) + " channels not divisible by " +
                         std::to_string(H) + " heads");
    const size_t Ch = C / H;

    Tensor flat = reshape(series3, {N * T, C});
    Tensor days = day_encoding(dates, T, cfg.date_enc_width);
    // Tile the day rows over pixels.
    std::vector<size_t> rows(N * T);
    for (size_t i = 0; i < N * T; ++i) rows[i] = i % T;
    Tensor days_tiled = gather_rows(days, rows);
    Tensor keys = nn::linear(tree, prefix + "/ltae/key", concat({flat, days_tiled}, 1));

    Tensor q = tree.get(prefix + "/ltae/q");  // (H, dk)
    const double sf = 1.0 / std::sqrt(static_cast<double>(dk));
    LtaePooled out;
    std::vector<Tensor> head_sums;
    for (size_t h = 0; h < H; ++h) {
        Tensor kh = slice(keys, 1, h * dk, dk);                   // (N*T, dk)
        Tensor qh = transpose(slice(q, 0, h, 1));                 // (dk, 1)
        Tensor w = softmax(reshape(scale(matmul(kh, qh), sf), {N, T}), 1);
        out.weights.push_back(w);
        Tensor vh = slice(series3, 2, h * Ch, Ch);                // (N, T, Ch)
        Tensor weighted = mul(vh, expand_last(reshape(w, {N, T, 1}), Ch));
        head_sums.push_back(sum(weighted, 1));                    // (N, Ch)
    }
    out.pooled = concat(head_sums, 1);  // (N, C)
    return out;
}

Tensor as_3d(const Tensor& series) {
    if (series.rank() == 2) return reshape(series, {1, series.dim(0), series.dim(1)});
    if (series.rank() != 3)
        throw ShapeError("ltae_forward: expects (N, T, C) or (T, C) input");
    return series;
}

// Dense constant tensor (Npix, T, C) from a tile modality, restricted to
// the kept timestamp indices (all when empty).
Tensor modality_series(const TileModality& m, const std::vector<size_t>& kept,
                       std::vector<int>& dates_out) {
    std::vector<size_t> ts;
    if (kept.empty()) {
        ts.resize(m.t);
        for (size_t i = 0; i < m.t; ++i) ts[i] = i;
    } else {
        ts = kept;
        for (size_t i : ts)
            if (i >= m.t)
                throw ShapeError("kept timestamp " + std::to_string(i) + " out of range " +
                                 std::to_string(m.t));
    }
    dates_out.clear();
    if (!m.dates.empty())
        for (size_t i : ts) dates_out.push_back(m.dates[i]);
    const size_t npix = m.h * m.w, tk = ts.size(), c = m.c;
    std::vector<double> data(npix * tk * c);
    for (size_t p = 0; p < npix; ++p)
        for (size_t i = 0; i < tk; ++i)
            for (size_t ci = 0; ci < c; ++ci)
                data[(p * tk + i) * c + ci] = m.values[(p * m.t + ts[i]) * c + ci];
    return Tensor::from({npix, tk, c}, std::move(data));
}

// Per-pixel temporal collapse to (Npix, E), with channel padding up to the
// profile's expected width.
Tensor collapse_temporal(const Tensor& series3, const std::vector<int>& dates,
                         const ProjectorProfile& profile, const ParamTree& tree,
                         const ModelConfig& cfg) {
    const std::string prefix = "proj/" + profile.spec.name;
    Tensor padded = pad_channels(series3, profile.spec.channels, tree.get("proj/pad"));
    if (profile.temporal()) return ltae_forward(padded, dates, tree, prefix, cfg);
    if (padded.dim(1) != 1)
        throw ShapeError("modality " + profile.spec.name + ": single-date projector got T=" +
                         std::to_string(padded.dim(1)));
    Tensor flat = reshape(padded, {padded.dim(0), padded.dim(2)});
    return nn::linear(tree, prefix + "/lin", flat);
}

}  // namespace

Tensor ltae_forward(const Tensor& series, const std::vector<int>& dates, const ParamTree& tree,
                    const std::string& prefix, const ModelConfig& cfg) {
    Tensor s3 = as_3d(series);
    LtaePooled pooled = ltae_pool(s3, dates, tree, prefix, cfg);
    Tensor out = nn::mlp(tree, prefix + "/ltae/out", pooled.pooled);  // (N, E)
    if (series.rank() == 2) return reshape(out, {out.dim(1)});
    return out;
}

std::vector<Tensor> ltae_attention_weights(const Tensor& series, const std::vector<int>& dates,
                                           const ParamTree& tree, const std::string& prefix,
                                           const ModelConfig& cfg) {
    return ltae_pool(as_3d(series), dates, tree, prefix, cfg).weights;
}

std::vector<Tensor> project_modality(const TileModality& tile_mod, const ProjectorProfile& profile,
                                     const SubPatchLayout& layout, const PatchGrid& grid,
                                     const ParamTree& tree, const ModelConfig& cfg,
                                     const std::vector<size_t>& kept_timestamps) {
    const size_t pps = layout.pixels_per_side;
    if (tile_mod.h != pps * grid.per_axis || tile_mod.w != pps * grid.per_axis)
        throw ShapeError("project_modality: tile " + tile_mod.name + " is " +
                         std::to_string(tile_mod.h) + "px, geometry expects " +
                         std::to_string(pps * grid.per_axis) + "px");
    std::vector<int> dates;
    Tensor series3 = modality_series(tile_mod, kept_timestamps, dates);
    Tensor pixels = collapse_temporal(series3, dates, profile, tree, cfg);  // (Npix, E)

    const size_t E = cfg.embed_width;
    const size_t deff = layout.effective, nsub_axis = layout.per_axis;
    const size_t nsub = layout.total();
    // Row order: patch-major, then sub-patch row-major, then pixel row-major.
    std::vector<size_t> rows;
    rows.reserve(grid.total * nsub * deff * deff);
    for (size_t p = 0; p < grid.total; ++p) {
        size_t px = grid.pos_x(p), py = grid.pos_y(p);
        for (size_t sy = 0; sy < nsub_axis; ++sy)
            for (size_t sx = 0; sx < nsub_axis; ++sx)
                for (size_t iy = 0; iy < deff; ++iy)
                    for (size_t ix = 0; ix < deff; ++ix) {
                        size_t y = py * pps + sy * deff + iy;
                        size_t x = px * pps + sx * deff + ix;
                        rows.push_back(y * tile_mod.w + x);
                    }
    }
    Tensor gathered = gather_rows(pixels, rows);
    Tensor flat = reshape(gathered, {grid.total * nsub, deff * deff * E});
    Tensor projected = nn::mlp(tree, "proj/" + profile.spec.name + "/sub", flat);

    std::vector<Tensor> per_patch;
    per_patch.reserve(grid.total);
    for (size_t p = 0; p < grid.total; ++p) per_patch.push_back(slice(projected, 0, p * nsub, nsub));
    return per_patch;
}

Tensor encode_patch(const Tensor& subpatch_embeds, const SubPatchLayout& layout,
                    const ParamTree& tree, const ModelConfig& cfg) {
    const size_t E = cfg.embed_width;
    const size_t nsub = subpatch_embeds.dim(0);
    if (nsub != layout.total())
        throw ShapeError("encode_patch: got " + std::to_string(nsub) + " sub-patches, layout has " +
                         std::to_string(layout.total()));
    PosEncodingSpec pe(E, layout.pixel_m * static_cast<double>(layout.effective));
    std::vector<double> pos(nsub * E);
    for (size_t s = 0; s < nsub; ++s) {
        auto v = pos_encoding(s % layout.per_axis, s / layout.per_axis, pe);
        std::copy(v.begin(), v.end(), pos.begin() + s * E);
    }
    Tensor tokens = add(subpatch_embeds, Tensor::from({nsub, E}, std::move(pos)));
    Tensor x = concat({reshape(tree.get("trans/cls"), {1, E}), tokens}, 0);
    for (size_t b = 0; b < cfg.encoder_blocks; ++b)
        x = nn::block(tree, "trans/blk" + std::to_string(b), x, cfg.heads);
    x = nn::layer_norm_affine(tree, "trans/final_ln", x);
    return reshape(slice(x, 0, 0, 1), {E});
}

Tensor encode_context(const TileModality& tile_mod, const ProjectorProfile& profile,
                      const ParamTree& tree, const ModelConfig& cfg,
                      const std::vector<size_t>& kept_timestamps) {
    std::vector<int> dates;
    Tensor series3 = modality_series(tile_mod, kept_timestamps, dates);
    Tensor pixels = collapse_temporal(series3, dates, profile, tree, cfg);  // (Npix, E)
    Tensor pooled = mean(pixels, 0);                                       // (E,)
    Tensor out = nn::mlp(tree, "proj/" + profile.spec.name + "/ctx",
                         reshape(pooled, {1, cfg.embed_width}));
    return reshape(out, {cfg.embed_width});
}

EmbeddingMap encode_tile(const TileSample& tile, double patch_m, const ValidatedDataset& ds,
                         const ParamTree& tree, const ModelConfig& cfg,
                         const ProjectorProfiles& profiles,
                         const std::vector<std::vector<size_t>>& kept_timestamps) {
    bool allowed = false;
    for (double p : ds.spec.patch_sizes) allowed |= std::abs(p - patch_m) < 1e-9;
    if (!allowed)
        throw ConfigError("encode_tile: patch size " + std::to_string(patch_m) +
                          " not in dataset " + ds.spec.name);
    EmbeddingMap map;
    map.grid = patch_grid(ds.spec.tile_m, patch_m);
    for (size_t mi = 0; mi < ds.spec.modalities.size(); ++mi) {
        const std::string& name = ds.spec.modalities[mi];
        const ProjectorProfile& profile = profiles.at(name);
        const TileModality& tm = tile.modality(name);
        const std::vector<size_t>& kept =
            mi < kept_timestamps.size() ? kept_timestamps[mi] : std::vector<size_t>{};
        if (profile.context()) {
            map.context_tokens.push_back(encode_context(tm, profile, tree, cfg, kept));
            continue;
        }
        ModalityEmbeddings me;
        me.name = name;
        me.modality_index = mi;
        me.layout = subpatch_layout(patch_m, profile.spec.pixel_m, profile.delta_eff);
        me.subpatch_embed = project_modality(tm, profile, me.layout, map.grid, tree, cfg, kept);
        me.patch_embed.reserve(map.grid.total);
        for (const Tensor& sub : me.subpatch_embed)
            me.patch_embed.push_back(encode_patch(sub, me.layout, tree, cfg));
        map.per_modality.push_back(std::move(me));
    }
    return map;
}

}  // namespace anysat
