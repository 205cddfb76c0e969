#include "anysat/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace anysat {

namespace {

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

size_t uniform_index(std::mt19937_64& rng, size_t n) { return static_cast<size_t>(rng() % n); }

// Patches of an n x n unit grid intersected by the open rectangle
// [x0, x0+w) x [y0, y0+h).
void mark_intersected(std::vector<bool>& dropped, size_t n, double x0, double y0, double w,
                      double h) {
    const double cell = 1.0 / static_cast<double>(n);
    for (size_t py = 0; py < n; ++py)
        for (size_t px = 0; px < n; ++px) {
            double cx0 = static_cast<double>(px) * cell, cy0 = static_cast<double>(py) * cell;
            bool overlap_x = x0 < cx0 + cell && cx0 < x0 + w;
            bool overlap_y = y0 < cy0 + cell && cy0 < y0 + h;
            if (overlap_x && overlap_y) dropped[py * n + px] = true;
        }
}

std::vector<bool> sample_rect_drops(const PatchGrid& grid, std::mt19937_64& rng,
                                    const SslConfig& cfg) {
    const size_t n = grid.per_axis;
    double shrink = 1.0;
    for (size_t attempt = 0;; ++attempt) {
        std::vector<bool> dropped(grid.total, false);
        for (size_t r = 0; r < cfg.num_rects; ++r) {
            double area = shrink * uniform(rng, cfg.area_min, cfg.area_max);
            double aspect = uniform(rng, cfg.aspect_min, cfg.aspect_max);
            double w = std::min(1.0, std::sqrt(area * aspect));
            double h = std::min(1.0, std::sqrt(area / aspect));
            double x0 = uniform(rng, 0.0, 1.0 - w);
            double y0 = uniform(rng, 0.0, 1.0 - h);
            mark_intersected(dropped, n, x0, y0, w, h);
        }
        bool any_kept = std::find(dropped.begin(), dropped.end(), false) != dropped.end();
        if (any_kept) return dropped;
        if (attempt + 1 >= cfg.resample_limit) shrink *= 0.5;
        if (shrink < 1e-6) {
            // Rectangles are now below one patch; keep everything except the
            // patch under the first rectangle's corner.
            std::fill(dropped.begin(), dropped.end(), false);
            dropped[uniform_index(rng, grid.total)] = true;
            return dropped;
        }
    }
}

std::vector<bool> sample_iid_drops(const PatchGrid& grid, std::mt19937_64& rng,
                                   const SslConfig& cfg) {
    const double rate = cfg.expected_drop_rate();
    std::vector<bool> dropped(grid.total, false);
    for (size_t p = 0; p < grid.total; ++p) dropped[p] = uniform01(rng) < rate;
    if (std::find(dropped.begin(), dropped.end(), true) == dropped.end())
        dropped[uniform_index(rng, grid.total)] = true;
    if (std::find(dropped.begin(), dropped.end(), false) == dropped.end())
        dropped[uniform_index(rng, grid.total)] = false;
    return dropped;
}

Tensor posenc_row(const PatchGrid& grid, size_t patch, size_t width) {
    PosEncodingSpec pe(width, grid.patch_m);
    return Tensor::from({width}, pos_encoding(grid.pos_x(patch), grid.pos_y(patch), pe));
}

}  // namespace

void SslConfig::validate() const {
    if (tau <= 0) throw ConfigError("ssl: temperature must be positive");
    if (ema_m <= 0 || ema_m >= 1) throw ConfigError("ssl: EMA decay must lie in (0, 1)");
    if (lambda_con < 0) throw ConfigError("ssl: contrastive weight must be >= 0");
    if (num_rects < 1) throw ConfigError("ssl: need at least one rectangle");
    if (!(area_min > 0 && area_min <= area_max && area_max < 1))
        throw ConfigError("ssl: rectangle area range invalid");
    if (!(aspect_min > 0 && aspect_min <= aspect_max))
        throw ConfigError("ssl: aspect ratio range invalid");
    if (mask_rate < 0 || mask_rate >= 1) throw ConfigError("ssl: mask rate must lie in [0, 1)");
}

double SslConfig::expected_drop_rate() const {
    double mean_area = 0.5 * (area_min + area_max);
    return 1.0 - std::pow(1.0 - mean_area, static_cast<double>(num_rects));
}

bool MaskPlan::is_dropped(size_t patch) const {
    return std::binary_search(dropped.begin(), dropped.end(), patch);
}

MaskPlan sample_mask_plan(const PatchGrid& grid, size_t modality_count,
                          const std::vector<size_t>& series_lengths, std::mt19937_64& rng,
                          const SslConfig& cfg) {
    cfg.validate();
    if (grid.total < 2)
        throw ConfigError("sample_mask_plan: pretraining requires a grid of >= 2 patches");
    if (modality_count < 1) throw ConfigError("sample_mask_plan: no modalities to mask");

    std::vector<bool> drop_flags = cfg.random_drop ? sample_iid_drops(grid, rng, cfg)
                                                   : sample_rect_drops(grid, rng, cfg);
    MaskPlan plan;
    for (size_t p = 0; p < grid.total; ++p)
        (drop_flags[p] ? plan.dropped : plan.kept).push_back(p);

    for (size_t p : plan.kept) {
        std::vector<size_t> masked_here;
        for (size_t m = 0; m < modality_count; ++m)
            if (uniform01(rng) < cfg.mask_rate) masked_here.push_back(m);
        if (masked_here.size() == modality_count)
            masked_here.erase(masked_here.begin() +
                              static_cast<long>(uniform_index(rng, masked_here.size())));
        for (size_t m : masked_here) plan.masked.insert({p, m});
    }

    plan.kept_timestamps.reserve(series_lengths.size());
    for (size_t t : series_lengths) {
        size_t keep = (t + 1) / 2;
        std::vector<size_t> idx(t);
        std::iota(idx.begin(), idx.end(), 0);
        for (size_t i = 0; i < keep; ++i) {
            size_t j = i + uniform_index(rng, t - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        plan.kept_timestamps.push_back(std::move(idx));
    }
    return plan;
}

void make_predictor(ParamTree& tree, const ModelConfig& cfg, std::mt19937_64& rng) {
    for (size_t b = 0; b < cfg.predictor_blocks; ++b)
        nn::make_block(tree, "pred/blk" + std::to_string(b), cfg.embed_width, rng);
    tree.create("ssl/mask", normal_init({cfg.embed_width}, 0.02, rng));
    tree.create("ssl/drop", normal_init({cfg.embed_width}, 0.02, rng));
}

void make_student(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                  std::mt19937_64& rng) {
    make_patch_encoder(tree, cfg, profiles, rng);
    make_combiner(tree, cfg, rng);
    make_predictor(tree, cfg, rng);
}

void make_teacher(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                  std::mt19937_64& rng) {
    make_patch_encoder(tree, cfg, profiles, rng);
    make_combiner(tree, cfg, rng);
}

StudentOutputs student_forward(const TileSample& tile, double patch_m, const MaskPlan& plan,
                               const ValidatedDataset& ds, const ParamTree& tree,
                               const ModelConfig& cfg, const ProjectorProfiles& profiles) {
    StudentOutputs out;
    std::vector<std::vector<size_t>> kept_ts = plan.kept_timestamps;
    out.embeddings = encode_tile(tile, patch_m, ds, tree, cfg, profiles, kept_ts);
    const PatchGrid& grid = out.embeddings.grid;
    const size_t E = cfg.embed_width;

    Tensor mask_token = tree.get("ssl/mask");
    std::vector<CombinerToken> tokens;
    for (size_t slot = 0; slot < out.embeddings.per_modality.size(); ++slot) {
        const ModalityEmbeddings& me = out.embeddings.per_modality[slot];
        for (size_t p : plan.kept) {
            Tensor embed = plan.is_masked(p, slot) ? mask_token : me.patch_embed[p];
            tokens.push_back({p, me.modality_index, embed});
        }
    }
    out.combined = combine(tokens, out.embeddings.context_tokens, grid, tree, cfg);

    // Predictor: combiner outputs for kept patches, the drop token for
    // dropped ones, each with a residual positional-encoding add.
    Tensor drop_token = tree.get("ssl/drop");
    std::vector<Tensor> rows;
    rows.reserve(grid.total);
    for (size_t p = 0; p < grid.total; ++p) {
        Tensor base = plan.is_dropped(p) ? drop_token : out.combined.per_patch.at(p);
        rows.push_back(add(base, posenc_row(grid, p, E)));
    }
    Tensor x = stack_rows(rows);
    for (size_t b = 0; b < cfg.predictor_blocks; ++b)
        x = nn::block(tree, "pred/blk" + std::to_string(b), x, cfg.heads);
    for (size_t p = 0; p < grid.total; ++p)
        out.predictions[p] = reshape(slice(x, 0, p, 1), {E});
    return out;
}

MultimodalEmbeddings teacher_forward(const TileSample& tile, double patch_m,
                                     const ValidatedDataset& ds, const ParamTree& tree,
                                     const ModelConfig& cfg, const ProjectorProfiles& profiles,
                                     bool want_tile_embedding) {
    EmbeddingMap map = encode_tile(tile, patch_m, ds, tree, cfg, profiles);
    std::vector<CombinerToken> tokens;
    for (const ModalityEmbeddings& me : map.per_modality)
        for (size_t p = 0; p < map.grid.total; ++p)
            tokens.push_back({p, me.modality_index, me.patch_embed[p]});
    return combine(tokens, map.context_tokens, map.grid, tree, cfg, want_tile_embedding);
}

std::optional<Tensor> contrastive_loss(const std::vector<std::vector<Tensor>>& unimodal,
                                       double tau) {
    const size_t M = unimodal.size();
    if (M < 2) return std::nullopt;
    const size_t P = unimodal[0].size();
    if (P < 2) return std::nullopt;
    for (const auto& per_patch : unimodal)
        if (per_patch.size() != P)
            throw ShapeError("contrastive_loss: ragged patch counts across modalities");

    // exp(cos/tau) for every cross-modality pair, computed once.
    std::vector<std::vector<Tensor>> esim(M * P, std::vector<Tensor>(M * P));
    auto id = [P](size_t m, size_t p) { return m * P + p; };
    for (size_t m = 0; m < M; ++m)
        for (size_t p = 0; p < P; ++p)
            for (size_t n = m + 1; n < M; ++n)
                for (size_t q = 0; q < P; ++q) {
                    Tensor e = exp(scale(cosine_similarity(unimodal[m][p], unimodal[n][q]),
                                         1.0 / tau));
                    esim[id(m, p)][id(n, q)] = e;
                    esim[id(n, q)][id(m, p)] = e;
                }

    std::vector<Tensor> terms;
    terms.reserve(M * P);
    for (size_t m = 0; m < M; ++m)
        for (size_t p = 0; p < P; ++p) {
            std::vector<Tensor> num, den;
            for (size_t n = 0; n < M; ++n) {
                if (n == m) continue;
                num.push_back(esim[id(m, p)][id(n, p)]);
                for (size_t q = 0; q < P; ++q)
                    if (q != p) den.push_back(esim[id(m, p)][id(n, q)]);
            }
            Tensor numerator = num.size() == 1 ? num[0] : sum(stack_rows(num));
            Tensor denominator = den.size() == 1 ? den[0] : sum(stack_rows(den));
            terms.push_back(neg(log(div(numerator, denominator))));
        }
    return mean(stack_rows(terms));
}

Tensor jepa_loss(const std::map<size_t, Tensor>& pred, const std::map<size_t, Tensor>& teacher,
                 const std::vector<size_t>& dropped) {
    if (dropped.empty()) throw ShapeError("jepa_loss: empty dropped set");
    std::vector<Tensor> terms;
    terms.reserve(dropped.size());
    for (size_t p : dropped) {
        auto pi = pred.find(p);
        auto ti = teacher.find(p);
        if (pi == pred.end() || ti == teacher.end())
            throw ShapeError("jepa_loss: patch " + std::to_string(p) + " missing from a map");
        Tensor diff = sub(pi->second, ti->second.detach());
        terms.push_back(sum(mul(diff, diff)));
    }
    Tensor total = terms.size() == 1 ? terms[0] : sum(stack_rows(terms));
    return scale(total, 1.0 / static_cast<double>(dropped.size()));
}

void ema_update(ParamTree& teacher, const ParamTree& student, double m) {
    for (const std::string& name : teacher.names()) {
        if (!student.has(name))
            throw ConfigError("ema_update: student tree lacks " + name);
        Tensor t = teacher.get(name);
        Tensor s = student.get(name);
        if (t.shape() != s.shape())
            throw ShapeError("ema_update: shape mismatch at " + name);
        for (size_t i = 0; i < t.numel(); ++i)
            t.data()[i] = m * t.data()[i] + (1.0 - m) * s.data()[i];
    }
}

PretrainResult pretrain(const std::vector<Dataset>& datasets, const ModelConfig& mcfg,
                        const SslConfig& scfg, const AdamWConfig& ocfg,
                        const LrScheduleConfig& sched_cfg, size_t steps, uint64_t seed,
                        const std::function<void(const TraceRecord&)>& on_step,
                        ParamTree* resume_student, ParamTree* resume_teacher,
                        size_t start_step) {
    if (steps < 1) throw ConfigError("pretrain: steps must be >= 1");
    if (datasets.empty()) throw ConfigError("pretrain: no datasets");
    mcfg.validate();
    scfg.validate();

    std::vector<ValidatedDataset> validated;
    for (const Dataset& d : datasets) validated.push_back(d.validated);
    ProjectorProfiles profiles = build_projector_profiles(validated);

    std::mt19937_64 rng(seed);
    PretrainResult result;
    if (resume_student && resume_teacher) {
        result.student = resume_student->clone();
        result.teacher = resume_teacher->clone();
    } else {
        make_student(result.student, mcfg, profiles, rng);
        make_teacher(result.teacher, mcfg, profiles, rng);
        // Teacher starts as a copy of the student's shared parameters.
        ema_update(result.teacher, result.student, 0.0);
    }
    result.teacher.set_requires_grad(false);
    result.student.set_requires_grad(true);

    AdamW opt(ocfg);
    LrSchedule sched(sched_cfg);

    for (size_t step = start_step + 1; step <= start_step + steps; ++step) {
        SampleStep st = sample_step(validated, rng);
        const Dataset& dset = datasets[st.dataset_index];
        const ValidatedDataset& ds = dset.validated;
        PatchGrid grid = patch_grid(ds.spec.tile_m, st.patch_m);

        size_t normal_count = 0;
        for (const ModalitySpec& m : ds.modality_specs)
            normal_count += m.role != ModalitySpec::Role::Context;

        std::vector<Tensor> tile_losses;
        std::vector<Tensor> tile_jepa, tile_con;
        for (uint64_t id : st.tile_ids) {
            TileSample tile = dset.tile(id);
            std::vector<size_t> series_lengths;
            for (const TileModality& tm : tile.modalities) series_lengths.push_back(tm.t);
            MaskPlan plan = sample_mask_plan(grid, normal_count, series_lengths, rng, scfg);

            StudentOutputs student = student_forward(tile, st.patch_m, plan, ds, result.student,
                                                     mcfg, profiles);
            MultimodalEmbeddings teacher = teacher_forward(tile, st.patch_m, ds, result.teacher,
                                                           mcfg, profiles);
            Tensor l_jepa = jepa_loss(student.predictions, teacher.per_patch, plan.dropped);
            Tensor total = l_jepa;
            tile_jepa.push_back(l_jepa);
            if (!scfg.no_contrastive && scfg.lambda_con > 0) {
                std::vector<std::vector<Tensor>> unimodal;
                for (const ModalityEmbeddings& me : student.embeddings.per_modality)
                    unimodal.push_back(me.patch_embed);
                if (auto l_con = contrastive_loss(unimodal, scfg.tau)) {
                    tile_con.push_back(*l_con);
                    total = add(total, scale(*l_con, scfg.lambda_con));
                }
            }
            tile_losses.push_back(total);
        }
        double inv_b = 1.0 / static_cast<double>(tile_losses.size());
        Tensor batch_loss = scale(tile_losses.size() == 1 ? tile_losses[0]
                                                          : sum(stack_rows(tile_losses)),
                                  inv_b);

        TraceRecord rec;
        rec.step = step;
        rec.dataset = ds.spec.name;
        rec.patch_m = st.patch_m;
        rec.total = batch_loss.item();
        for (const Tensor& t : tile_jepa) rec.l_jepa += t.item() * inv_b;
        for (const Tensor& t : tile_con) rec.l_con += t.item() * inv_b;
        if (!std::isfinite(rec.total))
            throw NumericError("pretrain: non-finite loss at step " + std::to_string(step) +
                               " (dataset " + rec.dataset + ", P=" + std::to_string(rec.patch_m) +
                               ")");

        rec.lr = sched.lr_at(step, rec.total);
        result.student.zero_grad();
        backward(batch_loss);
        result.student.ensure_grads();
        opt.step(result.student, rec.lr);
        ema_update(result.teacher, result.student, scfg.ema_m);

        result.trace.push_back(rec);
        if (on_step) on_step(rec);
        result.final_step = step;
    }
    return result;
}

}  // namespace anysat
