#include "anysat/heads.hpp"

#include <algorithm>
#include <cmath>

namespace anysat {

namespace {

struct ClassCounts {
    double tp = 0, fp = 0, fn = 0, support = 0;
};

Metrics from_counts(const std::vector<ClassCounts>& counts, double correct, double total) {
    Metrics m;
    m.accuracy = total > 0 ? correct / total : 0.0;
    double weighted = 0, macro = 0, iou_sum = 0, support_total = 0;
    size_t active = 0;
    m.per_class_iou.resize(counts.size(), 0.0);
    for (size_t c = 0; c < counts.size(); ++c) {
        const ClassCounts& k = counts[c];
        double denom = 2 * k.tp + k.fp + k.fn;
        double f1 = denom > 0 ? 2 * k.tp / denom : 0.0;
        double iou_denom = k.tp + k.fp + k.fn;
        double iou = iou_denom > 0 ? k.tp / iou_denom : 0.0;
        m.per_class_iou[c] = iou;
        weighted += f1 * k.support;
        support_total += k.support;
        if (iou_denom > 0) {
            macro += f1;
            iou_sum += iou;
            ++active;
        }
    }
    m.weighted_f1 = support_total > 0 ? weighted / support_total : 0.0;
    m.macro_f1 = active > 0 ? macro / static_cast<double>(active) : 0.0;
    m.miou = active > 0 ? iou_sum / static_cast<double>(active) : 0.0;
    return m;
}

Tensor broadcast_rows(const Tensor& vec, size_t n) {
    return add(Tensor::zeros({n, vec.numel()}), vec);
}

}  // namespace

void make_classification_head(ParamTree& tree, const ModelConfig& cfg, size_t n_classes,
                              std::mt19937_64& rng) {
    if (n_classes < 2) throw ConfigError("classification head: need >= 2 classes");
    nn::make_linear(tree, "head/cls", cfg.embed_width, n_classes, rng);
}

void make_segmentation_head(ParamTree& tree, const ModelConfig& cfg, size_t delta_eff,
                            size_t n_classes, size_t hidden, std::mt19937_64& rng) {
    if (n_classes < 2) throw ConfigError("segmentation head: need >= 2 classes");
    size_t in = 2 * cfg.embed_width;
    size_t out = delta_eff * delta_eff * n_classes;
    if (hidden == 0)
        nn::make_linear(tree, "head/seg", in, out, rng);
    else
        nn::make_mlp(tree, "head/seg", in, hidden, out, rng);
}

Tensor classify(const TileSample& tile, double patch_m, const ValidatedDataset& ds,
                const ParamTree& backbone, const ParamTree& head, const ModelConfig& cfg,
                const ProjectorProfiles& profiles) {
    MultimodalEmbeddings out = teacher_forward(tile, patch_m, ds, backbone, cfg, profiles, true);
    Tensor logits = nn::linear(head, "head/cls", reshape(out.tile_embedding,
                                                         {1, cfg.embed_width}));
    return reshape(logits, {logits.dim(1)});
}

Tensor classification_loss(const Tensor& logits, const std::vector<bool>& multilabel_target) {
    if (logits.numel() != multilabel_target.size())
        throw ShapeError("classification_loss: " + std::to_string(logits.numel()) +
                         " logits vs " + std::to_string(multilabel_target.size()) + " targets");
    const size_t n = multilabel_target.size();
    std::vector<double> y(n);
    for (size_t i = 0; i < n; ++i) y[i] = multilabel_target[i] ? 1.0 : 0.0;
    Tensor yt = Tensor::from({n}, std::move(y));
    return mean(sub(softplus(logits), mul(yt, logits)));
}

Tensor classification_loss(const Tensor& logits, int target_class) {
    size_t n = logits.numel();
    if (target_class < 0 || static_cast<size_t>(target_class) >= n)
        throw ShapeError("classification_loss: target class out of range");
    Tensor lp = log(softmax(reshape(logits, {1, n}), 1));
    return neg(reshape(slice(lp, 1, static_cast<size_t>(target_class), 1), {}));
}

Tensor bilinear_resample(const Tensor& grid, size_t h_in, size_t w_in, size_t h_out,
                         size_t w_out) {
    if (grid.rank() != 2 || grid.dim(0) != h_in * w_in)
        throw ShapeError("bilinear_resample: grid shape mismatch");
    if (h_in == h_out && w_in == w_out) return grid;
    const size_t c = grid.dim(1), n_out = h_out * w_out;
    std::vector<size_t> i00(n_out), i01(n_out), i10(n_out), i11(n_out);
    std::vector<double> w00(n_out), w01(n_out), w10(n_out), w11(n_out);
    auto coord = [](size_t i, size_t n_to, size_t n_from) {
        double u = (static_cast<double>(i) + 0.5) * static_cast<double>(n_from) /
                       static_cast<double>(n_to) -
                   0.5;
        return std::clamp(u, 0.0, static_cast<double>(n_from - 1));
    };
    for (size_t oy = 0; oy < h_out; ++oy) {
        double y = coord(oy, h_out, h_in);
        size_t y0 = static_cast<size_t>(y), y1 = std::min(y0 + 1, h_in - 1);
        double fy = y - static_cast<double>(y0);
        for (size_t ox = 0; ox < w_out; ++ox) {
            double x = coord(ox, w_out, w_in);
            size_t x0 = static_cast<size_t>(x), x1 = std::min(x0 + 1, w_in - 1);
            double fx = x - static_cast<double>(x0);
            size_t o = oy * w_out + ox;
            i00[o] = y0 * w_in + x0;
            i01[o] = y0 * w_in + x1;
            i10[o] = y1 * w_in + x0;
            i11[o] = y1 * w_in + x1;
            w00[o] = (1 - fy) * (1 - fx);
            w01[o] = (1 - fy) * fx;
            w10[o] = fy * (1 - fx);
            w11[o] = fy * fx;
        }
    }
    auto corner = [&](const std::vector<size_t>& idx, std::vector<double> w) {
        Tensor weights = expand_last(Tensor::from({n_out, 1}, std::move(w)), c);
        return mul(gather_rows(grid, idx), weights);
    };
    return add(add(corner(i00, std::move(w00)), corner(i01, std::move(w01))),
               add(corner(i10, std::move(w10)), corner(i11, std::move(w11))));
}

Tensor segment(const TileSample& tile, double patch_m, const std::string& m_ref,
               const ValidatedDataset& ds, const ParamTree& backbone, const ParamTree& head,
               const ModelConfig& cfg, const ProjectorProfiles& profiles, size_t label_h,
               size_t label_w, bool naive_semseg) {
    EmbeddingMap map = encode_tile(tile, patch_m, ds, backbone, cfg, profiles);
    const ModalityEmbeddings* ref = nullptr;
    std::vector<CombinerToken> tokens;
    for (const ModalityEmbeddings& me : map.per_modality) {
        if (me.name == m_ref) ref = &me;
        for (size_t p = 0; p < map.grid.total; ++p)
            tokens.push_back({p, me.modality_index, me.patch_embed[p]});
    }
    if (!ref) throw ConfigError("segment: reference modality " + m_ref + " not available");
    MultimodalEmbeddings combined =
        combine(tokens, map.context_tokens, map.grid, backbone, cfg);

    const SubPatchLayout& layout = ref->layout;
    const size_t deff = layout.effective, nsub = layout.total();
    const bool linear_head = head.has("head/seg/w");
    size_t out_width = linear_head ? head.get("head/seg/w").dim(1)
                                   : head.get("head/seg/fc2/w").dim(1);
    size_t n_classes = out_width / (deff * deff);

    std::vector<Tensor> patch_logits;
    patch_logits.reserve(map.grid.total);
    for (size_t p = 0; p < map.grid.total; ++p) {
        Tensor sub = naive_semseg ? scale(ref->subpatch_embed[p], 0.0) : ref->subpatch_embed[p];
        Tensor features = concat({sub, broadcast_rows(combined.per_patch.at(p), nsub)}, 1);
        Tensor logits = linear_head ? nn::linear(head, "head/seg", features)
                                    : nn::mlp(head, "head/seg", features);
        patch_logits.push_back(logits);  // (nsub, deff^2 * N)
    }
    Tensor flat = reshape(concat(patch_logits, 0),
                          {map.grid.total * nsub * deff * deff, n_classes});

    // Scatter (patch, sub-patch, cell) rows into the tile pixel grid at
    // m_ref resolution.
    const size_t pps = layout.pixels_per_side;
    const size_t h_in = map.grid.per_axis * pps, w_in = h_in;
    std::vector<size_t> rows(h_in * w_in);
    for (size_t y = 0; y < h_in; ++y)
        for (size_t x = 0; x < w_in; ++x) {
            size_t py = y / pps, px = x / pps;
            size_t sy = (y % pps) / deff, sx = (x % pps) / deff;
            size_t iy = y % deff, ix = x % deff;
            size_t p = map.grid.index(px, py);
            size_t s = sy * layout.per_axis + sx;
            rows[y * w_in + x] = (p * nsub + s) * deff * deff + iy * deff + ix;
        }
    Tensor pixel_grid = gather_rows(flat, rows);
    return bilinear_resample(pixel_grid, h_in, w_in, label_h, label_w);
}

Tensor segmentation_loss(const Tensor& pixel_logits, const std::vector<int>& labels) {
    const size_t n = pixel_logits.dim(0), k = pixel_logits.dim(1);
    if (labels.size() != n)
        throw ShapeError("segmentation_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " pixels");
    std::vector<double> onehot(n * k, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= k)
            throw ShapeError("segmentation_loss: label out of range");
        onehot[i * k + static_cast<size_t>(labels[i])] = 1.0;
    }
    Tensor y = Tensor::from({n, k}, std::move(onehot));
    Tensor lp = log(softmax(pixel_logits, 1));
    return neg(mean(sum(mul(y, lp), 1)));
}

Metrics multiclass_metrics(const std::vector<int>& pred, const std::vector<int>& label,
                           size_t k) {
    if (pred.size() != label.size() || pred.empty())
        throw ShapeError("metrics: prediction/label size mismatch or empty");
    std::vector<ClassCounts> counts(k);
    double correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        int p = pred[i], l = label[i];
        if (p < 0 || l < 0 || static_cast<size_t>(p) >= k || static_cast<size_t>(l) >= k)
            throw ShapeError("metrics: class index out of range");
        counts[static_cast<size_t>(l)].support += 1;
        if (p == l) {
            counts[static_cast<size_t>(p)].tp += 1;
            correct += 1;
        } else {
            counts[static_cast<size_t>(p)].fp += 1;
            counts[static_cast<size_t>(l)].fn += 1;
        }
    }
    return from_counts(counts, correct, static_cast<double>(pred.size()));
}

Metrics multilabel_metrics(const std::vector<std::vector<bool>>& pred,
                           const std::vector<std::vector<bool>>& label) {
    if (pred.size() != label.size() || pred.empty())
        throw ShapeError("metrics: prediction/label size mismatch or empty");
    const size_t k = label[0].size();
    std::vector<ClassCounts> counts(k);
    double correct = 0, total = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != k || label[i].size() != k)
            throw ShapeError("metrics: ragged class vectors");
        for (size_t c = 0; c < k; ++c) {
            counts[c].support += label[i][c];
            if (pred[i][c] && label[i][c]) counts[c].tp += 1;
            if (pred[i][c] && !label[i][c]) counts[c].fp += 1;
            if (!pred[i][c] && label[i][c]) counts[c].fn += 1;
            correct += pred[i][c] == label[i][c];
            total += 1;
        }
    }
    return from_counts(counts, correct, total);
}

int dominant_class(const TileLabels& labels, size_t n_classes) {
    if (!labels.pixel_classes.empty()) {
        std::vector<size_t> hist(n_classes, 0);
        for (int z : labels.pixel_classes) {
            if (z < 0 || static_cast<size_t>(z) >= n_classes)
                throw ConfigError("dominant_class: label outside class range");
            hist[static_cast<size_t>(z)]++;
        }
        return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
    }
    if (!labels.tile_classes.empty()) return labels.tile_classes.front();
    throw ConfigError("dominant_class: tile has no labels");
}

AdaptResult adapt(const Dataset& data, const ParamTree* pretrained, const ModelConfig& cfg,
                  const AdaptConfig& acfg) {
    cfg.validate();
    if (acfg.n_classes < 2) throw ConfigError("adapt: need >= 2 classes");
    if (acfg.task == AdaptTask::Segment && acfg.m_ref.empty())
        throw ConfigError("adapt: segmentation needs a reference modality");
    if (acfg.epochs < 1) throw ConfigError("adapt: epochs must be >= 1");

    const ValidatedDataset& ds = data.validated;
    ProjectorProfiles profiles = build_projector_profiles({ds});
    double patch_m = acfg.patch_m > 0 ? acfg.patch_m : ds.finest_patch_m;

    std::mt19937_64 rng(acfg.seed);
    AdaptResult result;
    if (pretrained) {
        result.backbone = pretrained->clone();
    } else {
        make_teacher(result.backbone, cfg, profiles, rng);
        result.probe_on_random = acfg.mode == AdaptMode::Probe;
    }
    if (acfg.mode == AdaptMode::Scratch && pretrained) {
        // Scratch ignores pretrained values but keeps the same tree shape.
        ParamTree fresh;
        make_teacher(fresh, cfg, profiles, rng);
        result.backbone = fresh;
    }
    const bool frozen = acfg.mode == AdaptMode::Probe;
    result.backbone.set_requires_grad(!frozen);

    std::vector<std::vector<double>> snapshot;
    if (frozen)
        for (const std::string& name : result.backbone.names())
            snapshot.push_back(result.backbone.get(name).data());

    if (acfg.task == AdaptTask::Classify) {
        make_classification_head(result.head, cfg, acfg.n_classes, rng);
    } else {
        size_t deff = profiles.at(acfg.m_ref).delta_eff;
        make_segmentation_head(result.head, cfg, deff, acfg.n_classes, acfg.head_hidden, rng);
    }
    result.head.set_requires_grad(true);

    std::vector<uint64_t> train = acfg.train_tiles;
    if (train.empty())
        for (uint64_t id = 0; id < ds.spec.num_tiles; ++id) train.push_back(id);
    std::vector<uint64_t> eval_ids = acfg.eval_tiles.empty() ? train : acfg.eval_tiles;

    LrScheduleConfig sched_cfg;
    sched_cfg.base_lr = acfg.optim.lr;
    if (acfg.task == AdaptTask::Classify) {
        sched_cfg.kind = LrScheduleConfig::Kind::WarmupCosine;
        sched_cfg.total_steps = std::max<size_t>(1, acfg.epochs * train.size());
        sched_cfg.warmup_steps = sched_cfg.total_steps / 10;
    } else {
        sched_cfg.kind = LrScheduleConfig::Kind::ReduceOnPlateau;
    }
    LrSchedule sched(sched_cfg);
    AdamW head_opt(acfg.optim), backbone_opt(acfg.optim);

    auto forward_loss = [&](const TileSample& tile) -> Tensor {
        if (acfg.task == AdaptTask::Classify) {
            Tensor logits = classify(tile, patch_m, ds, result.backbone, result.head, cfg,
                                     profiles);
            if (acfg.label_mode == TaskMode::Multiclass)
                return classification_loss(logits, dominant_class(tile.labels, acfg.n_classes));
            std::vector<bool> y(acfg.n_classes, false);
            for (int c : tile.labels.tile_classes)
                if (c >= 0 && static_cast<size_t>(c) < acfg.n_classes)
                    y[static_cast<size_t>(c)] = true;
            return classification_loss(logits, y);
        }
        const TileLabels& lab = tile.labels;
        if (lab.pixel_classes.empty()) throw ConfigError("adapt: tile lacks pixel labels");
        Tensor logits = segment(tile, patch_m, acfg.m_ref, ds, result.backbone, result.head, cfg,
                                profiles, lab.pixel_h, lab.pixel_w, acfg.naive_semseg);
        return segmentation_loss(logits, lab.pixel_classes);
    };

    size_t step = 0;
    // Warmup-cosine advances per step; plateau is fed the per-epoch mean so a
    // single lucky tile cannot freeze the best-loss tracker.
    double lr = sched_cfg.base_lr;
    for (size_t epoch = 0; epoch < acfg.epochs; ++epoch) {
        double epoch_loss = 0;
        for (uint64_t id : train) {
            TileSample tile = data.tile(id);
            Tensor loss = forward_loss(tile);
            double value = loss.item();
            if (!std::isfinite(value))
                throw NumericError("adapt: non-finite loss on tile " + std::to_string(id));
            epoch_loss += value;
            if (acfg.task == AdaptTask::Classify) lr = sched.lr_at(step, value);
            result.head.zero_grad();
            if (!frozen) result.backbone.zero_grad();
            backward(loss);
            result.head.ensure_grads();
            head_opt.step(result.head, lr);
            if (!frozen) {
                result.backbone.ensure_grads();
                backbone_opt.step(result.backbone, lr);
            }
            ++step;
        }
        double mean = epoch_loss / static_cast<double>(train.size());
        result.epoch_losses.push_back(mean);
        if (acfg.task == AdaptTask::Segment) lr = sched.lr_at(epoch, mean);
    }

    if (frozen) {
        size_t i = 0;
        for (const std::string& name : result.backbone.names())
            result.backbone_frozen_ok &= result.backbone.get(name).data() == snapshot[i++];
    }

    AdaptConfig ecfg = acfg;
    ecfg.eval_tiles = eval_ids;
    result.eval_metrics = evaluate(data, result.backbone, result.head, cfg, ecfg).metrics;
    return result;
}

EvalOutput evaluate(const Dataset& data, const ParamTree& backbone, const ParamTree& head,
                    const ModelConfig& cfg, const AdaptConfig& acfg) {
    const ValidatedDataset& ds = data.validated;
    ProjectorProfiles profiles = build_projector_profiles({ds});
    double patch_m = acfg.patch_m > 0 ? acfg.patch_m : ds.finest_patch_m;

    std::vector<uint64_t> eval_ids = acfg.eval_tiles;
    if (eval_ids.empty())
        for (uint64_t id = 0; id < ds.spec.num_tiles; ++id) eval_ids.push_back(id);

    EvalOutput out;
    if (acfg.task == AdaptTask::Classify && acfg.label_mode == TaskMode::Multilabel) {
        for (uint64_t id : eval_ids) {
            TileSample tile = data.tile(id);
            Tensor logits = classify(tile, patch_m, ds, backbone, head, cfg, profiles);
            std::vector<bool> p(acfg.n_classes), y(acfg.n_classes, false);
            for (size_t c = 0; c < acfg.n_classes; ++c) p[c] = logits.data()[c] > 0.0;
            for (int c : tile.labels.tile_classes)
                if (c >= 0 && static_cast<size_t>(c) < acfg.n_classes)
                    y[static_cast<size_t>(c)] = true;
            out.pred_ml.push_back(std::move(p));
            out.label_ml.push_back(std::move(y));
        }
        out.metrics = multilabel_metrics(out.pred_ml, out.label_ml);
        return out;
    }
    for (uint64_t id : eval_ids) {
        TileSample tile = data.tile(id);
        if (acfg.task == AdaptTask::Classify) {
            Tensor logits = classify(tile, patch_m, ds, backbone, head, cfg, profiles);
            out.pred.push_back(static_cast<int>(
                std::max_element(logits.data().begin(), logits.data().end()) -
                logits.data().begin()));
            out.label.push_back(dominant_class(tile.labels, acfg.n_classes));
        } else {
            const TileLabels& lab = tile.labels;
            Tensor logits = segment(tile, patch_m, acfg.m_ref, ds, backbone, head, cfg, profiles,
                                    lab.pixel_h, lab.pixel_w, acfg.naive_semseg);
            for (size_t i = 0; i < lab.pixel_classes.size(); ++i) {
                const double* row = logits.data().data() + i * acfg.n_classes;
                out.pred.push_back(static_cast<int>(
                    std::max_element(row, row + acfg.n_classes) - row));
                out.label.push_back(lab.pixel_classes[i]);
            }
        }
    }
    out.metrics = multiclass_metrics(out.pred, out.label, acfg.n_classes);
    return out;
}

}  // namespace anysat
