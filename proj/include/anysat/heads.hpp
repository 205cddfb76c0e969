#pragma once

// Downstream adaptation: tile classification, sub-patch semantic
// segmentation (change detection = 2-class segmentation), the
// scratch/finetune/probe training modes, and evaluation metrics.

#include <random>
#include <string>
#include <vector>

#include "anysat/ssl.hpp"

namespace anysat {

enum class TaskMode { Multilabel, Multiclass };

// Linear classification head E -> N under "head/cls".
void make_classification_head(ParamTree& tree, const ModelConfig& cfg, size_t n_classes,
                              std::mt19937_64& rng);

// Segmentation head 2E -> delta_eff^2 * N under "head/seg"; linear when
// `hidden` is 0, one-hidden-layer MLP otherwise.
void make_segmentation_head(ParamTree& tree, const ModelConfig& cfg, size_t delta_eff,
                            size_t n_classes, size_t hidden, std::mt19937_64& rng);

// Tile logits (N,) off the combiner's tile embedding.
Tensor classify(const TileSample& tile, double patch_m, const ValidatedDataset& ds,
                const ParamTree& backbone, const ParamTree& head, const ModelConfig& cfg,
                const ProjectorProfiles& profiles);

// Multilabel: independent sigmoids + binary cross-entropy. Multiclass:
// softmax + cross-entropy.
Tensor classification_loss(const Tensor& logits, const std::vector<bool>& multilabel_target);
Tensor classification_loss(const Tensor& logits, int target_class);

// Pixel logits (label_h * label_w, N): per sub-patch of m_ref, concat its
// projector output with the owning patch's f*_p, map through the head,
// scatter at m_ref resolution, then bilinearly resample (pixel-center
// aligned). `naive_semseg` zeroes the sub-patch features.
Tensor segment(const TileSample& tile, double patch_m, const std::string& m_ref,
               const ValidatedDataset& ds, const ParamTree& backbone, const ParamTree& head,
               const ModelConfig& cfg, const ProjectorProfiles& profiles, size_t label_h,
               size_t label_w, bool naive_semseg = false);

// Mean per-pixel cross-entropy against a (label_h * label_w) class grid.
Tensor segmentation_loss(const Tensor& pixel_logits, const std::vector<int>& labels);

// Bilinear resample of (h_in * w_in, c) row-major grid to (h_out * w_out, c),
// pixel centers aligned. Exposed for testing.
Tensor bilinear_resample(const Tensor& grid, size_t h_in, size_t w_in, size_t h_out, size_t w_out);

struct Metrics {
    double accuracy = 0;
    double weighted_f1 = 0;
    double macro_f1 = 0;
    double miou = 0;
    std::vector<double> per_class_iou;
};

Metrics multiclass_metrics(const std::vector<int>& pred, const std::vector<int>& label, size_t k);
// pred/label: [sample][class] indicator vectors (threshold 0.5 applied by
// the caller).
Metrics multilabel_metrics(const std::vector<std::vector<bool>>& pred,
                           const std::vector<std::vector<bool>>& label);

enum class AdaptMode { Scratch, Finetune, Probe };
enum class AdaptTask { Classify, Segment };

struct AdaptConfig {
    AdaptMode mode = AdaptMode::Probe;
    AdaptTask task = AdaptTask::Classify;
    TaskMode label_mode = TaskMode::Multiclass;  // classification label reading
    std::string m_ref;                           // segmentation reference modality
    size_t n_classes = 0;
    size_t epochs = 3;
    uint64_t seed = 0;
    double patch_m = 0;                 // 0 = finest patch size of the dataset
    size_t head_hidden = 0;             // 0 = linear head
    bool naive_semseg = false;
    AdamWConfig optim;
    std::vector<uint64_t> train_tiles;  // empty = all tiles
    std::vector<uint64_t> eval_tiles;   // empty = train tiles
};

struct AdaptResult {
    ParamTree backbone;
    ParamTree head;
    std::vector<double> epoch_losses;
    Metrics eval_metrics;
    bool probe_on_random = false;   // probe requested without a pretrained backbone
    bool backbone_frozen_ok = true; // bitwise equality after probe training
};

// `pretrained` may be null for scratch (and for a flagged random probe).
// Classification trains under warmup-cosine, segmentation under
// reduce-on-plateau.
AdaptResult adapt(const Dataset& data, const ParamTree* pretrained, const ModelConfig& cfg,
                  const AdaptConfig& acfg);

struct EvalOutput {
    Metrics metrics;
    std::vector<int> pred, label;                       // multiclass / segmentation
    std::vector<std::vector<bool>> pred_ml, label_ml;   // multilabel classification
};

// Runs the task forward over acfg.eval_tiles (or all tiles) and scores it.
EvalOutput evaluate(const Dataset& data, const ParamTree& backbone, const ParamTree& head,
                    const ModelConfig& cfg, const AdaptConfig& acfg);

// Dominant latent class of a tile's pixel labels.
int dominant_class(const TileLabels& labels, size_t n_classes);

}  // namespace anysat
