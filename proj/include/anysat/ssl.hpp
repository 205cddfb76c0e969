#pragma once

// Student/teacher self-supervised pretraining: multi-block masking, the
// predictor, the contrastive and JEPA losses, EMA teacher updates, and the
// multi-dataset training loop.

#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "anysat/combiner.hpp"
#include "anysat/optim.hpp"

namespace anysat {

struct SslConfig {
    double tau = 0.1;
    double ema_m = 0.996;
    double lambda_con = 1.0;
    size_t num_rects = 5;
    double area_min = 0.15;
    double area_max = 0.20;
    double aspect_min = 0.75;
    double aspect_max = 1.5;
    double mask_rate = 0.5;
    size_t resample_limit = 20;
    bool random_drop = false;     // ablation: i.i.d. per-patch dropping
    bool no_contrastive = false;  // ablation: lambda_con treated as 0

    void validate() const;
    // Expected per-patch drop rate of the rectangle strategy, used by the
    // random_drop ablation.
    double expected_drop_rate() const;
};

struct MaskPlan {
    std::vector<size_t> dropped;                      // sorted patch indices, nonempty
    std::vector<size_t> kept;                         // complement, nonempty
    std::set<std::pair<size_t, size_t>> masked;       // (kept patch, modality index)
    std::vector<std::vector<size_t>> kept_timestamps; // per modality index, sorted

    bool is_masked(size_t patch, size_t modality) const {
        return masked.count({patch, modality}) > 0;
    }
    bool is_dropped(size_t patch) const;
};

// Samples drops (5 rectangles), modality masks (rate 0.5 with >=1-unmasked
// repair over `modality_count` non-context modalities), and kept timestamp
// subsets of size ceil(T/2) for each entry of `series_lengths`.
MaskPlan sample_mask_plan(const PatchGrid& grid, size_t modality_count,
                          const std::vector<size_t>& series_lengths, std::mt19937_64& rng,
                          const SslConfig& cfg);

// Registers predictor blocks plus the learned mask and drop tokens. The
// encoder and combiner builders complete the student tree; the teacher tree
// gets only those two.
void make_predictor(ParamTree& tree, const ModelConfig& cfg, std::mt19937_64& rng);
void make_student(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                  std::mt19937_64& rng);
void make_teacher(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                  std::mt19937_64& rng);

struct StudentOutputs {
    EmbeddingMap embeddings;                // all patches/modalities, temporal-masked inputs
    MultimodalEmbeddings combined;          // kept patches only
    std::map<size_t, Tensor> predictions;   // f*_pred over all patches
};

StudentOutputs student_forward(const TileSample& tile, double patch_m, const MaskPlan& plan,
                               const ValidatedDataset& ds, const ParamTree& tree,
                               const ModelConfig& cfg, const ProjectorProfiles& profiles);

// Full-input encode + combine on the teacher tree; the tree's parameters
// must have requires_grad off so no gradients ever reach it.
MultimodalEmbeddings teacher_forward(const TileSample& tile, double patch_m,
                                     const ValidatedDataset& ds, const ParamTree& tree,
                                     const ModelConfig& cfg, const ProjectorProfiles& profiles,
                                     bool want_tile_embedding = false);

// Eq. 2 over unimodal embeddings, indexed [modality][patch]. Returns nullopt
// when fewer than 2 patches or 2 modalities are available (inapplicable).
std::optional<Tensor> contrastive_loss(const std::vector<std::vector<Tensor>>& unimodal,
                                       double tau);

// Eq. 5: mean over dropped patches of the squared L2 residual. The teacher
// side is detached.
Tensor jepa_loss(const std::map<size_t, Tensor>& pred, const std::map<size_t, Tensor>& teacher,
                 const std::vector<size_t>& dropped);

// theta_T <- m * theta_T + (1 - m) * theta_S for every teacher leaf.
void ema_update(ParamTree& teacher, const ParamTree& student, double m);

struct TraceRecord {
    size_t step = 0;
    std::string dataset;
    double patch_m = 0;
    double l_jepa = 0;
    double l_con = 0;  // 0 when inapplicable or ablated
    double total = 0;
    double lr = 0;
};

struct PretrainResult {
    ParamTree student;
    ParamTree teacher;
    std::vector<TraceRecord> trace;
    size_t final_step = 0;
};

// Training loop. When `resume_student`/`resume_teacher` are nonempty the run
// continues from them at `start_step`.
PretrainResult pretrain(const std::vector<Dataset>& datasets, const ModelConfig& mcfg,
                        const SslConfig& scfg, const AdamWConfig& ocfg,
                        const LrScheduleConfig& sched, size_t steps, uint64_t seed,
                        const std::function<void(const TraceRecord&)>& on_step = {},
                        ParamTree* resume_student = nullptr, ParamTree* resume_teacher = nullptr,
                        size_t start_step = 0);

}  // namespace anysat
