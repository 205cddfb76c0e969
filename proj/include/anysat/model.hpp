#pragma once

// Model hyperparameters shared by encoder, combiner, predictor, and heads.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "anysat/data.hpp"

namespace anysat {

struct ModelConfig {
    size_t embed_width = 64;     // E
    size_t heads = 4;            // attention heads in every transformer block
    size_t encoder_blocks = 3;   // spatial transformer depth
    size_t combiner_blocks = 3;  // self-attention depth before cross-attention
    size_t predictor_blocks = 3;
    size_t ltae_heads = 4;
    size_t ltae_key_width = 8;   // per-head key width
    size_t date_enc_width = 8;   // sinusoidal day-of-year encoding width

    void validate() const;
};

// Per-modality projector sizing, aggregated over every dataset the model
// will see: the sub-patch side is the smallest effective value across all
// (dataset, patch size) combinations so one MLP serves every patch size.
struct ProjectorProfile {
    ModalitySpec spec;
    size_t delta_eff = 1;  // sub-patch side in pixels (1 for context modalities)

    bool temporal() const { return spec.t_max > 1; }
    bool context() const { return spec.role == ModalitySpec::Role::Context; }
};

using ProjectorProfiles = std::map<std::string, ProjectorProfile>;

ProjectorProfiles build_projector_profiles(const std::vector<ValidatedDataset>& datasets);

}  // namespace anysat
