#pragma once

// Scale-adaptive patch encoder: per-modality projectors (LTAE or linear
// temporal collapse + sub-patch MLP) and the shared spatial transformer
// that reads each patch off a class token.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "anysat/model.hpp"
#include "anysat/nn.hpp"

namespace anysat {

// Registers projector parameters for every profiled modality plus the
// shared spatial transformer and the learned channel-pad scalar.
void make_patch_encoder(ParamTree& tree, const ModelConfig& cfg, const ProjectorProfiles& profiles,
                        std::mt19937_64& rng);

// Temporal attention pooling. series (N, T, C) with shared dates; returns
// (N, E). Each head owns a learned master query; keys see the values plus a
// sinusoidal day-of-year encoding.
Tensor ltae_forward(const Tensor& series, const std::vector<int>& dates, const ParamTree& tree,
                    const std::string& prefix, const ModelConfig& cfg);

// Attention weights per head, softmaxed over T: (heads, N, T) flattened as
// a vector of (N, T) tensors. Exposed for invariance tests.
std::vector<Tensor> ltae_attention_weights(const Tensor& series, const std::vector<int>& dates,
                                           const ParamTree& tree, const std::string& prefix,
                                           const ModelConfig& cfg);

// One modality of one tile, projected: per-pixel temporal collapse then
// sub-patch MLP. Returns one (n_sub, E) tensor per patch of `grid`.
std::vector<Tensor> project_modality(const TileModality& tile_mod, const ProjectorProfile& profile,
                                     const SubPatchLayout& layout, const PatchGrid& grid,
                                     const ParamTree& tree, const ModelConfig& cfg,
                                     const std::vector<size_t>& kept_timestamps = {});

// Sub-patch embeddings (n_sub, E) -> class-token readout (E,): positional
// encodings at g = R_m * delta_eff, a class token, then the shared
// transformer. The class token itself gets no positional encoding.
Tensor encode_patch(const Tensor& subpatch_embeds, const SubPatchLayout& layout,
                    const ParamTree& tree, const ModelConfig& cfg);

// Whole-observation context embedding (MODIS-style coarse sensors).
Tensor encode_context(const TileModality& tile_mod, const ProjectorProfile& profile,
                      const ParamTree& tree, const ModelConfig& cfg,
                      const std::vector<size_t>& kept_timestamps = {});

struct ModalityEmbeddings {
    std::string name;
    size_t modality_index = 0;
    std::vector<Tensor> patch_embed;     // f_p^m, one (E,) per patch
    std::vector<Tensor> subpatch_embed;  // projector outputs (n_sub, E), cached per patch
    SubPatchLayout layout;
};

struct EmbeddingMap {
    PatchGrid grid;
    std::vector<ModalityEmbeddings> per_modality;  // non-context modalities only
    std::vector<Tensor> context_tokens;            // one (E,) per context modality
};

// Encodes every (patch, non-context modality) pair of a tile, plus one
// context token per context modality. `kept_timestamps[mi]` (when nonempty)
// restricts a time series to those indices before encoding.
EmbeddingMap encode_tile(const TileSample& tile, double patch_m, const ValidatedDataset& ds,
                         const ParamTree& tree, const ModelConfig& cfg,
                         const ProjectorProfiles& profiles,
                         const std::vector<std::vector<size_t>>& kept_timestamps = {});

}  // namespace anysat
