#pragma once

// Modality combiner: fuses per-modality patch embeddings into one
// multimodal vector per patch through self-attention over all tokens and a
// cross-attention readout with one learned query per patch.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "anysat/encoder.hpp"

namespace anysat {

struct CombinerToken {
    size_t patch = 0;
    size_t modality = 0;  // index for duplicate detection only
    Tensor embed;         // (E,)
};

struct MultimodalEmbeddings {
    std::map<size_t, Tensor> per_patch;  // patch index -> f*_p, (E,)
    Tensor tile_embedding;               // defined only when requested
};

// Registers the combiner parameters: B self-attention blocks, one
// cross-attention block, the shared per-patch query seed, and the tile-level
// class query.
void make_combiner(ParamTree& tree, const ModelConfig& cfg, std::mt19937_64& rng);

// Fuses `tokens` (plus context tokens, which get no positional encoding)
// into one embedding per distinct patch index present in `tokens`. Patch
// positional encodings use g = P.
MultimodalEmbeddings combine(const std::vector<CombinerToken>& tokens,
                             const std::vector<Tensor>& context_tokens, const PatchGrid& grid,
                             const ParamTree& tree, const ModelConfig& cfg,
                             bool want_tile_embedding = false);

// One embedding per context modality of the tile, via its projector.
std::vector<Tensor> attach_context(const TileSample& tile, const ValidatedDataset& ds,
                                   const ParamTree& tree, const ModelConfig& cfg,
                                   const ProjectorProfiles& profiles);

}  // namespace anysat
