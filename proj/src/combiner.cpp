#include "anysat/combiner.hpp"

#include <set>

namespace anysat {

void make_combiner(ParamTree& tree, const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const size_t E = cfg.embed_width;
    for (size_t b = 0; b < cfg.combiner_blocks; ++b)
        nn::make_block(tree, "comb/blk" + std::to_string(b), E, rng);
    nn::make_cross_block(tree, "comb/cross", E, rng);
    tree.create("comb/query", normal_init({E}, 0.02, rng));
    tree.create("comb/cls", normal_init({E}, 0.02, rng));
}

MultimodalEmbeddings combine(const std::vector<CombinerToken>& tokens,
                             const std::vector<Tensor>& context_tokens, const PatchGrid& grid,
                             const ParamTree& tree, const ModelConfig& cfg,
                             bool want_tile_embedding) {
    if (tokens.empty()) throw ShapeError("combine: empty token list");
    const size_t E = cfg.embed_width;
    PosEncodingSpec pe(E, grid.patch_m);

    std::set<std::pair<size_t, size_t>> seen;
    std::set<size_t> patches;
    std::vector<Tensor> rows;
    rows.reserve(tokens.size() + context_tokens.size());
    for (const CombinerToken& t : tokens) {
        if (t.patch >= grid.total)
            throw ShapeError("combine: patch index " + std::to_string(t.patch) +
                             " outside grid of " + std::to_string(grid.total));
        if (!seen.insert({t.patch, t.modality}).second)
            throw ShapeError("combine: duplicate token for patch " + std::to_string(t.patch) +
                             ", modality " + std::to_string(t.modality));
        patches.insert(t.patch);
        Tensor pos = Tensor::from({E}, pos_encoding(grid.pos_x(t.patch), grid.pos_y(t.patch), pe));
        rows.push_back(add(t.embed, pos));
    }
    for (const Tensor& c : context_tokens) rows.push_back(c);

    Tensor x = stack_rows(rows);
    for (size_t b = 0; b < cfg.combiner_blocks; ++b)
        x = nn::block(tree, "comb/blk" + std::to_string(b), x, cfg.heads);

    Tensor seed = tree.get("comb/query");
    std::vector<Tensor> queries;
    std::vector<size_t> order(patches.begin(), patches.end());
    queries.reserve(order.size() + 1);
    for (size_t p : order) {
        Tensor pos = Tensor::from({E}, pos_encoding(grid.pos_x(p), grid.pos_y(p), pe));
        queries.push_back(add(seed, pos));
    }
    if (want_tile_embedding) queries.push_back(tree.get("comb/cls"));

    Tensor out = nn::cross_block(tree, "comb/cross", stack_rows(queries), x, cfg.heads);

    MultimodalEmbeddings result;
    for (size_t i = 0; i < order.size(); ++i)
        result.per_patch[order[i]] = reshape(slice(out, 0, i, 1), {E});
    if (want_tile_embedding)
        result.tile_embedding = reshape(slice(out, 0, order.size(), 1), {E});
    return result;
}

std::vector<Tensor> attach_context(const TileSample& tile, const ValidatedDataset& ds,
                                   const ParamTree& tree, const ModelConfig& cfg,
                                   const ProjectorProfiles& profiles) {
    std::vector<Tensor> out;
    for (const std::string& name : ds.spec.modalities) {
        const ProjectorProfile& p = profiles.at(name);
        if (p.context()) out.push_back(encode_context(tile.modality(name), p, tree, cfg));
    }
    return out;
}

}  // namespace anysat
