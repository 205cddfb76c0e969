#pragma once

// Binary checkpoints: named parameter trees plus a JSON metadata block.
// Format: magic "ANYSATCK", version u32, metadata length u64 + UTF-8 JSON,
// then records of (u32 name length, name, u8 dtype {0:f32, 1:f64}, u8 rank,
// u64 dims..., little-endian payload).

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "anysat/params.hpp"

namespace anysat {

// Records are written as "<tree name>/<parameter path>" in f64.
void save_checkpoint(const std::string& path, const nlohmann::json& metadata,
                     const std::vector<std::pair<std::string, const ParamTree*>>& trees);

struct LoadedCheckpoint {
    nlohmann::json metadata;
    std::map<std::string, ParamTree> trees;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a 64-bit hash of a canonical JSON dump, as a hex string.
std::string config_hash(const nlohmann::json& config);

}  // namespace anysat
