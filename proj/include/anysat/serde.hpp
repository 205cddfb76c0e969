#pragma once

// JSON (de)serialization of spec structs, shared by manifests, tile headers,
// and run configs. Parsers reject unknown keys.

#include <json.hpp>

#include "anysat/data.hpp"

namespace anysat {

using json = nlohmann::json;

json to_json(const ModalitySpec& m);
ModalitySpec modality_from_json(const json& j);

json to_json(const DatasetSpec& d);
DatasetSpec dataset_from_json(const json& j);

json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_from_json(const json& j);

// Throws ConfigError when `j` holds a key outside `allowed`.
void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& context);

}  // namespace anysat
