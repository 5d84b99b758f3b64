#pragma once

#include <filesystem>
#include <json.hpp>

#include "dmls2r/nn.hpp"

namespace dmls2r {

struct SiameseModel;

// JSON checkpoint formats. Doubles are emitted in shortest round-trip form,
// so save/load reproduces every parameter bit-exactly.

nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

nlohmann::json siamese_to_json(const SiameseModel& m);
SiameseModel siamese_from_json(const nlohmann::json& j);

nlohmann::json adam_to_json(const AdamState& s);
AdamState adam_from_json(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dmls2r
