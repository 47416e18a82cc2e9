#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "treevae/nncore.hpp"

namespace treevae::nn {

inline constexpr const char* kCheckpointVersion = "treevae-ckpt-v1";

struct Checkpoint {
    std::string model_kind;
    nlohmann::json hyperparams;
    nlohmann::json vocab;
    std::vector<std::pair<std::string, Tensor>> params;
};

// JSON manifest with base64 little-endian float32 payloads. Round trips are
// bit exact and the file bytes are reproducible for identical inputs.
void save_checkpoint(const std::string& path, const std::string& model_kind,
                     const nlohmann::json& hyperparams, const nlohmann::json& vocab,
                     const ParamRegistry& reg);

Checkpoint load_checkpoint(const std::string& path);  // throws CorruptCheckpoint

// Copies stored tensors into an already constructed registry; names and
// shapes must match exactly.
void load_into_registry(const Checkpoint& ckpt, ParamRegistry& reg);

void expect_kind(const Checkpoint& ckpt, const std::string& kind);  // throws KindMismatch

}  // namespace treevae::nn
