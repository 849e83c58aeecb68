#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsrl/nn.hpp"

namespace dsrl {

inline constexpr int kCheckpointFormatVersion = 1;

// JSON schema: layer dims, activation tags, flat row-major parameter
// arrays, plus a format-version field. Round-trips bitwise.
nlohmann::json net_to_json(const nn::DenseNet& net);
nn::DenseNet net_from_json(const nlohmann::json& j);

// Frozen feature trunk plus provenance; the transfer artifact.
struct FeatureCheckpoint {
    nn::DenseNet trunk;
    std::size_t feature_dim = 0;
    std::string env_id;
    std::uint64_t train_seed = 0;
    std::size_t selection_episode = 0;
};

nlohmann::json checkpoint_to_json(const FeatureCheckpoint& ckpt);
FeatureCheckpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const FeatureCheckpoint& ckpt, const std::string& path);
FeatureCheckpoint load_checkpoint(const std::string& path);

}  // namespace dsrl
