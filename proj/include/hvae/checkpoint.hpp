#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hvae/trainer.hpp"
#include "hvae/tree.hpp"

namespace hvae {

inline constexpr int kCheckpointVersion = 1;

/// {label, mu, sigma, children} per node, recursively from the root.
nlohmann::json tree_to_json(const TruncatedTree& tree);
/// Inverse of tree_to_json. Labels must follow the child-position
/// numbering; throws CorruptFileError otherwise.
TruncatedTree tree_from_json(const nlohmann::json& j, Hyperparams hyper);

struct Checkpoint {
  TrainConfig config;
  ModelState state;
};

nlohmann::json checkpoint_to_json(const TrainConfig& config, const ModelState& state);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Writes to a temporary file and renames it over `path`.
void save_checkpoint(const TrainConfig& config, const ModelState& state,
                     const std::filesystem::path& path);
/// Throws CorruptFileError on unreadable or malformed content and
/// VersionMismatchError on a different format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hvae
