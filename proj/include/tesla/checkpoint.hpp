#pragma once

#include <filesystem>

#include "tesla/net.hpp"

namespace tesla {

// Versioned JSON checkpoint: {"format_version": 1, "config": {...},
// "tensors": {name: {"shape": [...], "data": [...]}}}. Loading validates
// every tensor shape against the embedded config.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamTable& params);

std::pair<ModelConfig, ParamTable> load_checkpoint(const std::filesystem::path& path);

}  // namespace tesla
