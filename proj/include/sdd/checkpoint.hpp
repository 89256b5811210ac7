#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sdd/optim.hpp"

namespace sdd {

struct CheckpointMeta {
    std::string model;
    std::uint64_t seed = 0;
    std::map<std::string, double> hyperparameters;
};

// Writes <prefix>.manifest.json and <prefix>.weights.bin. The blob holds one
// little-endian float32 run per parameter, concatenated in manifest order.
void save_checkpoint(const ModelParameters& params, const CheckpointMeta& meta,
                     const std::string& prefix);

// Loads values only; optimizer state starts fresh. Throws io_error for an
// unreadable file, schema_error for a corrupt manifest, size_error when the
// blob length disagrees with the manifest shapes.
ModelParameters load_checkpoint(const std::string& prefix, CheckpointMeta* meta = nullptr);

}  // namespace sdd
