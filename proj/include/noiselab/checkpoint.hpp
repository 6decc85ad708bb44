#pragma once

#include <string>

#include "noiselab/model.hpp"

namespace noiselab {

/// Versioned binary model container: magic + JSON header (realized spec,
/// seed, tensor manifest) + raw little-endian float32 blobs. Round-trips are
/// bit-exact.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace noiselab
