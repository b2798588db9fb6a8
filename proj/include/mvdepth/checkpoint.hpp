#pragma once

#include <map>
#include <string>

#include "mvdepth/tensor.hpp"

namespace mvdepth {

// Binary parameter container. Layout, all integers little-endian:
//   magic "MVDCKPT1" (8 bytes), u32 parameter count, then per parameter:
//   u32 name length, name bytes, u32 ndim, u32 dims..., float64 data.
// A text manifest with config key=value lines is written next to the file
// as <path>.manifest.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& manifest);

// Loads into an existing store; every name must resolve and shapes must
// match, otherwise throws with the offending parameter named.
void load_checkpoint(const std::string& path, ParamStore& store);

std::map<std::string, std::string> read_checkpoint_manifest(const std::string& path);

}  // namespace mvdepth
