#pragma once

#include <filesystem>

#include "transnet/netgraph.hpp"

namespace transnet {

// A checkpoint is a directory holding one RAWF32 file per tensor and an
// `index.txt` with one line per tensor:
//   <param|velocity|buffer> <name> <n> <c> <h> <w> <file>
// Values are stored as float32.
void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store);

/// Overwrites matching slots and buffers of `store`. Throws DataError when
/// the index names a tensor the store lacks or the shapes disagree.
void load_checkpoint(const std::filesystem::path& dir, ParameterStore& store);

}  // namespace transnet
