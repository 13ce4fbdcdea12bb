#pragma once

#include <filesystem>

#include "pixobj/network.hpp"

namespace pixobj {

// Weight archive: a directory holding `manifest.txt` plus one raw
// little-endian float32 blob per tensor (row-major, out_c/in_c/k/k order).
// The manifest records the layer list, then one line per tensor:
//
//   tensor layer=<i> name=<weight|bias|weight_velocity|bias_velocity>
//          shape=<d0,d1,...> dtype=f32 file=<blob> crc32=<hex>
//
// Velocity tensors and the iteration counter are stored so training can
// resume exactly.
void save_weights(const Network& net, const std::filesystem::path& dir);

// Rebuilds the network described by the manifest.
Network load_weights(const std::filesystem::path& dir);

// Loads parameters into an existing network; every tensor shape must match.
void load_weights_into(Network& net, const std::filesystem::path& dir);

}  // namespace pixobj
