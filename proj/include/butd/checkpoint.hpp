#pragma once

#include <string>

#include "butd/graph.hpp"

namespace butd {

// Checkpoint layout: magic "CSCKPT01", u32 parameter count, then per
// parameter: u32 name length + UTF-8 bytes, u32 rank, u32 dims...,
// float32 values. All integers and floats little-endian. Round-trips
// bit-exactly.
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads into an existing store; every name must exist with matching shape.
void load_checkpoint(ParamStore& params, const std::string& path);

// Loads a checkpoint into a fresh store, creating the parameters.
ParamStore read_checkpoint(const std::string& path);

} // namespace butd
