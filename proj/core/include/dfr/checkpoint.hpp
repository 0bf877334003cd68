// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format: a text header listing name/shape pairs followed by the
// raw values as little-endian 32-bit floats in header order. Reading a file
// and writing it back produces identical bytes.

#pragma once

#include <string>

#include "dfr/optim.hpp"

namespace dfr::diff {

void save_checkpoint(const ParamStore& params, const std::string& path);

/// Load values into an existing store. Every entry in the file must match a
/// registered parameter of identical shape, and vice versa.
void load_checkpoint(ParamStore& params, const std::string& path);

/// Load into an empty store, creating entries as listed in the file.
ParamStore read_checkpoint(const std::string& path);

}  // namespace dfr::diff
