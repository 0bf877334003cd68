// SPDX-License-Identifier: Apache-2.0
//
// Minimal PLY reader/writer covering the formats this project emits:
// binary little-endian or ascii vertex tables with float32, uint8 and
// int32 scalar properties.

#pragma once

#include <string>
#include <vector>

#include "dfr/sampling.hpp"

namespace dfr::data {

struct PlyColumn {
    enum class Type { F32, U8, I32 };
    std::string name;
    Type type = Type::F32;
    std::vector<double> values;
};

struct PlyTable {
    std::size_t rows = 0;
    std::vector<PlyColumn> columns;

    const PlyColumn* find(const std::string& name) const;
};

void write_ply(const std::string& path, const PlyTable& table, bool binary = true);
PlyTable read_ply(const std::string& path);

/// Point cloud schema: x y z (f32), red green blue (f32), category instance
/// (i32), optionally occupied (u8).
void write_point_cloud(const std::string& path, const std::vector<PointSample>& points,
                       bool with_occupancy, bool binary = true);
std::vector<PointSample> read_point_cloud(const std::string& path);

/// Per-step execution trace: x y z (f32) plus a mask scalar (f32).
void write_mask_cloud(const std::string& path, const std::vector<Vec3>& coords,
                      const std::vector<double>& mask, bool binary = true);

/// Segmentation export: viewer colors (u8) from a fixed palette keyed by
/// category, plus integer category and instance labels.
void write_segment_cloud(const std::string& path, const std::vector<Vec3>& coords,
                         const std::vector<int>& category, const std::vector<int>& instance,
                         bool binary = true);

}  // namespace dfr::data
