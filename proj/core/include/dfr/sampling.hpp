// SPDX-License-Identifier: Apache-2.0
//
// Point sampling over generated shapes: single-viewpoint partial clouds,
// mixed occupancy supervision batches, and labeled full-surface samples.
// Occupancy follows the surface-band rule |sdf| < kOccupancyBand.

#pragma once

#include <cstdint>
#include <vector>

#include "dfr/shape_gen.hpp"

namespace dfr::data {

/// Half-width of the occupied band around part surfaces, canonical units.
constexpr double kOccupancyBand = 0.02;
/// Stddev of the positional jitter applied to near-surface supervision
/// samples. Small against the band so jittered positives rarely leave it.
constexpr double kSurfaceJitter = 0.008;
/// Camera distance for partial-cloud viewpoints.
constexpr double kViewRadius = 2.5;

struct PointSample {
    Vec3 xyz;
    std::array<double, 3> rgb{};
    int occupancy = 0;  // 0 or 1
    int category = -1;  // taxonomy index, evaluation only
    int instance = -1;  // evaluation only
};

int occupancy_label(const ShapeSpec& shape, const Vec3& p);

/// Viewpoint on the upper hemisphere of radius kViewRadius.
Vec3 sample_viewpoint(std::uint64_t viewpoint_seed);

/// True when p, lying on a part surface, is visible from the viewpoint
/// (no solid blocks the open segment between them).
bool point_visible(const ShapeSpec& shape, const Vec3& p, const Vec3& viewpoint);

/// Surface points visible from one synthetic viewpoint; occupancy is 1 and
/// colors come from the owning part. Labels are carried for evaluation.
std::vector<PointSample> sample_partial_cloud(const ShapeSpec& shape,
                                              std::uint64_t viewpoint_seed, int n);

/// Mixed supervision batch: about half near-surface jittered points, half
/// uniform points in the canonical cube, all relabeled by the band rule.
std::vector<PointSample> sample_supervision(const ShapeSpec& shape, int n, Rng& rng);

/// Labeled on-surface samples of the whole shape, no visibility culling.
std::vector<PointSample> sample_surface_points(const ShapeSpec& shape, int n, Rng& rng);

}  // namespace dfr::data
