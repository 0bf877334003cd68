// SPDX-License-Identifier: Apache-2.0

#include "dfr/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace dfr::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

// area-weighted part pick
int pick_part(const ShapeSpec& shape, Rng& rng) {
    double total = 0.0;
    for (const auto& p : shape.parts) total += p.primitive.surface_area();
    double r = rng.uniform(0.0, total);
    double acc = 0.0;
    for (std::size_t i = 0; i < shape.parts.size(); ++i) {
        acc += shape.parts[i].primitive.surface_area();
        if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(shape.parts.size()) - 1;
}

PointSample labeled_sample(const ShapeSpec& shape, const Vec3& p, int part_idx, int occupancy) {
    static const Taxonomy tax = Taxonomy::standard();
    const PartSpec& part = shape.parts[static_cast<std::size_t>(part_idx)];
    PointSample s;
    s.xyz = p;
    s.rgb = part.rgb;
    s.occupancy = occupancy;
    s.category = tax.concept_index("category", part.category);
    s.instance = part.instance;
    return s;
}
}  // namespace

int occupancy_label(const ShapeSpec& shape, const Vec3& p) {
    return std::fabs(shape.sdf(p)) < kOccupancyBand ? 1 : 0;
}

Vec3 sample_viewpoint(std::uint64_t viewpoint_seed) {
    Rng rng = Rng(viewpoint_seed).fork(0xF1E3ull);
    double z = rng.uniform(0.15, 1.0);  // stay clearly above the horizon
    double theta = rng.uniform(0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3{r * std::cos(theta), r * std::sin(theta), z} * kViewRadius;
}

bool point_visible(const ShapeSpec& shape, const Vec3& p, const Vec3& viewpoint) {
    Vec3 dir = viewpoint - p;
    for (const auto& part : shape.parts)
        if (part.primitive.segment_hits(p, dir, 1e-6, 1.0)) return false;
    return true;
}

std::vector<PointSample> sample_partial_cloud(const ShapeSpec& shape, std::uint64_t viewpoint_seed,
                                              int n) {
    if (n < 1) throw std::invalid_argument("sample_partial_cloud: n must be >= 1");
    Vec3 view = sample_viewpoint(viewpoint_seed);
    Rng rng = Rng(viewpoint_seed).fork(0xC10Dull);
    std::vector<PointSample> out;
    out.reserve(static_cast<std::size_t>(n));
    long attempts = 0;
    long max_attempts = 400L * n;
    while (static_cast<int>(out.size()) < n && attempts < max_attempts) {
        ++attempts;
        int part_idx = pick_part(shape, rng);
        Vec3 p = shape.parts[static_cast<std::size_t>(part_idx)].primitive.sample_surface(rng);
        if (!point_visible(shape, p, view)) continue;
        out.push_back(labeled_sample(shape, p, part_idx, 1));
    }
    if (out.empty()) throw std::runtime_error("sample_partial_cloud: no visible surface found");
    return out;
}

std::vector<PointSample> sample_supervision(const ShapeSpec& shape, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_supervision: n must be >= 1");
    std::vector<PointSample> out;
    out.reserve(static_cast<std::size_t>(n));
    int near_count = n / 2;
    for (int i = 0; i < n; ++i) {
        Vec3 p;
        if (i < near_count) {
            int part_idx = pick_part(shape, rng);
            p = shape.parts[static_cast<std::size_t>(part_idx)].primitive.sample_surface(rng);
            p.x += rng.normal(0.0, kSurfaceJitter);
            p.y += rng.normal(0.0, kSurfaceJitter);
            p.z += rng.normal(0.0, kSurfaceJitter);
        } else {
            p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        }
        int nearest = shape.nearest_part(p);
        out.push_back(labeled_sample(shape, p, nearest, occupancy_label(shape, p)));
    }
    return out;
}

std::vector<PointSample> sample_surface_points(const ShapeSpec& shape, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_surface_points: n must be >= 1");
    std::vector<PointSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int part_idx = pick_part(shape, rng);
        Vec3 p = shape.parts[static_cast<std::size_t>(part_idx)].primitive.sample_surface(rng);
        out.push_back(labeled_sample(shape, p, part_idx, 1));
    }
    return out;
}

}  // namespace dfr::data
