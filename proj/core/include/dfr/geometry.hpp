// SPDX-License-Identifier: Apache-2.0
//
// Axis-aligned geometric solids with exact signed distances, exact
// any-hit ray tests, and area-weighted surface sampling. These three
// primitives are all the scene generator needs; keeping them axis-aligned
// keeps every query closed form.

#pragma once

#include <cmath>
#include <string>

#include "dfr/rng.hpp"

namespace dfr::data {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

enum class PrimKind { Box, Cylinder, Sphere };

std::string prim_kind_name(PrimKind k);
PrimKind prim_kind_from_name(const std::string& name);

/// One solid. Boxes use `half` as half-extents. Cylinders are aligned with
/// coordinate `axis` and use `radius` and `half_height`. Spheres use
/// `radius` only.
struct Primitive {
    PrimKind kind = PrimKind::Box;
    Vec3 center;
    Vec3 half;
    int axis = 2;
    double radius = 0.0;
    double half_height = 0.0;

    static Primitive box(Vec3 center, Vec3 half_extents);
    static Primitive cylinder(Vec3 center, int axis, double radius, double half_height);
    static Primitive sphere(Vec3 center, double radius);

    /// Exact signed distance, negative inside.
    double sdf(const Vec3& p) const;

    /// True when the open segment origin + t*dir, t in (t_min, t_max)
    /// intersects the solid.
    bool segment_hits(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

    double surface_area() const;
    Vec3 sample_surface(Rng& rng) const;

    /// All surface points lie within this margin of the canonical cube.
    double max_abs_coord() const;
};

/// Independent signed-distance route used to cross-check Primitive::sdf.
/// Computed by explicit case analysis per face/edge/cap region instead of
/// the folded min/max expressions.
double sdf_reference(const Primitive& prim, const Vec3& p);

}  // namespace dfr::data
