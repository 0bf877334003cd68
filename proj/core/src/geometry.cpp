// SPDX-License-Identifier: Apache-2.0

#include "dfr/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace dfr::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

// radial plane axes for a cylinder along `axis`
void radial_axes(int axis, int& u, int& v) {
    u = (axis + 1) % 3;
    v = (axis + 2) % 3;
}
}  // namespace

std::string prim_kind_name(PrimKind k) {
    switch (k) {
        case PrimKind::Box: return "box";
        case PrimKind::Cylinder: return "cylinder";
        case PrimKind::Sphere: return "sphere";
    }
    return "box";
}

PrimKind prim_kind_from_name(const std::string& name) {
    if (name == "box") return PrimKind::Box;
    if (name == "cylinder") return PrimKind::Cylinder;
    if (name == "sphere") return PrimKind::Sphere;
    throw std::invalid_argument("unknown primitive kind: " + name);
}

Primitive Primitive::box(Vec3 center, Vec3 half_extents) {
    Primitive p;
    p.kind = PrimKind::Box;
    p.center = center;
    p.half = half_extents;
    return p;
}

Primitive Primitive::cylinder(Vec3 center, int axis, double radius, double half_height) {
    Primitive p;
    p.kind = PrimKind::Cylinder;
    p.center = center;
    p.axis = axis;
    p.radius = radius;
    p.half_height = half_height;
    return p;
}

Primitive Primitive::sphere(Vec3 center, double radius) {
    Primitive p;
    p.kind = PrimKind::Sphere;
    p.center = center;
    p.radius = radius;
    return p;
}

double Primitive::sdf(const Vec3& p) const {
    Vec3 d = p - center;
    switch (kind) {
        case PrimKind::Box: {
            Vec3 q{std::fabs(d.x) - half.x, std::fabs(d.y) - half.y, std::fabs(d.z) - half.z};
            Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
            double outside = qp.norm();
            double inside = std::min(std::max({q.x, q.y, q.z}), 0.0);
            return outside + inside;
        }
        case PrimKind::Cylinder: {
            int u, v;
            radial_axes(axis, u, v);
            double r = std::hypot(d[u], d[v]);
            double dr = r - radius;
            double dh = std::fabs(d[axis]) - half_height;
            double outside = std::hypot(std::max(dr, 0.0), std::max(dh, 0.0));
            double inside = std::min(std::max(dr, dh), 0.0);
            return outside + inside;
        }
        case PrimKind::Sphere:
            return d.norm() - radius;
    }
    return 0.0;
}

double sdf_reference(const Primitive& prim, const Vec3& p) {
    Vec3 d = p - prim.center;
    switch (prim.kind) {
        case PrimKind::Box: {
            // distance to each of the six face rectangles, sign by containment
            double best = std::numeric_limits<double>::infinity();
            for (int ax = 0; ax < 3; ++ax)
                for (int side = -1; side <= 1; side += 2) {
                    double plane = side * prim.half[ax];
                    double acc = (d[ax] - plane) * (d[ax] - plane);
                    for (int other = 0; other < 3; ++other) {
                        if (other == ax) continue;
                        double excess = std::fabs(d[other]) - prim.half[other];
                        if (excess > 0.0) acc += excess * excess;
                    }
                    best = std::min(best, std::sqrt(acc));
                }
            bool inside = std::fabs(d.x) < prim.half.x && std::fabs(d.y) < prim.half.y &&
                          std::fabs(d.z) < prim.half.z;
            return inside ? -best : best;
        }
        case PrimKind::Cylinder: {
            int u, v;
            radial_axes(prim.axis, u, v);
            double r = std::hypot(d[u], d[v]);
            double h = std::fabs(d[prim.axis]);
            bool in_r = r <= prim.radius;
            bool in_h = h <= prim.half_height;
            if (in_r && in_h) return -std::min(prim.radius - r, prim.half_height - h);
            if (in_r) return h - prim.half_height;
            if (in_h) return r - prim.radius;
            return std::hypot(r - prim.radius, h - prim.half_height);
        }
        case PrimKind::Sphere: {
            double acc = d.x * d.x + d.y * d.y + d.z * d.z;
            return std::sqrt(acc) - prim.radius;
        }
    }
    return 0.0;
}

bool Primitive::segment_hits(const Vec3& origin, const Vec3& dir, double t_min,
                             double t_max) const {
    double lo = t_min, hi = t_max;
    auto clip_slab = [&](double o, double d, double mn, double mx) {
        if (std::fabs(d) < 1e-15) return o > mn && o < mx;
        double t0 = (mn - o) / d;
        double t1 = (mx - o) / d;
        if (t0 > t1) std::swap(t0, t1);
        lo = std::max(lo, t0);
        hi = std::min(hi, t1);
        return lo < hi;
    };

    switch (kind) {
        case PrimKind::Box: {
            for (int ax = 0; ax < 3; ++ax)
                if (!clip_slab(origin[ax], dir[ax], center[ax] - half[ax], center[ax] + half[ax]))
                    return false;
            return lo < hi;
        }
        case PrimKind::Cylinder: {
            if (!clip_slab(origin[axis], dir[axis], center[axis] - half_height,
                           center[axis] + half_height))
                return false;
            int u, v;
            radial_axes(axis, u, v);
            double ou = origin[u] - center[u], ov = origin[v] - center[v];
            double du = dir[u], dv = dir[v];
            double a = du * du + dv * dv;
            double b = 2.0 * (ou * du + ov * dv);
            double c = ou * ou + ov * ov - radius * radius;
            if (a < 1e-15) return c < 0.0 && lo < hi;  // parallel to axis
            double disc = b * b - 4.0 * a * c;
            if (disc <= 0.0) return false;
            double s = std::sqrt(disc);
            double t0 = (-b - s) / (2.0 * a);
            double t1 = (-b + s) / (2.0 * a);
            lo = std::max(lo, t0);
            hi = std::min(hi, t1);
            return lo < hi;
        }
        case PrimKind::Sphere: {
            Vec3 oc = origin - center;
            double a = dir.dot(dir);
            double b = 2.0 * oc.dot(dir);
            double c = oc.dot(oc) - radius * radius;
            double disc = b * b - 4.0 * a * c;
            if (disc <= 0.0) return false;
            double s = std::sqrt(disc);
            double t0 = (-b - s) / (2.0 * a);
            double t1 = (-b + s) / (2.0 * a);
            lo = std::max(lo, t0);
            hi = std::min(hi, t1);
            return lo < hi;
        }
    }
    return false;
}

double Primitive::surface_area() const {
    switch (kind) {
        case PrimKind::Box:
            return 8.0 * (half.x * half.y + half.y * half.z + half.z * half.x);
        case PrimKind::Cylinder:
            return 2.0 * kPi * radius * (2.0 * half_height) + 2.0 * kPi * radius * radius;
        case PrimKind::Sphere:
            return 4.0 * kPi * radius * radius;
    }
    return 0.0;
}

Vec3 Primitive::sample_surface(Rng& rng) const {
    switch (kind) {
        case PrimKind::Box: {
            double areas[3] = {half.y * half.z, half.z * half.x, half.x * half.y};
            double total = areas[0] + areas[1] + areas[2];
            double pick = rng.uniform(0.0, total);
            int ax = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
            int side = rng.uniform() < 0.5 ? -1 : 1;
            Vec3 p = center;
            p[ax] += side * half[ax];
            int u = (ax + 1) % 3, v = (ax + 2) % 3;
            p[u] += rng.uniform(-half[u], half[u]);
            p[v] += rng.uniform(-half[v], half[v]);
            return p;
        }
        case PrimKind::Cylinder: {
            double side_area = 2.0 * kPi * radius * (2.0 * half_height);
            double cap_area = kPi * radius * radius;
            double pick = rng.uniform(0.0, side_area + 2.0 * cap_area);
            int u, v;
            radial_axes(axis, u, v);
            Vec3 p = center;
            if (pick < side_area) {
                double theta = rng.uniform(0.0, 2.0 * kPi);
                p[u] += radius * std::cos(theta);
                p[v] += radius * std::sin(theta);
                p[axis] += rng.uniform(-half_height, half_height);
            } else {
                int side = pick < side_area + cap_area ? -1 : 1;
                double r = radius * std::sqrt(rng.uniform());
                double theta = rng.uniform(0.0, 2.0 * kPi);
                p[u] += r * std::cos(theta);
                p[v] += r * std::sin(theta);
                p[axis] += side * half_height;
            }
            return p;
        }
        case PrimKind::Sphere: {
            double z = rng.uniform(-1.0, 1.0);
            double theta = rng.uniform(0.0, 2.0 * kPi);
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            return center + Vec3{r * std::cos(theta), r * std::sin(theta), z} * radius;
        }
    }
    return center;
}

double Primitive::max_abs_coord() const {
    switch (kind) {
        case PrimKind::Box:
            return std::max({std::fabs(center.x) + half.x, std::fabs(center.y) + half.y,
                             std::fabs(center.z) + half.z});
        case PrimKind::Cylinder: {
            int u, v;
            radial_axes(axis, u, v);
            return std::max({std::fabs(center[axis]) + half_height,
                             std::fabs(center[u]) + radius, std::fabs(center[v]) + radius});
        }
        case PrimKind::Sphere:
            return std::max({std::fabs(center.x), std::fabs(center.y), std::fabs(center.z)}) +
                   radius;
    }
    return 0.0;
}

}  // namespace dfr::data
