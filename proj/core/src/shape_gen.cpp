// SPDX-License-Identifier: Apache-2.0

#include "dfr/shape_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfr::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::array<double, 3> jittered_rgb(const std::string& color, Rng& rng) {
    auto rgb = color_anchor(color);
    for (double& c : rgb) c = std::clamp(c + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    return rgb;
}

// Per-shape palette: every category present gets its own color, sampled
// without replacement so color-based questions stay well posed.
std::vector<std::string> pick_colors(const std::vector<std::string>& pool, std::size_t n,
                                     Rng& rng) {
    std::vector<std::string> bag = pool;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        int k = rng.uniform_int(0, static_cast<int>(bag.size()) - 1);
        out.push_back(bag[static_cast<std::size_t>(k)]);
        bag.erase(bag.begin() + k);
    }
    return out;
}

void add_parts(ShapeSpec& shape, const std::string& category, const std::string& color,
               const std::vector<Primitive>& prims, Rng& rng) {
    int instance = 0;
    for (const auto& prim : prims) {
        PartSpec part;
        part.category = category;
        part.instance = instance++;
        part.color = color;
        part.rgb = jittered_rgb(color, rng);
        part.primitive = prim;
        shape.parts.push_back(std::move(part));
    }
}

// Legs stand on a ring (3 legs), on corners (4), or corners plus center (5).
// Canonical placements keep leg positions comparable across shapes.
std::vector<Primitive> make_legs(int count, double spread, double z_bottom, double height,
                                 double radius) {
    std::vector<Primitive> legs;
    double zc = z_bottom + height / 2.0;
    auto leg_at = [&](double x, double y) {
        legs.push_back(Primitive::cylinder({x, y, zc}, 2, radius, height / 2.0));
    };
    if (count == 3) {
        for (int i = 0; i < 3; ++i) {
            double theta = kPi / 2.0 + i * 2.0 * kPi / 3.0;
            leg_at(spread * std::cos(theta), spread * std::sin(theta));
        }
    } else {
        leg_at(spread, spread);
        leg_at(-spread, spread);
        leg_at(spread, -spread);
        leg_at(-spread, -spread);
        if (count == 5) leg_at(0.0, 0.0);
    }
    return legs;
}

ShapeSpec make_table(std::uint64_t seed, const Taxonomy& tax, Rng& rng) {
    ShapeSpec shape;
    shape.family = "table";
    shape.seed = seed;

    int leg_count = rng.uniform_int(3, 5);
    double spread = rng.uniform(0.42, 0.55);
    double z_bottom = -0.65;
    double leg_height = rng.uniform(0.85, 1.05);
    double leg_radius = rng.uniform(0.07, 0.10);
    double top_half = rng.uniform(0.60, 0.72);
    double top_thick = rng.uniform(0.035, 0.055);

    auto colors = pick_colors(tax.colors(), 2, rng);
    add_parts(shape, "leg", colors[0], make_legs(leg_count, spread, z_bottom, leg_height, leg_radius),
              rng);
    double top_z = z_bottom + leg_height + top_thick;
    add_parts(shape, "top", colors[1],
              {Primitive::box({0.0, 0.0, top_z}, {top_half, top_half, top_thick})}, rng);
    return shape;
}

ShapeSpec make_chair(std::uint64_t seed, const Taxonomy& tax, Rng& rng) {
    ShapeSpec shape;
    shape.family = "chair";
    shape.seed = seed;

    int leg_count = rng.uniform_int(3, 5);
    double spread = rng.uniform(0.32, 0.42);
    double z_bottom = -0.75;
    double leg_height = rng.uniform(0.55, 0.70);
    double leg_radius = rng.uniform(0.05, 0.08);
    double seat_half = spread + rng.uniform(0.08, 0.14);
    double seat_thick = rng.uniform(0.04, 0.06);
    double back_height = rng.uniform(0.45, 0.65);

    auto colors = pick_colors(tax.colors(), 3, rng);
    add_parts(shape, "leg", colors[0], make_legs(leg_count, spread, z_bottom, leg_height, leg_radius),
              rng);
    double seat_z = z_bottom + leg_height + seat_thick;
    add_parts(shape, "seat", colors[1],
              {Primitive::box({0.0, 0.0, seat_z}, {seat_half, seat_half, seat_thick})}, rng);
    double back_z = seat_z + seat_thick + back_height / 2.0;
    add_parts(shape, "back", colors[2],
              {Primitive::box({0.0, -seat_half + 0.03, back_z}, {seat_half, 0.03, back_height / 2.0})},
              rng);
    return shape;
}

ShapeSpec make_bag(std::uint64_t seed, const Taxonomy& tax, Rng& rng) {
    ShapeSpec shape;
    shape.family = "bag";
    shape.seed = seed;

    double bw = rng.uniform(0.38, 0.52);
    double bd = rng.uniform(0.18, 0.28);
    double bh = rng.uniform(0.32, 0.45);
    int strap_count = rng.uniform_int(1, 2);
    double strap_h = rng.uniform(0.18, 0.30);

    auto colors = pick_colors(tax.colors(), 3, rng);
    add_parts(shape, "body", colors[0], {Primitive::box({0.0, 0.0, -0.2}, {bw, bd, bh})}, rng);

    std::vector<Primitive> straps;
    double top_z = -0.2 + bh + strap_h;
    if (strap_count == 1) {
        straps.push_back(Primitive::box({0.0, 0.0, top_z}, {0.035, 0.035, strap_h}));
    } else {
        double off = bw * 0.55;
        straps.push_back(Primitive::box({-off, 0.0, top_z}, {0.035, 0.035, strap_h}));
        straps.push_back(Primitive::box({off, 0.0, top_z}, {0.035, 0.035, strap_h}));
    }
    add_parts(shape, "strap", colors[1], straps, rng);
    add_parts(shape, "handle", colors[2],
              {Primitive::box({0.0, 0.0, top_z + strap_h + 0.03}, {bw * 0.5, 0.03, 0.03})}, rng);
    return shape;
}

ShapeSpec make_cart(std::uint64_t seed, const Taxonomy& tax, Rng& rng) {
    ShapeSpec shape;
    shape.family = "cart";
    shape.seed = seed;

    double bw = rng.uniform(0.45, 0.60);
    double bd = rng.uniform(0.28, 0.38);
    double bh = rng.uniform(0.16, 0.24);
    double wheel_r = rng.uniform(0.10, 0.15);
    int wheel_count = rng.uniform_int(2, 4);

    auto colors = pick_colors(tax.colors(), 3, rng);
    double body_z = -0.45 + wheel_r * 2.0 + bh;
    add_parts(shape, "body", colors[0], {Primitive::box({0.0, 0.0, body_z}, {bw, bd, bh})}, rng);

    std::vector<Primitive> wheels;
    double wz = -0.45 + wheel_r;
    if (wheel_count == 2) {
        wheels.push_back(Primitive::cylinder({0.0, -bd, wz}, 1, wheel_r, 0.04));
        wheels.push_back(Primitive::cylinder({0.0, bd, wz}, 1, wheel_r, 0.04));
    } else {
        double off = bw * 0.7;
        wheels.push_back(Primitive::cylinder({-off, -bd, wz}, 1, wheel_r, 0.04));
        wheels.push_back(Primitive::cylinder({off, -bd, wz}, 1, wheel_r, 0.04));
        wheels.push_back(Primitive::cylinder({-off, bd, wz}, 1, wheel_r, 0.04));
        if (wheel_count == 4) wheels.push_back(Primitive::cylinder({off, bd, wz}, 1, wheel_r, 0.04));
    }
    add_parts(shape, "wheel", colors[1], wheels, rng);
    add_parts(shape, "handle", colors[2],
              {Primitive::box({-bw - 0.03, 0.0, body_z + bh + 0.22}, {0.03, 0.03, 0.26})}, rng);
    return shape;
}
}  // namespace

bool ShapeSpec::has_color(const std::string& color) const {
    return std::any_of(parts.begin(), parts.end(),
                       [&](const PartSpec& p) { return p.color == color; });
}

bool ShapeSpec::has_category(const std::string& category) const {
    return std::any_of(parts.begin(), parts.end(),
                       [&](const PartSpec& p) { return p.category == category; });
}

int ShapeSpec::count_category(const std::string& category) const {
    int n = 0;
    for (const auto& p : parts)
        if (p.category == category) ++n;
    return n;
}

int ShapeSpec::nearest_part(const Vec3& p) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        double d = std::fabs(parts[i].primitive.sdf(p));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

double ShapeSpec::sdf(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& part : parts) best = std::min(best, part.primitive.sdf(p));
    return best;
}

ShapeSpec generate_shape(const std::string& family, std::uint64_t seed, const Taxonomy& taxonomy) {
    Rng rng(Rng(seed).fork(0x5A5Eull).next_u64());
    ShapeSpec shape;
    if (family == "table")
        shape = make_table(seed, taxonomy, rng);
    else if (family == "chair")
        shape = make_chair(seed, taxonomy, rng);
    else if (family == "bag")
        shape = make_bag(seed, taxonomy, rng);
    else if (family == "cart")
        shape = make_cart(seed, taxonomy, rng);
    else
        throw std::invalid_argument("unknown shape family: " + family);

    for (const auto& part : shape.parts)
        if (part.primitive.max_abs_coord() > 1.0)
            throw std::logic_error("generated part escapes the canonical cube");
    return shape;
}

}  // namespace dfr::data
