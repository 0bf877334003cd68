// SPDX-License-Identifier: Apache-2.0
//
// Procedural labeled scenes: each shape is a small set of colored solid
// parts inside the canonical cube [-1,1]^3. Output is a pure function of
// (family, seed).

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dfr/geometry.hpp"
#include "dfr/taxonomy.hpp"

namespace dfr::data {

struct PartSpec {
    std::string category;
    int instance = 0;  // consecutive from 0 within a category
    std::string color;
    std::array<double, 3> rgb{};  // jittered anchor, fixed per part
    Primitive primitive;
};

struct ShapeSpec {
    std::string family;
    std::uint64_t seed = 0;
    std::vector<PartSpec> parts;

    bool has_color(const std::string& color) const;
    bool has_category(const std::string& category) const;
    int count_category(const std::string& category) const;
    /// Index of the part nearest to p by unsigned distance.
    int nearest_part(const Vec3& p) const;
    /// Signed distance of the part union (min over part sdfs).
    double sdf(const Vec3& p) const;
};

/// Deterministic generator. Unknown families raise std::invalid_argument.
ShapeSpec generate_shape(const std::string& family, std::uint64_t seed,
                         const Taxonomy& taxonomy = Taxonomy::standard());

}  // namespace dfr::data
