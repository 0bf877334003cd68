// SPDX-License-Identifier: Apache-2.0
//
// Shared concept vocabulary: attributes (color, category), their concept
// words, plural forms, shape family nouns, and the RGB anchors used by the
// scene generator.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dfr {

struct Taxonomy {
    struct Attribute {
        std::string name;
        std::vector<std::string> concepts;
    };

    std::vector<Attribute> attributes;
    std::vector<std::string> families;

    static Taxonomy standard();

    const Attribute* find_attribute(const std::string& name) const;
    /// Attribute a concept word belongs to, if any.
    std::optional<std::string> attribute_of(const std::string& concept_word) const;
    bool has_concept(const std::string& concept_word) const { return attribute_of(concept_word).has_value(); }
    int concept_index(const std::string& attribute, const std::string& concept_word) const;

    const std::vector<std::string>& colors() const;
    const std::vector<std::string>& categories() const;

    std::string plural(const std::string& category) const;
    /// Inverse of plural(); empty when the word is no known plural.
    std::string singular_of_plural(const std::string& word) const;

    std::string to_json() const;
    static Taxonomy from_json(const std::string& text);
};

/// Anchor RGB for a color concept, components in [0,1].
std::array<double, 3> color_anchor(const std::string& color);

}  // namespace dfr
