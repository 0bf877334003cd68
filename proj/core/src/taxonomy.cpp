// SPDX-License-Identifier: Apache-2.0

#include "dfr/taxonomy.hpp"

#include <stdexcept>

#include "json.hpp"

namespace dfr {

Taxonomy Taxonomy::standard() {
    Taxonomy t;
    t.attributes.push_back({"color", {"red", "green", "blue", "yellow", "gray", "brown"}});
    t.attributes.push_back(
        {"category", {"leg", "top", "back", "seat", "wheel", "handle", "body", "strap"}});
    t.families = {"table", "chair", "bag", "cart"};
    return t;
}

const Taxonomy::Attribute* Taxonomy::find_attribute(const std::string& name) const {
    for (const auto& a : attributes)
        if (a.name == name) return &a;
    return nullptr;
}

std::optional<std::string> Taxonomy::attribute_of(const std::string& concept_word) const {
    for (const auto& a : attributes)
        for (const auto& c : a.concepts)
            if (c == concept_word) return a.name;
    return std::nullopt;
}

int Taxonomy::concept_index(const std::string& attribute, const std::string& concept_word) const {
    const Attribute* a = find_attribute(attribute);
    if (!a) return -1;
    for (std::size_t i = 0; i < a->concepts.size(); ++i)
        if (a->concepts[i] == concept_word) return static_cast<int>(i);
    return -1;
}

const std::vector<std::string>& Taxonomy::colors() const {
    const Attribute* a = find_attribute("color");
    if (!a) throw std::logic_error("taxonomy has no color attribute");
    return a->concepts;
}

const std::vector<std::string>& Taxonomy::categories() const {
    const Attribute* a = find_attribute("category");
    if (!a) throw std::logic_error("taxonomy has no category attribute");
    return a->concepts;
}

std::string Taxonomy::plural(const std::string& category) const {
    if (category == "body") return "bodies";
    return category + "s";
}

std::string Taxonomy::singular_of_plural(const std::string& word) const {
    for (const auto& c : categories())
        if (plural(c) == word) return c;
    return "";
}

std::string Taxonomy::to_json() const {
    nlohmann::ordered_json j;
    for (const auto& a : attributes) j[a.name] = a.concepts;
    return j.dump(2);
}

Taxonomy Taxonomy::from_json(const std::string& text) {
    auto j = nlohmann::ordered_json::parse(text);
    Taxonomy t;
    for (auto& [key, value] : j.items()) {
        Attribute a;
        a.name = key;
        for (auto& c : value) a.concepts.push_back(c.get<std::string>());
        t.attributes.push_back(std::move(a));
    }
    t.families = standard().families;
    return t;
}

std::array<double, 3> color_anchor(const std::string& color) {
    if (color == "red") return {0.85, 0.10, 0.10};
    if (color == "green") return {0.10, 0.75, 0.15};
    if (color == "blue") return {0.12, 0.20, 0.85};
    if (color == "yellow") return {0.90, 0.85, 0.10};
    if (color == "gray") return {0.50, 0.50, 0.50};
    if (color == "brown") return {0.55, 0.35, 0.15};
    throw std::invalid_argument("unknown color concept: " + color);
}

}  // namespace dfr
