// SPDX-License-Identifier: Apache-2.0
//
// Templated question language. Questions compile to linear operator
// programs through a deterministic single-pass parser; render() is its
// inverse on the valid program domain.
//
// Grammar (case-insensitive, trailing punctuation ignored):
//   is there a|an <concept> [<concept>] part of the <shape>?
//   what is the <attribute> of the <concept> part of the <shape>?
//   how many <color>? <category-plural> does the <shape> have?
//   how many <concept> parts does the <shape> have?
//
// <shape> is one of the family nouns or the generic word "shape"; it names
// the scene and does not appear in the program.

#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dfr/taxonomy.hpp"

namespace dfr::lang {

enum class OpKind { Filter, Query, Count, Exist };

std::string op_kind_name(OpKind k);

struct Op {
    OpKind kind;
    std::string arg;  // concept for Filter/Count, attribute for Query, empty for Exist

    bool operator==(const Op&) const = default;
};

struct Program {
    std::vector<Op> ops;

    bool operator==(const Program&) const = default;

    static Program filter_exist(std::string concept_word);
    static Program filter_query(std::string concept_word, std::string attribute);
    static Program filter_count(std::string concept_word);

    std::string to_json() const;
    static Program from_json(const std::string& text);
    std::string describe() const;  // e.g. "Filter(red) -> Exist"
};

struct ParseError {
    std::size_t position = 0;  // character offset into the question
    std::string expected;
};

struct ParseStats {
    std::size_t tokens = 0;
    std::size_t advances = 0;  // token cursor movements, bounds the work done
};

using ParseResult = std::variant<Program, ParseError>;

ParseResult parse(std::string_view question, const Taxonomy& taxonomy,
                  ParseStats* stats = nullptr);

/// Canonical English for a valid program. parse(render(p)) == p.
std::string render(const Program& program, const Taxonomy& taxonomy,
                   std::string_view shape_word = "shape");

/// Empty when the program satisfies every structural rule, otherwise a
/// descriptive violation message.
std::optional<std::string> validate(const Program& program, const Taxonomy& taxonomy);

}  // namespace dfr::lang
