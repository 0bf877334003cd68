// SPDX-License-Identifier: Apache-2.0
//
// Question/answer generation over ShapeSpec ground truth, plus the symbolic
// program evaluator that computes answers from part labels. The symbolic
// route doubles as a closed-loop consistency check on every emitted item.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfr/lang.hpp"
#include "dfr/shape_gen.hpp"

namespace dfr::data {

enum class QuestionType { ExistPart, QueryPart, CountPart };

std::string question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

struct Answer {
    enum class Kind { YesNo, Concept, Count } kind = Kind::YesNo;
    bool yes = false;
    std::string concept_name;
    int count = 0;

    static Answer yes_no(bool v);
    static Answer of_concept(std::string name);
    static Answer of_count(int n);

    std::string text() const;  // "yes", "no", concept name, or the integer
    bool operator==(const Answer&) const = default;
};

struct QAItem {
    std::string question;
    lang::Program program;
    Answer answer;
    QuestionType type = QuestionType::ExistPart;
};

/// Evaluate a program against shape labels. Throws on programs that are
/// invalid or ill-posed for the shape (e.g. Query over parts with mixed
/// attribute values).
Answer execute_symbolic(const lang::Program& program, const ShapeSpec& shape,
                        const Taxonomy& taxonomy);

/// k questions balanced across the three types; exist questions balanced
/// yes/no. Answers are computed from the spec via execute_symbolic.
std::vector<QAItem> generate_qa(const ShapeSpec& shape, int k, std::uint64_t seed,
                                const Taxonomy& taxonomy = Taxonomy::standard());

}  // namespace dfr::data
