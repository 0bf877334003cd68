// SPDX-License-Identifier: Apache-2.0

#include "dfr/qa_gen.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace dfr::data {

namespace {

std::vector<const PartSpec*> apply_filters(const lang::Program& program, const ShapeSpec& shape) {
    std::vector<const PartSpec*> kept;
    for (const auto& part : shape.parts) kept.push_back(&part);
    for (std::size_t i = 0; i + 1 < program.ops.size(); ++i) {
        const std::string& word = program.ops[i].arg;
        std::vector<const PartSpec*> next;
        for (const PartSpec* p : kept)
            if (p->color == word || p->category == word) next.push_back(p);
        kept = std::move(next);
    }
    return kept;
}

}  // namespace

std::string question_type_name(QuestionType t) {
    switch (t) {
        case QuestionType::ExistPart: return "exist_part";
        case QuestionType::QueryPart: return "query_part";
        case QuestionType::CountPart: return "count_part";
    }
    return "?";
}

QuestionType question_type_from_name(const std::string& name) {
    if (name == "exist_part") return QuestionType::ExistPart;
    if (name == "query_part") return QuestionType::QueryPart;
    if (name == "count_part") return QuestionType::CountPart;
    throw std::invalid_argument("unknown question type: " + name);
}

Answer Answer::yes_no(bool v) {
    Answer a;
    a.kind = Kind::YesNo;
    a.yes = v;
    return a;
}

Answer Answer::of_concept(std::string name) {
    Answer a;
    a.kind = Kind::Concept;
    a.concept_name = std::move(name);
    return a;
}

Answer Answer::of_count(int n) {
    Answer a;
    a.kind = Kind::Count;
    a.count = n;
    return a;
}

std::string Answer::text() const {
    switch (kind) {
        case Kind::YesNo: return yes ? "yes" : "no";
        case Kind::Concept: return concept_name;
        case Kind::Count: return std::to_string(count);
    }
    return "";
}

Answer execute_symbolic(const lang::Program& program, const ShapeSpec& shape,
                        const Taxonomy& taxonomy) {
    if (auto err = lang::validate(program, taxonomy))
        throw std::invalid_argument("execute_symbolic: " + *err);

    auto kept = apply_filters(program, shape);
    const lang::Op& terminal = program.ops.back();
    switch (terminal.kind) {
        case lang::OpKind::Exist:
            return Answer::yes_no(!kept.empty());
        case lang::OpKind::Query: {
            std::set<std::string> values;
            for (const PartSpec* p : kept)
                values.insert(terminal.arg == "color" ? p->color : p->category);
            if (values.size() != 1)
                throw std::invalid_argument("execute_symbolic: Query over " +
                                            std::to_string(values.size()) + " distinct values");
            return Answer::of_concept(*values.begin());
        }
        case lang::OpKind::Count:
            return Answer::of_count(static_cast<int>(kept.size()));
        case lang::OpKind::Filter:
            break;
    }
    throw std::logic_error("execute_symbolic: unreachable terminal");
}

namespace {

struct ShapeFacts {
    std::vector<std::string> present_colors;
    std::vector<std::string> absent_colors;
    std::vector<std::string> present_categories;
    std::vector<std::string> absent_categories;
};

ShapeFacts gather_facts(const ShapeSpec& shape, const Taxonomy& tax) {
    ShapeFacts f;
    for (const auto& c : tax.colors())
        (shape.has_color(c) ? f.present_colors : f.absent_colors).push_back(c);
    for (const auto& c : tax.categories())
        (shape.has_category(c) ? f.present_categories : f.absent_categories).push_back(c);
    return f;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
}

lang::Program make_exist(const ShapeFacts& facts, bool want_yes, Rng& rng) {
    // mostly color filters; they are the curriculum's first lesson fuel
    double roll = rng.uniform();
    if (want_yes) {
        if (roll < 0.6 || facts.present_categories.empty())
            return lang::Program::filter_exist(pick(facts.present_colors, rng));
        if (roll < 0.8) return lang::Program::filter_exist(pick(facts.present_categories, rng));
        // color + category combination that actually exists
        return lang::Program{{{lang::OpKind::Filter, pick(facts.present_colors, rng)},
                              {lang::OpKind::Filter, ""},
                              {lang::OpKind::Exist, ""}}};
    }
    if (roll < 0.6 && !facts.absent_colors.empty())
        return lang::Program::filter_exist(pick(facts.absent_colors, rng));
    if (!facts.absent_categories.empty())
        return lang::Program::filter_exist(pick(facts.absent_categories, rng));
    return lang::Program::filter_exist(pick(facts.absent_colors, rng));
}

}  // namespace

std::vector<QAItem> generate_qa(const ShapeSpec& shape, int k, std::uint64_t seed,
                                const Taxonomy& taxonomy) {
    if (k < 1) throw std::invalid_argument("generate_qa: k must be >= 1");
    Rng rng = Rng(seed).fork(0x9A11ull);
    ShapeFacts facts = gather_facts(shape, taxonomy);

    std::vector<QAItem> out;
    out.reserve(static_cast<std::size_t>(k));
    int exist_yes_budget = rng.uniform_int(0, 1);  // random start parity, then alternate

    for (int i = 0; i < k; ++i) {
        QAItem item;
        switch (i % 3) {
            case 0: {
                item.type = QuestionType::ExistPart;
                bool want_yes = (exist_yes_budget++ % 2) == 0;
                lang::Program p = make_exist(facts, want_yes, rng);
                // fill the combined color+category template if requested
                if (p.ops.size() == 3 && p.ops[1].arg.empty()) {
                    const PartSpec& part = shape.parts[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<int>(shape.parts.size()) - 1))];
                    p.ops[0].arg = part.color;
                    p.ops[1].arg = part.category;
                }
                item.program = std::move(p);
                break;
            }
            case 1: {
                item.type = QuestionType::QueryPart;
                // colors are unique per category, so both directions are well posed
                if (rng.uniform() < 0.5) {
                    const auto& category = pick(facts.present_categories, rng);
                    item.program = lang::Program::filter_query(category, "color");
                } else {
                    const auto& color = pick(facts.present_colors, rng);
                    item.program = lang::Program::filter_query(color, "category");
                }
                break;
            }
            default: {
                item.type = QuestionType::CountPart;
                double roll = rng.uniform();
                const auto& category = pick(facts.present_categories, rng);
                if (roll < 0.55) {
                    item.program = lang::Program::filter_count(category);
                } else if (roll < 0.85) {
                    // matching color prefix, same count
                    std::string color;
                    for (const auto& part : shape.parts)
                        if (part.category == category) color = part.color;
                    item.program = lang::Program{{{lang::OpKind::Filter, color},
                                                  {lang::OpKind::Filter, category},
                                                  {lang::OpKind::Count, category}}};
                } else {
                    // mismatched color prefix, counts zero
                    std::string color = facts.absent_colors.empty()
                                            ? pick(facts.present_colors, rng)
                                            : pick(facts.absent_colors, rng);
                    item.program = lang::Program{{{lang::OpKind::Filter, color},
                                                  {lang::OpKind::Filter, category},
                                                  {lang::OpKind::Count, category}}};
                }
                break;
            }
        }
        item.question = lang::render(item.program, taxonomy, shape.family);
        item.answer = execute_symbolic(item.program, shape, taxonomy);
        out.push_back(std::move(item));
    }
    return out;
}

}  // namespace dfr::data
