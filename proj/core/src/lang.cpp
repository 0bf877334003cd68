// SPDX-License-Identifier: Apache-2.0

#include "dfr/lang.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dfr::lang {

namespace {

struct Token {
    std::string word;
    std::size_t offset;  // character position in the original question
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isalnum(c)) {
            std::size_t start = i;
            std::string word;
            while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
                ++i;
            }
            out.push_back({std::move(word), start});
        } else {
            ++i;  // punctuation and whitespace separate tokens
        }
    }
    return out;
}

class Cursor {
public:
    Cursor(const std::vector<Token>& tokens, std::size_t text_len, ParseStats* stats)
        : tokens_(tokens), text_len_(text_len), stats_(stats) {}

    bool done() const { return pos_ >= tokens_.size(); }
    const std::string& peek() const { return tokens_[pos_].word; }
    std::size_t offset() const { return done() ? text_len_ : tokens_[pos_].offset; }

    std::string take() {
        std::string w = tokens_[pos_].word;
        advance();
        return w;
    }

    void advance() {
        ++pos_;
        if (stats_) ++stats_->advances;
    }

    ParseError fail(std::string expected) const { return ParseError{offset(), std::move(expected)}; }

    std::optional<ParseError> expect(std::string_view word) {
        if (done() || peek() != word)
            return fail("expected '" + std::string(word) + "'" +
                        (done() ? " at end of question" : ", got '" + peek() + "'"));
        advance();
        return std::nullopt;
    }

private:
    const std::vector<Token>& tokens_;
    std::size_t text_len_;
    ParseStats* stats_;
    std::size_t pos_ = 0;
};

bool is_shape_word(const std::string& w, const Taxonomy& tax) {
    if (w == "shape") return true;
    return std::find(tax.families.begin(), tax.families.end(), w) != tax.families.end();
}

std::optional<ParseError> expect_shape(Cursor& cur, const Taxonomy& tax) {
    if (cur.done() || !is_shape_word(cur.peek(), tax))
        return cur.fail(cur.done() ? "expected a shape noun at end of question"
                                   : "expected a shape noun, got '" + cur.peek() + "'");
    cur.advance();
    return std::nullopt;
}

ParseResult parse_exist(Cursor& cur, const Taxonomy& tax) {
    // is there a <concept> [<concept>] part of the <shape>
    if (auto e = cur.expect("there")) return *e;
    if (cur.done() || (cur.peek() != "a" && cur.peek() != "an"))
        return cur.fail("expected 'a' or 'an'");
    cur.advance();

    std::vector<std::string> concepts;
    while (!cur.done() && tax.has_concept(cur.peek())) concepts.push_back(cur.take());
    if (concepts.empty()) return cur.fail("expected a concept word");
    if (concepts.size() > 2) return cur.fail("at most two concept words are allowed");

    if (auto e = cur.expect("part")) return *e;
    if (auto e = cur.expect("of")) return *e;
    if (auto e = cur.expect("the")) return *e;
    if (auto e = expect_shape(cur, tax)) return *e;
    if (!cur.done()) return cur.fail("unexpected trailing words");

    Program p;
    for (auto& c : concepts) p.ops.push_back({OpKind::Filter, std::move(c)});
    p.ops.push_back({OpKind::Exist, ""});
    return p;
}

ParseResult parse_query(Cursor& cur, const Taxonomy& tax) {
    // what is the <attribute> of the <concept> part of the <shape>
    if (auto e = cur.expect("is")) return *e;
    if (auto e = cur.expect("the")) return *e;
    if (cur.done() || !tax.find_attribute(cur.peek()))
        return cur.fail(cur.done() ? "expected an attribute name at end of question"
                                   : "expected an attribute name, got '" + cur.peek() + "'");
    std::string attribute = cur.take();
    if (auto e = cur.expect("of")) return *e;
    if (auto e = cur.expect("the")) return *e;
    if (cur.done() || !tax.has_concept(cur.peek()))
        return cur.fail(cur.done() ? "expected a concept word at end of question"
                                   : "expected a concept word, got '" + cur.peek() + "'");
    std::string concept_word = cur.take();
    if (auto e = cur.expect("part")) return *e;
    if (auto e = cur.expect("of")) return *e;
    if (auto e = cur.expect("the")) return *e;
    if (auto e = expect_shape(cur, tax)) return *e;
    if (!cur.done()) return cur.fail("unexpected trailing words");

    Program p;
    p.ops.push_back({OpKind::Filter, std::move(concept_word)});
    p.ops.push_back({OpKind::Query, std::move(attribute)});
    return p;
}

ParseResult parse_count(Cursor& cur, const Taxonomy& tax) {
    // how many <color>? <category-plural> does the <shape> have
    // how many <concept> parts does the <shape> have
    if (auto e = cur.expect("many")) return *e;

    std::vector<Op> filters;
    std::string count_concept;

    if (cur.done()) return cur.fail("expected a concept word at end of question");
    std::string first = cur.peek();
    std::string first_singular = tax.singular_of_plural(first);
    if (!first_singular.empty()) {
        // how many legs ...
        cur.advance();
        filters.push_back({OpKind::Filter, first_singular});
        count_concept = first_singular;
    } else if (tax.has_concept(first)) {
        cur.advance();
        if (!cur.done() && cur.peek() == "parts") {
            // how many red parts ...
            cur.advance();
            filters.push_back({OpKind::Filter, first});
            count_concept = first;
        } else {
            // how many red legs ...
            if (cur.done()) return cur.fail("expected a plural category or 'parts'");
            std::string second_singular = tax.singular_of_plural(cur.peek());
            if (second_singular.empty())
                return cur.fail("expected a plural category or 'parts', got '" + cur.peek() + "'");
            cur.advance();
            filters.push_back({OpKind::Filter, first});
            filters.push_back({OpKind::Filter, second_singular});
            count_concept = second_singular;
        }
    } else {
        return cur.fail("expected a concept word, got '" + first + "'");
    }

    if (auto e = cur.expect("does")) return *e;
    if (auto e = cur.expect("the")) return *e;
    if (auto e = expect_shape(cur, tax)) return *e;
    if (auto e = cur.expect("have")) return *e;
    if (!cur.done()) return cur.fail("unexpected trailing words");

    Program p;
    p.ops = std::move(filters);
    p.ops.push_back({OpKind::Count, std::move(count_concept)});
    return p;
}

}  // namespace

std::string op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Filter: return "Filter";
        case OpKind::Query: return "Query";
        case OpKind::Count: return "Count";
        case OpKind::Exist: return "Exist";
    }
    return "?";
}

Program Program::filter_exist(std::string concept_word) {
    return Program{{{OpKind::Filter, std::move(concept_word)}, {OpKind::Exist, ""}}};
}

Program Program::filter_query(std::string concept_word, std::string attribute) {
    return Program{{{OpKind::Filter, std::move(concept_word)}, {OpKind::Query, std::move(attribute)}}};
}

Program Program::filter_count(std::string concept_word) {
    Program p;
    p.ops.push_back({OpKind::Filter, concept_word});
    p.ops.push_back({OpKind::Count, std::move(concept_word)});
    return p;
}

std::string Program::to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& op : ops) {
        nlohmann::ordered_json o;
        o["op"] = op_kind_name(op.kind);
        o["arg"] = op.arg;
        arr.push_back(std::move(o));
    }
    return arr.dump();
}

Program Program::from_json(const std::string& text) {
    auto arr = nlohmann::json::parse(text);
    Program p;
    for (const auto& o : arr) {
        std::string kind = o.at("op").get<std::string>();
        Op op;
        if (kind == "Filter") op.kind = OpKind::Filter;
        else if (kind == "Query") op.kind = OpKind::Query;
        else if (kind == "Count") op.kind = OpKind::Count;
        else if (kind == "Exist") op.kind = OpKind::Exist;
        else throw std::invalid_argument("unknown op kind: " + kind);
        op.arg = o.value("arg", std::string());
        p.ops.push_back(std::move(op));
    }
    return p;
}

std::string Program::describe() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i) os << " -> ";
        os << op_kind_name(ops[i].kind);
        if (!ops[i].arg.empty()) os << '(' << ops[i].arg << ')';
    }
    return os.str();
}

ParseResult parse(std::string_view question, const Taxonomy& taxonomy, ParseStats* stats) {
    std::vector<Token> tokens = tokenize(question);
    if (stats) {
        stats->tokens = tokens.size();
        stats->advances = 0;
    }
    Cursor cur(tokens, question.size(), stats);
    if (cur.done()) return cur.fail("empty question");
    std::string head = cur.take();
    if (head == "is") return parse_exist(cur, taxonomy);
    if (head == "what") return parse_query(cur, taxonomy);
    if (head == "how") return parse_count(cur, taxonomy);
    return ParseError{0, "expected a question starting with 'is', 'what' or 'how'"};
}

std::string render(const Program& program, const Taxonomy& taxonomy, std::string_view shape_word) {
    if (auto err = validate(program, taxonomy))
        throw std::invalid_argument("render: invalid program: " + *err);

    const Op& terminal = program.ops.back();
    std::vector<std::string> filters;
    for (std::size_t i = 0; i + 1 < program.ops.size(); ++i) filters.push_back(program.ops[i].arg);

    std::ostringstream os;
    switch (terminal.kind) {
        case OpKind::Exist: {
            os << "is there a ";
            for (const auto& f : filters) os << f << ' ';
            os << "part of the " << shape_word << '?';
            break;
        }
        case OpKind::Query: {
            os << "what is the " << terminal.arg << " of the " << filters[0] << " part of the "
               << shape_word << '?';
            break;
        }
        case OpKind::Count: {
            os << "how many ";
            bool is_category = taxonomy.attribute_of(terminal.arg) == "category";
            if (filters.size() == 2) os << filters[0] << ' ';
            if (is_category)
                os << taxonomy.plural(terminal.arg);
            else
                os << terminal.arg << " parts";
            os << " does the " << shape_word << " have?";
            break;
        }
        case OpKind::Filter:
            break;  // unreachable, validate() rejects it
    }
    return os.str();
}

std::optional<std::string> validate(const Program& program, const Taxonomy& taxonomy) {
    if (program.ops.empty()) return "program is empty";

    const Op& terminal = program.ops.back();
    if (terminal.kind == OpKind::Filter)
        return "Filter cannot be the terminal operator";

    std::vector<const Op*> filters;
    for (std::size_t i = 0; i + 1 < program.ops.size(); ++i) {
        if (program.ops[i].kind != OpKind::Filter)
            return op_kind_name(program.ops[i].kind) + " may only appear in terminal position";
        filters.push_back(&program.ops[i]);
    }
    if (filters.empty())
        return op_kind_name(terminal.kind) + " requires at least one preceding Filter";
    if (filters.size() > 2) return "at most two Filter operators are supported";

    for (const Op* f : filters)
        if (!taxonomy.has_concept(f->arg)) return "unknown concept '" + f->arg + "'";

    if (filters.size() == 2) {
        auto a0 = taxonomy.attribute_of(filters[0]->arg);
        auto a1 = taxonomy.attribute_of(filters[1]->arg);
        if (!(a0 == "color" && a1 == "category"))
            return "chained filters must be a color followed by a category";
    }

    switch (terminal.kind) {
        case OpKind::Exist:
            if (!terminal.arg.empty()) return "Exist takes no argument";
            break;
        case OpKind::Query: {
            const auto* attr = taxonomy.find_attribute(terminal.arg);
            if (!attr) return "unknown attribute '" + terminal.arg + "'";
            if (attr->concepts.size() < 2)
                return "attribute '" + terminal.arg + "' has fewer than two concepts";
            for (const Op* f : filters)
                if (taxonomy.attribute_of(f->arg) == terminal.arg)
                    return "Query(" + terminal.arg + ") would ask for the filtered attribute itself";
            break;
        }
        case OpKind::Count:
            if (!taxonomy.has_concept(terminal.arg))
                return "unknown concept '" + terminal.arg + "'";
            if (filters.back()->arg != terminal.arg)
                return "Count concept must match the nearest preceding Filter";
            break;
        case OpKind::Filter:
            break;
    }
    return std::nullopt;
}

}  // namespace dfr::lang
