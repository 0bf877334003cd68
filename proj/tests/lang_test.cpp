// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "dfr/lang.hpp"
#include "dfr/qa_gen.hpp"
#include "dfr/rng.hpp"
#include "dfr/scene_io.hpp"

using namespace dfr;
using namespace dfr::lang;

namespace {

const Taxonomy& tax() {
    static Taxonomy t = Taxonomy::standard();
    return t;
}

Program parse_ok(std::string_view q, ParseStats* stats = nullptr) {
    auto result = parse(q, tax(), stats);
    REQUIRE_MESSAGE(std::holds_alternative<Program>(result),
                    std::get<ParseError>(result).expected);
    return std::get<Program>(result);
}

ParseError parse_err(std::string_view q) {
    auto result = parse(q, tax());
    REQUIRE(std::holds_alternative<ParseError>(result));
    return std::get<ParseError>(result);
}

// every structurally valid program reachable by the grammar
Program random_valid_program(Rng& rng) {
    const auto& colors = tax().colors();
    const auto& cats = tax().categories();
    auto color = [&] { return colors[static_cast<std::size_t>(rng.uniform_int(0, 5))]; };
    auto cat = [&] { return cats[static_cast<std::size_t>(rng.uniform_int(0, 7))]; };
    switch (rng.uniform_int(0, 5)) {
        case 0: return Program::filter_exist(color());
        case 1: return Program::filter_exist(cat());
        case 2:
            return Program{{{OpKind::Filter, color()}, {OpKind::Filter, cat()}, {OpKind::Exist, ""}}};
        case 3:
            return rng.uniform() < 0.5 ? Program::filter_query(color(), "category")
                                       : Program::filter_query(cat(), "color");
        case 4: return rng.uniform() < 0.5 ? Program::filter_count(cat()) : Program::filter_count(color());
        default: {
            std::string c = cat();
            return Program{{{OpKind::Filter, color()}, {OpKind::Filter, c}, {OpKind::Count, c}}};
        }
    }
}

}  // namespace

TEST_CASE("the three template families parse to their programs") {
    CHECK(parse_ok("is there a yellow part of the chair") ==
          Program::filter_exist("yellow"));
    CHECK(parse_ok("what is the category of the green part of the chair?") ==
          Program::filter_query("green", "category"));
    CHECK(parse_ok("how many legs does the table have?") == Program::filter_count("leg"));
}

TEST_CASE("parsing is case insensitive and tolerates punctuation") {
    CHECK(parse_ok("Is THERE a RED part of the Table?") == Program::filter_exist("red"));
    CHECK(parse_ok("How many wheels does the cart have") == Program::filter_count("wheel"));
    CHECK(parse_ok("is there a brown part of the <shape>?") == Program::filter_exist("brown"));
}

TEST_CASE("chained filters and count variants parse") {
    Program two = parse_ok("is there a red leg part of the table?");
    REQUIRE(two.ops.size() == 3);
    CHECK(two.ops[0] == Op{OpKind::Filter, "red"});
    CHECK(two.ops[1] == Op{OpKind::Filter, "leg"});
    CHECK(two.ops[2].kind == OpKind::Exist);

    Program color_count = parse_ok("how many red parts does the table have?");
    CHECK(color_count == Program::filter_count("red"));

    Program mixed = parse_ok("how many green wheels does the cart have?");
    REQUIRE(mixed.ops.size() == 3);
    CHECK(mixed.ops[0] == Op{OpKind::Filter, "green"});
    CHECK(mixed.ops[1] == Op{OpKind::Filter, "wheel"});
    CHECK(mixed.ops[2] == Op{OpKind::Count, "wheel"});

    CHECK(parse_ok("how many bodies does the bag have?") == Program::filter_count("body"));
}

TEST_CASE("render produces the canonical question") {
    CHECK(render(Program::filter_exist("red"), tax()) == "is there a red part of the shape?");
    CHECK(render(Program::filter_count("leg"), tax(), "table") ==
          "how many legs does the table have?");
    CHECK(render(Program::filter_query("green", "category"), tax(), "chair") ==
          "what is the category of the green part of the chair?");
}

TEST_CASE("render then parse is the identity on 1000 random programs") {
    Rng rng(31337);
    for (int i = 0; i < 1000; ++i) {
        Program p = random_valid_program(rng);
        REQUIRE(!validate(p, tax()).has_value());
        std::string text = render(p, tax());
        CHECK(parse_ok(text) == p);
    }
}

TEST_CASE("parse then render is the identity on canonical text") {
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        Program p = random_valid_program(rng);
        std::string text = render(p, tax());
        CHECK(render(parse_ok(text), tax()) == text);
    }
}

TEST_CASE("validation enforces the structural rules") {
    // bare terminal needs a filter
    Program bare{{{OpKind::Exist, ""}}};
    CHECK(validate(bare, tax()).has_value());

    CHECK(!validate(Program::filter_count("leg"), tax()).has_value());

    // terminal position rule
    Program backwards{{{OpKind::Query, "color"}, {OpKind::Filter, "red"}}};
    CHECK(validate(backwards, tax()).has_value());

    // querying the filtered attribute's own value is degenerate
    Program degenerate = Program::filter_query("green", "color");
    CHECK(validate(degenerate, tax()).has_value());

    // count concept must match the nearest filter
    Program mismatched{{{OpKind::Filter, "leg"}, {OpKind::Count, "wheel"}}};
    CHECK(validate(mismatched, tax()).has_value());

    Program empty;
    CHECK(validate(empty, tax()).has_value());

    Program unknown{{{OpKind::Filter, "purple"}, {OpKind::Exist, ""}}};
    CHECK(validate(unknown, tax()).has_value());
}

TEST_CASE("parse errors carry a position and an expectation") {
    ParseError e1 = parse_err("is there a purple part of the table?");
    CHECK(e1.position < std::string("is there a purple part of the table?").size());
    CHECK(e1.expected.find("concept") != std::string::npos);

    ParseError e2 = parse_err("how many legs does the table");
    CHECK(e2.expected.find("have") != std::string::npos);

    ParseError e3 = parse_err("why is the sky blue?");
    CHECK(e3.expected.find("is") != std::string::npos);

    ParseError e4 = parse_err("is there a red part of the rocket?");
    CHECK(e4.expected.find("shape noun") != std::string::npos);
}

TEST_CASE("parser work is linear in the token count") {
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        Program p = random_valid_program(rng);
        std::string text = render(p, tax());
        ParseStats stats;
        parse_ok(text, &stats);
        CHECK(stats.advances <= stats.tokens);
    }
    ParseStats stats;
    auto r = parse("is there a a a a a a a a a a part of the table", tax(), &stats);
    CHECK(std::holds_alternative<ParseError>(r));
    CHECK(stats.advances <= stats.tokens);
}

TEST_CASE("every generated question parses back to its reference program") {
    int total = 0;
    for (std::uint64_t seed = 200; seed < 240; ++seed) {
        for (const auto& family : {"table", "chair", "bag", "cart"}) {
            data::ShapeSpec shape = data::generate_shape(family, seed);
            for (const auto& item : data::generate_qa(shape, 8, seed)) {
                CHECK(parse_ok(item.question) == item.program);
                ++total;
            }
        }
    }
    CHECK(total == 40 * 4 * 8);
}

TEST_CASE("program json round trip") {
    Program p{{{OpKind::Filter, "red"}, {OpKind::Filter, "leg"}, {OpKind::Count, "leg"}}};
    CHECK(Program::from_json(p.to_json()) == p);
    CHECK(p.describe() == "Filter(red) -> Filter(leg) -> Count(leg)");
}
