#include <doctest.h>

#include "abscribe/document.hpp"
#include "abscribe/error.hpp"
#include "model_oracle.hpp"

#include <set>

using namespace abscribe;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidRequest;
}

std::vector<std::string> plain_texts(const Block& b) {
    std::vector<std::string> out;
    for (const auto& run : b.runs) {
        if (const auto* p = std::get_if<PlainText>(&run)) {
            out.push_back(p->text);
        } else {
            out.push_back("<C>");
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("document") {
    TEST_CASE("import splits lines into blocks") {
        const auto doc = import_plain_text("t", "one\r\ntwo\n\nfour\n");
        REQUIRE(doc.blocks.size() == 4);
        CHECK(block_text(doc.blocks[2]).empty());
        CHECK(flatten(doc) == "one\ntwo\n\nfour");
        CHECK(validate(doc).empty());
        CHECK(import_plain_text("t", "").blocks.size() == 1);
    }

    TEST_CASE("create_component over part of a block") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto& b = doc.blocks[0];
        const auto created = create_component(doc, Span{b.id, 5, 18});
        CHECK(plain_texts(doc.blocks[0]) == std::vector<std::string>{"Dear ", "<C>", ","});
        const auto* c = find_component(doc, created.component_id);
        REQUIRE(c);
        REQUIRE(c->variations.size() == 1);
        CHECK(c->variations[0].text == "Prof. Bardley");
        CHECK(c->selected_id == created.variation_id);
        CHECK(std::holds_alternative<HumanOrigin>(c->variations[0].origin));
        CHECK(flatten(doc) == "Dear Prof. Bardley,");
    }

    TEST_CASE("create_component over a whole block") {
        auto doc = import_plain_text("t", "Whole paragraph.");
        create_component(doc, Span{doc.blocks[0].id, 0, 16});
        CHECK(plain_texts(doc.blocks[0]) == std::vector<std::string>{"<C>"});
        CHECK(validate(doc).empty());
    }

    TEST_CASE("create_component span errors") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto bid = doc.blocks[0].id;
        create_component(doc, Span{bid, 5, 18});
        CHECK(code_of([&] { create_component(doc, Span{bid, 3, 8}); }) == ErrorCode::SpanCrossesComponent);
        CHECK(code_of([&] { create_component(doc, Span{bid, 5, 18}); }) == ErrorCode::SpanCrossesComponent);
        CHECK(code_of([&] { create_component(doc, Span{bid, 2, 2}); }) == ErrorCode::EmptySpan);
        CHECK(code_of([&] { create_component(doc, Span{bid, 4, 2}); }) == ErrorCode::EmptySpan);
        CHECK(code_of([&] { create_component(doc, Span{bid, 0, 20}); }) == ErrorCode::SpanOutOfBounds);
        CHECK(code_of([&] { create_component(doc, Span{"nope", 0, 1}); }) == ErrorCode::UnknownBlock);
        // Abutting spans are fine.
        create_component(doc, Span{bid, 0, 5});
        create_component(doc, Span{bid, 18, 19});
        CHECK(component_count(doc) == 3);
    }

    TEST_CASE("spans count unicode scalars") {
        auto doc = import_plain_text("t", "héllo 漢字 😀!");
        const auto created = create_component(doc, Span{doc.blocks[0].id, 6, 8});
        CHECK(find_component(doc, created.component_id)->selected().text == "漢字");
        CHECK(block_length(doc.blocks[0]) == 11);
    }

    TEST_CASE("add_variation appends without changing the selection") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 5, 18});
        const auto before = flatten(doc);
        const auto v = add_variation(doc, c.component_id, "Hi Professor,");
        const auto* comp = find_component(doc, c.component_id);
        CHECK(comp->variations.size() == 2);
        CHECK(comp->selected_id == c.variation_id);
        CHECK(comp->variations[1].id == v);
        CHECK(flatten(doc) == before);
        for (int i = 0; i < 7; ++i) add_variation(doc, c.component_id, "v" + std::to_string(i));
        CHECK(find_component(doc, c.component_id)->variations.size() == 9);
        CHECK(flatten(doc) == before);
        CHECK(code_of([&] { add_variation(doc, "nope", "x"); }) == ErrorCode::UnknownComponent);
    }

    TEST_CASE("select_variation") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 5, 18});
        const auto b = add_variation(doc, c.component_id, "Sir");
        const Document before = doc;
        select_variation(doc, c.component_id, c.variation_id);
        CHECK(doc.blocks == before.blocks);
        select_variation(doc, c.component_id, b);
        CHECK(flatten(doc) == "Dear Sir,");

        auto other = import_plain_text("t", "xyz");
        const auto c2 = create_component(other, Span{other.blocks[0].id, 0, 1});
        CHECK(code_of([&] { select_variation(doc, c.component_id, c2.variation_id); }) ==
              ErrorCode::UnknownVariation);
        CHECK(code_of([&] { select_variation(doc, "nope", b); }) == ErrorCode::UnknownComponent);
    }

    TEST_CASE("delete_variation reselects predecessor, else successor") {
        auto doc = import_plain_text("t", "A text");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 0, 1});
        const auto a = c.variation_id;
        const auto b = add_variation(doc, c.component_id, "B");
        const auto cc = add_variation(doc, c.component_id, "C");
        select_variation(doc, c.component_id, b);
        delete_variation(doc, c.component_id, b);
        auto* comp = find_component(doc, c.component_id);
        CHECK(comp->variations.size() == 2);
        CHECK(comp->selected_id == a);

        delete_variation(doc, c.component_id, a);
        comp = find_component(doc, c.component_id);
        CHECK(comp->selected_id == cc);
        CHECK(code_of([&] { delete_variation(doc, c.component_id, cc); }) == ErrorCode::LastVariation);
        CHECK(code_of([&] { delete_variation(doc, c.component_id, "nope"); }) == ErrorCode::UnknownVariation);
    }

    TEST_CASE("deleting a non-selected variation keeps the selection") {
        auto doc = import_plain_text("t", "A text");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 0, 1});
        const auto b = add_variation(doc, c.component_id, "B");
        delete_variation(doc, c.component_id, b);
        CHECK(find_component(doc, c.component_id)->selected_id == c.variation_id);
    }

    TEST_CASE("edit_variation_text") {
        auto doc = import_plain_text("t", "Hello world");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 0, 5});
        const auto b = add_variation(doc, c.component_id, "Hi");
        edit_variation_text(doc, c.component_id, b, "Hey");
        CHECK(flatten(doc) == "Hello world");
        edit_variation_text(doc, c.component_id, c.variation_id, "Howdy");
        CHECK(flatten(doc) == "Howdy world");
        edit_variation_text(doc, c.component_id, c.variation_id, "");
        CHECK(flatten(doc) == " world");
        CHECK(std::holds_alternative<HumanOrigin>(find_component(doc, c.component_id)->variations[0].origin));
        CHECK(code_of([&] { edit_variation_text(doc, c.component_id, "nope", "x"); }) ==
              ErrorCode::UnknownVariation);
        CHECK(code_of([&] { edit_variation_text(doc, c.component_id, b, "\xFF"); }) == ErrorCode::InvalidText);
    }

    TEST_CASE("clone_variation selects the copy") {
        auto doc = import_plain_text("t", "Hello world");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 0, 5});
        const auto copy = clone_variation(doc, c.component_id, c.variation_id);
        const auto* comp = find_component(doc, c.component_id);
        CHECK(comp->variations.size() == 2);
        CHECK(comp->selected_id == copy);
        CHECK(comp->variations[1].text == "Hello");
        CHECK(std::get<CloneOrigin>(comp->variations[1].origin).source_variation_id == c.variation_id);
        edit_variation_text(doc, c.component_id, copy, "Bye");
        CHECK(find_component(doc, c.component_id)->variations[0].text == "Hello");
        CHECK(code_of([&] { clone_variation(doc, c.component_id, "nope"); }) == ErrorCode::UnknownVariation);
    }

    TEST_CASE("dissolve_component restores plain text") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 5, 18});
        add_variation(doc, c.component_id, "Sir");
        const auto before = flatten(doc);
        dissolve_component(doc, c.component_id);
        CHECK(plain_texts(doc.blocks[0]) == std::vector<std::string>{"Dear Prof. Bardley,"});
        CHECK(flatten(doc) == before);
        CHECK(code_of([&] { dissolve_component(doc, c.component_id); }) == ErrorCode::UnknownComponent);
    }

    TEST_CASE("insert_plain_text") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,");
        const auto bid = doc.blocks[0].id;
        insert_plain_text(doc, bid, 0, ">> ");
        CHECK(flatten(doc) == ">> Dear Prof. Bardley,");
        const auto c = create_component(doc, Span{bid, 8, 21});
        // at the component's edges text joins the neighbouring plain runs
        insert_plain_text(doc, bid, 8, "[");
        insert_plain_text(doc, bid, 22, "]");
        CHECK(flatten(doc) == ">> Dear [Prof. Bardley],");
        CHECK(plain_texts(doc.blocks[0]) == std::vector<std::string>{">> Dear [", "<C>", "],"});
        CHECK(code_of([&] { insert_plain_text(doc, bid, 12, "x"); }) == ErrorCode::SpanCrossesComponent);
        CHECK(code_of([&] { insert_plain_text(doc, bid, 99, "x"); }) == ErrorCode::OutOfBounds);
        CHECK(find_component(doc, c.component_id)->selected().text == "Prof. Bardley");
    }

    TEST_CASE("insert next to a component-only block creates a plain run") {
        auto doc = import_plain_text("t", "abc");
        const auto bid = doc.blocks[0].id;
        create_component(doc, Span{bid, 0, 3});
        insert_plain_text(doc, bid, 3, "!");
        insert_plain_text(doc, bid, 0, "<");
        CHECK(plain_texts(doc.blocks[0]) == std::vector<std::string>{"<", "<C>", "!"});
        CHECK(validate(doc).empty());
    }

    TEST_CASE("delete_plain_range") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley, hi");
        const auto bid = doc.blocks[0].id;
        const auto c = create_component(doc, Span{bid, 5, 18});
        delete_plain_range(doc, Span{bid, 0, 5});
        CHECK(flatten(doc) == "Prof. Bardley, hi");
        delete_plain_range(doc, Span{bid, 13, 14});
        CHECK(flatten(doc) == "Prof. Bardley hi");
        CHECK(find_component(doc, c.component_id));
        CHECK(code_of([&] { delete_plain_range(doc, Span{bid, 10, 15}); }) == ErrorCode::SpanCrossesComponent);
        CHECK(code_of([&] { delete_plain_range(doc, Span{bid, 14, 14}); }) == ErrorCode::EmptySpan);
        CHECK(code_of([&] { delete_plain_range(doc, Span{bid, 14, 30}); }) == ErrorCode::SpanOutOfBounds);
    }

    TEST_CASE("blocks") {
        auto doc = import_plain_text("t", "one\ntwo");
        const auto id = insert_block(doc, 1, "middle");
        CHECK(flatten(doc) == "one\nmiddle\ntwo");
        CHECK(code_of([&] { insert_block(doc, 9, "x"); }) == ErrorCode::OutOfBounds);
        create_component(doc, Span{id, 0, 3});
        CHECK(code_of([&] { delete_block(doc, id); }) == ErrorCode::BlockHasComponents);
        delete_block(doc, doc.blocks[0].id);
        CHECK(flatten(doc) == "middle\ntwo");
        CHECK(code_of([&] { delete_block(doc, "nope"); }) == ErrorCode::UnknownBlock);
        const auto empty = insert_block(doc, 0, "");
        CHECK(plain_texts(*find_block(doc, empty)) == std::vector<std::string>{""});
    }

    TEST_CASE("list_components follows document order") {
        auto doc = import_plain_text("t", "aaa bbb\nccc");
        CHECK(list_components(doc).empty());
        const auto later = create_component(doc, Span{doc.blocks[0].id, 4, 7});
        const auto earlier = create_component(doc, Span{doc.blocks[0].id, 0, 3});
        const auto third = create_component(doc, Span{doc.blocks[1].id, 0, 3});
        add_variation(doc, earlier.component_id, "x");
        const auto list = list_components(doc);
        REQUIRE(list.size() == 3);
        CHECK(list[0].component_id == earlier.component_id);
        CHECK(list[1].component_id == later.component_id);
        CHECK(list[2].component_id == third.component_id);
        CHECK(list[0].variations.size() == 2);
        CHECK(list[0].variations[0].selected);
        CHECK_FALSE(list[0].variations[1].selected);
        // moving the first block after the second changes the order
        insert_block(doc, 0, "new first");
        CHECK(list_components(doc).front().component_id == earlier.component_id);
    }

    TEST_CASE("flatten with an assignment") {
        auto doc = import_plain_text("t", "Dear Prof. Bardley,\nThanks");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 5, 18});
        const auto b = add_variation(doc, c.component_id, "Dr. B");
        CHECK(flatten(doc, {{c.component_id, b}}) == "Dear Dr. B,\nThanks");
        CHECK(code_of([&] { flatten(doc, {{c.component_id, "nope"}}); }) == ErrorCode::UnknownVariation);
        CHECK(code_of([&] { flatten(doc, {{"nope", b}}); }) == ErrorCode::UnknownComponent);
        // identity assignment equals the default
        CHECK(flatten(doc, {{c.component_id, c.variation_id}}) == flatten(doc));
    }

    TEST_CASE("assignment override matches a string-substitution oracle") {
        const std::string original = "We met at the cafe. It rained. Later we left.";
        auto doc = import_plain_text("t", original);
        const auto bid = doc.blocks[0].id;
        const std::string target = "It rained.";
        const std::size_t at = original.find(target);
        const auto c = create_component(doc, Span{bid, at, at + target.size()});
        const auto other = add_variation(doc, c.component_id, "The sun came out.");
        // Oracle: replace the target substring directly in the original.
        std::string expected = original;
        expected.replace(at, target.size(), "The sun came out.");
        CHECK(flatten(doc, {{c.component_id, other}}) == expected);
        CHECK(flatten(doc) == original);
        // The outputs differ exactly at the component's position.
        const auto overridden = flatten(doc, {{c.component_id, other}});
        CHECK(overridden.substr(0, at) == original.substr(0, at));
        CHECK(overridden.substr(overridden.size() - 14) == original.substr(original.size() - 14));
    }

    TEST_CASE("enumerating assignments over 3 components x 9 variations gives 729 outputs") {
        auto doc = import_plain_text("t", "alpha beta gamma");
        const auto bid = doc.blocks[0].id;
        std::vector<CreatedComponent> comps;
        comps.push_back(create_component(doc, Span{bid, 11, 16}));
        comps.push_back(create_component(doc, Span{bid, 6, 10}));
        comps.push_back(create_component(doc, Span{bid, 0, 5}));
        std::vector<std::vector<std::string>> ids(3), texts(3);
        for (std::size_t k = 0; k < 3; ++k) {
            ids[k].push_back(comps[k].variation_id);
            texts[k].push_back(find_component(doc, comps[k].component_id)->selected().text);
            for (int v = 1; v < 9; ++v) {
                const std::string t = "c" + std::to_string(k) + "v" + std::to_string(v);
                ids[k].push_back(add_variation(doc, comps[k].component_id, t));
                texts[k].push_back(t);
            }
        }
        // Brute force: every assignment, against a direct string build.
        std::set<std::string> outputs;
        for (int i = 0; i < 9; ++i) {
            for (int j = 0; j < 9; ++j) {
                for (int k = 0; k < 9; ++k) {
                    Assignment a{{comps[0].component_id, ids[0][i]},
                                 {comps[1].component_id, ids[1][j]},
                                 {comps[2].component_id, ids[2][k]}};
                    const auto out = flatten(doc, a);
                    CHECK(out == texts[2][k] + " " + texts[1][j] + " " + texts[0][i]);
                    outputs.insert(out);
                }
            }
        }
        CHECK(outputs.size() == 729);
    }

    TEST_CASE("invalid UTF-8 is rejected") {
        auto doc = import_plain_text("t", "abc");
        CHECK(code_of([&] { insert_plain_text(doc, doc.blocks[0].id, 0, "\xC3"); }) == ErrorCode::InvalidText);
        CHECK(code_of([&] { insert_block(doc, 0, "\xFF"); }) == ErrorCode::InvalidText);
    }

    TEST_CASE("validate reports broken invariants") {
        auto doc = import_plain_text("t", "abc");
        const auto c = create_component(doc, Span{doc.blocks[0].id, 0, 1});
        auto broken = doc;
        std::get<VariationComponent>(broken.blocks[0].runs[0]).selected_id = "missing";
        CHECK_FALSE(validate(broken).empty());
        broken = doc;
        broken.blocks[0].runs.push_back(PlainText{"x"});
        CHECK_FALSE(validate(broken).empty());
        broken = doc;
        broken.blocks.push_back(broken.blocks[0]);
        CHECK(validate(broken).size() >= 2);
        CHECK(validate(doc).empty());
        (void)c;
    }

    TEST_CASE("mutations update updated_at") {
        ids::set_fixed_clock(Timestamp{1000});
        auto doc = import_plain_text("t", "abc");
        ids::set_fixed_clock(Timestamp{2000});
        create_component(doc, Span{doc.blocks[0].id, 0, 1});
        CHECK(doc.created_at.unix_ms == 1000);
        CHECK(doc.updated_at.unix_ms == 2000);
        ids::set_fixed_clock(std::nullopt);
    }

    TEST_CASE("random operation logs agree with the reference model") {
        const auto report = oracle::run(7, 150, 200);
        INFO(report.mismatch.value_or(""));
        CHECK_FALSE(report.mismatch);
        CHECK(report.logs == 150);
        CHECK(report.errors_matched > 0);
    }
}
