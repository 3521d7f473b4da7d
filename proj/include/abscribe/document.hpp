#pragma once

#include "abscribe/ids.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// In-memory document model: blocks of plain text interleaved with Variation
// Components, plus every operation that edits them. No I/O happens here.
//
// A component lives inside the run that references it, so "referenced
// exactly once" holds by construction. Block offsets count Unicode scalar
// values in the block's flattened text, where each component contributes
// the length of its selected variation.
namespace abscribe {

struct HumanOrigin {
    bool operator==(const HumanOrigin&) const = default;
};

struct ButtonOrigin {
    std::string button_id;
    std::string source_variation_id;
    bool operator==(const ButtonOrigin&) const = default;
};

struct AdhocOrigin {
    std::string prompt_text;
    std::string source_variation_id;
    bool operator==(const AdhocOrigin&) const = default;
};

struct CloneOrigin {
    std::string source_variation_id;
    bool operator==(const CloneOrigin&) const = default;
};

// Provenance ids are kept even after the referenced entity is deleted.
using Origin = std::variant<HumanOrigin, ButtonOrigin, AdhocOrigin, CloneOrigin>;

struct Variation {
    std::string id;
    std::string text;
    Origin origin;
    Timestamp created_at;

    bool operator==(const Variation&) const = default;
};

struct VariationComponent {
    std::string id;
    std::vector<Variation> variations;  // creation order
    std::string selected_id;

    const Variation* find(std::string_view variation_id) const;
    Variation* find(std::string_view variation_id);
    const Variation& selected() const;

    bool operator==(const VariationComponent&) const = default;
};

struct PlainText {
    std::string text;
    bool operator==(const PlainText&) const = default;
};

using Run = std::variant<PlainText, VariationComponent>;

struct Block {
    std::string id;
    std::vector<Run> runs;

    bool operator==(const Block&) const = default;
};

struct Document {
    std::string id;
    std::string title;
    std::vector<Block> blocks;
    Timestamp created_at;
    Timestamp updated_at;

    bool operator==(const Document&) const = default;
};

// Half-open [start, end) inside one block.
struct Span {
    std::string block_id;
    std::size_t start = 0;
    std::size_t end = 0;
};

// component id -> variation id
using Assignment = std::map<std::string, std::string, std::less<>>;

struct VariationSummary {
    std::string id;
    std::string text;
    bool selected = false;
    Origin origin;

    bool operator==(const VariationSummary&) const = default;
};

struct ComponentSummary {
    std::string component_id;
    std::string block_id;
    std::vector<VariationSummary> variations;

    bool operator==(const ComponentSummary&) const = default;
};

struct CreatedComponent {
    std::string component_id;
    std::string variation_id;
};

// Flattened text on either side of a component or an insertion point.
struct FlatSplit {
    std::string before;
    std::string after;
};

Document new_document(std::string title);

// One block per line; a single trailing newline is ignored and CRLF is
// read as LF.
Document import_plain_text(std::string title, std::string_view text);

CreatedComponent create_component(Document& doc, const Span& span);
std::string add_variation(Document& doc, std::string_view component_id, std::string text,
                          Origin origin = HumanOrigin{});
void select_variation(Document& doc, std::string_view component_id,
                      std::string_view variation_id);
// Deleting the selected variation selects its predecessor, or its successor
// when it was first.
void delete_variation(Document& doc, std::string_view component_id,
                      std::string_view variation_id);
void edit_variation_text(Document& doc, std::string_view component_id,
                         std::string_view variation_id, std::string new_text);
// The clone is appended and selected.
std::string clone_variation(Document& doc, std::string_view component_id,
                            std::string_view variation_id);
void dissolve_component(Document& doc, std::string_view component_id);

void insert_plain_text(Document& doc, std::string_view block_id, std::size_t offset,
                       std::string_view text);
void delete_plain_range(Document& doc, const Span& span);
std::string insert_block(Document& doc, std::size_t index, std::string_view text);
void delete_block(Document& doc, std::string_view block_id);
void set_title(Document& doc, std::string title);

// Blocks joined by '\n'; each component contributes its assigned variation,
// or its selected one when the assignment has no entry for it.
std::string flatten(const Document& doc, const Assignment& assignment = {});
std::vector<ComponentSummary> list_components(const Document& doc);

const Block* find_block(const Document& doc, std::string_view block_id);
const VariationComponent* find_component(const Document& doc, std::string_view component_id);
std::size_t component_count(const Document& doc);

std::string block_text(const Block& block);
std::size_t block_length(const Block& block);

// True when `offset` is a position where plain text may be inserted.
bool is_plain_position(const Block& block, std::size_t offset);

FlatSplit split_at_component(const Document& doc, std::string_view component_id);
FlatSplit split_at_anchor(const Document& doc, std::string_view block_id, std::size_t offset);

// Every broken invariant, described. Empty means the document is valid.
std::vector<std::string> validate(const Document& doc);

}  // namespace abscribe
