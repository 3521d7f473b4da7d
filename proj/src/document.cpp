#include "abscribe/document.hpp"

#include "abscribe/error.hpp"
#include "abscribe/text.hpp"

#include <set>
#include <utility>

namespace abscribe {
namespace {

struct Extent {
    std::size_t start;
    std::size_t end;
};

std::size_t run_length(const Run& run) {
    if (const auto* plain = std::get_if<PlainText>(&run)) return text::length(plain->text);
    return text::length(std::get<VariationComponent>(run).selected().text);
}

std::vector<Extent> run_extents(const Block& block) {
    std::vector<Extent> out;
    out.reserve(block.runs.size());
    std::size_t pos = 0;
    for (const auto& run : block.runs) {
        const std::size_t len = run_length(run);
        out.push_back({pos, pos + len});
        pos += len;
    }
    return out;
}

// Merge adjacent plain runs, drop empty ones, keep at least one run.
void normalize(Block& block) {
    std::vector<Run> out;
    out.reserve(block.runs.size());
    for (auto& run : block.runs) {
        if (auto* plain = std::get_if<PlainText>(&run)) {
            if (plain->text.empty()) continue;
            if (!out.empty()) {
                if (auto* prev = std::get_if<PlainText>(&out.back())) {
                    prev->text += plain->text;
                    continue;
                }
            }
        }
        out.push_back(std::move(run));
    }
    if (out.empty()) out.emplace_back(PlainText{});
    block.runs = std::move(out);
}

Block& block_or_throw(Document& doc, std::string_view block_id) {
    for (auto& block : doc.blocks) {
        if (block.id == block_id) return block;
    }
    throw Error(ErrorCode::UnknownBlock, "unknown block " + std::string(block_id));
}

struct ComponentLocation {
    std::size_t block;
    std::size_t run;
};

std::optional<ComponentLocation> locate_component(const Document& doc,
                                                  std::string_view component_id) {
    for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
        const auto& runs = doc.blocks[b].runs;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            const auto* comp = std::get_if<VariationComponent>(&runs[r]);
            if (comp && comp->id == component_id) return ComponentLocation{b, r};
        }
    }
    return std::nullopt;
}

VariationComponent& component_or_throw(Document& doc, std::string_view component_id) {
    const auto loc = locate_component(doc, component_id);
    if (!loc) {
        throw Error(ErrorCode::UnknownComponent, "unknown component " + std::string(component_id));
    }
    return std::get<VariationComponent>(doc.blocks[loc->block].runs[loc->run]);
}

std::size_t variation_index_or_throw(const VariationComponent& comp,
                                     std::string_view variation_id) {
    for (std::size_t i = 0; i < comp.variations.size(); ++i) {
        if (comp.variations[i].id == variation_id) return i;
    }
    throw Error(ErrorCode::UnknownVariation, "unknown variation " + std::string(variation_id) +
                                                 " in component " + comp.id);
}

void require_utf8(std::string_view s) {
    if (!text::is_valid_utf8(s)) throw Error(ErrorCode::InvalidText, "text is not valid UTF-8");
}

void touch(Document& doc) { doc.updated_at = ids::now(); }

// Index of the plain run that fully contains the span. Throws the span
// errors otherwise.
std::size_t plain_run_for_span(const Block& block, const Span& span) {
    const std::size_t len = block_length(block);
    if (span.start > len || span.end > len) {
        throw Error(ErrorCode::SpanOutOfBounds,
                    "span [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                        ") exceeds block length " + std::to_string(len));
    }
    if (span.start >= span.end) throw Error(ErrorCode::EmptySpan, "span is empty");
    const auto extents = run_extents(block);
    for (std::size_t i = 0; i < block.runs.size(); ++i) {
        if (std::holds_alternative<PlainText>(block.runs[i]) && extents[i].start <= span.start &&
            span.end <= extents[i].end) {
            return i;
        }
    }
    throw Error(ErrorCode::SpanCrossesComponent, "span intersects a variation component");
}

struct PieceSplit {
    std::string before;
    std::string middle;
    std::string after;
};

PieceSplit split_plain(const std::string& s, std::size_t from, std::size_t to) {
    const std::size_t b = text::byte_offset(s, from);
    const std::size_t e = text::byte_offset(s, to);
    return {s.substr(0, b), s.substr(b, e - b), s.substr(e)};
}

std::string joined_blocks(const Document& doc, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t b = first; b < last; ++b) {
        if (b != first) out += '\n';
        out += block_text(doc.blocks[b]);
    }
    return out;
}

std::string runs_text(const std::vector<Run>& runs, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t r = first; r < last; ++r) {
        if (const auto* plain = std::get_if<PlainText>(&runs[r])) {
            out += plain->text;
        } else {
            out += std::get<VariationComponent>(runs[r]).selected().text;
        }
    }
    return out;
}

}  // namespace

const Variation* VariationComponent::find(std::string_view variation_id) const {
    for (const auto& v : variations) {
        if (v.id == variation_id) return &v;
    }
    return nullptr;
}

Variation* VariationComponent::find(std::string_view variation_id) {
    for (auto& v : variations) {
        if (v.id == variation_id) return &v;
    }
    return nullptr;
}

const Variation& VariationComponent::selected() const {
    if (const auto* v = find(selected_id)) return *v;
    throw Error(ErrorCode::IntegrityError, "component " + id + " has no valid selection");
}

Document new_document(std::string title) {
    Document doc;
    doc.id = ids::new_id();
    doc.title = std::move(title);
    doc.created_at = ids::now();
    doc.updated_at = doc.created_at;
    return doc;
}

Document import_plain_text(std::string title, std::string_view source) {
    require_utf8(source);
    std::string normalized;
    normalized.reserve(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] == '\r' && i + 1 < source.size() && source[i + 1] == '\n') continue;
        normalized.push_back(source[i]);
    }
    if (!normalized.empty() && normalized.back() == '\n') normalized.pop_back();

    Document doc = new_document(std::move(title));
    std::size_t start = 0;
    while (true) {
        const auto nl = normalized.find('\n', start);
        Block block{ids::new_id(), {PlainText{normalized.substr(start, nl - start)}}};
        normalize(block);
        doc.blocks.push_back(std::move(block));
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return doc;
}

CreatedComponent create_component(Document& doc, const Span& span) {
    Block& block = block_or_throw(doc, span.block_id);
    const std::size_t idx = plain_run_for_span(block, span);
    const std::size_t run_start = run_extents(block)[idx].start;
    auto pieces = split_plain(std::get<PlainText>(block.runs[idx]).text, span.start - run_start,
                              span.end - run_start);

    VariationComponent comp;
    comp.id = ids::new_id();
    Variation first{ids::new_id(), std::move(pieces.middle), HumanOrigin{}, ids::now()};
    comp.selected_id = first.id;
    comp.variations.push_back(std::move(first));
    CreatedComponent created{comp.id, comp.selected_id};

    std::vector<Run> replacement;
    replacement.emplace_back(PlainText{std::move(pieces.before)});
    replacement.emplace_back(std::move(comp));
    replacement.emplace_back(PlainText{std::move(pieces.after)});
    block.runs.erase(block.runs.begin() + static_cast<std::ptrdiff_t>(idx));
    block.runs.insert(block.runs.begin() + static_cast<std::ptrdiff_t>(idx),
                      std::make_move_iterator(replacement.begin()),
                      std::make_move_iterator(replacement.end()));
    normalize(block);
    touch(doc);
    return created;
}

std::string add_variation(Document& doc, std::string_view component_id, std::string text,
                          Origin origin) {
    require_utf8(text);
    VariationComponent& comp = component_or_throw(doc, component_id);
    Variation v{ids::new_id(), std::move(text), std::move(origin), ids::now()};
    std::string id = v.id;
    comp.variations.push_back(std::move(v));
    touch(doc);
    return id;
}

void select_variation(Document& doc, std::string_view component_id,
                      std::string_view variation_id) {
    VariationComponent& comp = component_or_throw(doc, component_id);
    const std::size_t idx = variation_index_or_throw(comp, variation_id);
    if (comp.selected_id == comp.variations[idx].id) return;
    comp.selected_id = comp.variations[idx].id;
    touch(doc);
}

void delete_variation(Document& doc, std::string_view component_id,
                      std::string_view variation_id) {
    VariationComponent& comp = component_or_throw(doc, component_id);
    const std::size_t idx = variation_index_or_throw(comp, variation_id);
    if (comp.variations.size() < 2) {
        throw Error(ErrorCode::LastVariation,
                    "cannot delete the only variation; dissolve the component instead");
    }
    if (comp.selected_id == comp.variations[idx].id) {
        comp.selected_id = comp.variations[idx > 0 ? idx - 1 : idx + 1].id;
    }
    comp.variations.erase(comp.variations.begin() + static_cast<std::ptrdiff_t>(idx));
    touch(doc);
}

void edit_variation_text(Document& doc, std::string_view component_id,
                         std::string_view variation_id, std::string new_text) {
    require_utf8(new_text);
    VariationComponent& comp = component_or_throw(doc, component_id);
    const std::size_t idx = variation_index_or_throw(comp, variation_id);
    comp.variations[idx].text = std::move(new_text);
    touch(doc);
}

std::string clone_variation(Document& doc, std::string_view component_id,
                            std::string_view variation_id) {
    VariationComponent& comp = component_or_throw(doc, component_id);
    const std::size_t idx = variation_index_or_throw(comp, variation_id);
    const Variation& source = comp.variations[idx];
    Variation copy{ids::new_id(), source.text, CloneOrigin{source.id}, ids::now()};
    comp.selected_id = copy.id;
    std::string id = copy.id;
    comp.variations.push_back(std::move(copy));
    touch(doc);
    return id;
}

void dissolve_component(Document& doc, std::string_view component_id) {
    const auto loc = locate_component(doc, component_id);
    if (!loc) {
        throw Error(ErrorCode::UnknownComponent, "unknown component " + std::string(component_id));
    }
    Block& block = doc.blocks[loc->block];
    std::string kept = std::get<VariationComponent>(block.runs[loc->run]).selected().text;
    block.runs[loc->run] = PlainText{std::move(kept)};
    normalize(block);
    touch(doc);
}

void insert_plain_text(Document& doc, std::string_view block_id, std::size_t offset,
                       std::string_view inserted) {
    require_utf8(inserted);
    Block& block = block_or_throw(doc, block_id);
    const std::size_t len = block_length(block);
    if (offset > len) {
        throw Error(ErrorCode::OutOfBounds, "offset " + std::to_string(offset) +
                                                " exceeds block length " + std::to_string(len));
    }
    const auto extents = run_extents(block);
    for (std::size_t i = 0; i < block.runs.size(); ++i) {
        auto* plain = std::get_if<PlainText>(&block.runs[i]);
        if (plain && extents[i].start <= offset && offset <= extents[i].end) {
            if (inserted.empty()) return;
            const std::size_t at = text::byte_offset(plain->text, offset - extents[i].start);
            plain->text.insert(at, inserted);
            normalize(block);
            touch(doc);
            return;
        }
    }
    std::size_t insert_at = block.runs.size();
    for (std::size_t i = 0; i < block.runs.size(); ++i) {
        if (extents[i].start < offset && offset < extents[i].end) {
            throw Error(ErrorCode::SpanCrossesComponent,
                        "offset " + std::to_string(offset) + " is inside a variation component");
        }
        if (insert_at == block.runs.size() && extents[i].start >= offset) insert_at = i;
    }
    if (inserted.empty()) return;
    block.runs.insert(block.runs.begin() + static_cast<std::ptrdiff_t>(insert_at),
                      PlainText{std::string(inserted)});
    normalize(block);
    touch(doc);
}

void delete_plain_range(Document& doc, const Span& span) {
    Block& block = block_or_throw(doc, span.block_id);
    const std::size_t idx = plain_run_for_span(block, span);
    const std::size_t run_start = run_extents(block)[idx].start;
    auto& plain = std::get<PlainText>(block.runs[idx]);
    auto pieces = split_plain(plain.text, span.start - run_start, span.end - run_start);
    plain.text = pieces.before + pieces.after;
    normalize(block);
    touch(doc);
}

std::string insert_block(Document& doc, std::size_t index, std::string_view content) {
    require_utf8(content);
    if (index > doc.blocks.size()) {
        throw Error(ErrorCode::OutOfBounds, "block index " + std::to_string(index) +
                                                " exceeds block count " +
                                                std::to_string(doc.blocks.size()));
    }
    Block block{ids::new_id(), {PlainText{std::string(content)}}};
    normalize(block);
    std::string id = block.id;
    doc.blocks.insert(doc.blocks.begin() + static_cast<std::ptrdiff_t>(index), std::move(block));
    touch(doc);
    return id;
}

void delete_block(Document& doc, std::string_view block_id) {
    for (auto it = doc.blocks.begin(); it != doc.blocks.end(); ++it) {
        if (it->id != block_id) continue;
        for (const auto& run : it->runs) {
            if (std::holds_alternative<VariationComponent>(run)) {
                throw Error(ErrorCode::BlockHasComponents,
                            "block " + it->id + " contains variation components; dissolve them first");
            }
        }
        doc.blocks.erase(it);
        touch(doc);
        return;
    }
    throw Error(ErrorCode::UnknownBlock, "unknown block " + std::string(block_id));
}

void set_title(Document& doc, std::string title) {
    require_utf8(title);
    doc.title = std::move(title);
    touch(doc);
}

std::string flatten(const Document& doc, const Assignment& assignment) {
    for (const auto& [component_id, variation_id] : assignment) {
        const auto* comp = find_component(doc, component_id);
        if (!comp) throw Error(ErrorCode::UnknownComponent, "unknown component " + component_id);
        variation_index_or_throw(*comp, variation_id);
    }
    std::string out;
    for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
        if (b != 0) out += '\n';
        for (const auto& run : doc.blocks[b].runs) {
            if (const auto* plain = std::get_if<PlainText>(&run)) {
                out += plain->text;
                continue;
            }
            const auto& comp = std::get<VariationComponent>(run);
            const auto it = assignment.find(comp.id);
            out += it == assignment.end() ? comp.selected().text : comp.find(it->second)->text;
        }
    }
    return out;
}

std::vector<ComponentSummary> list_components(const Document& doc) {
    std::vector<ComponentSummary> out;
    for (const auto& block : doc.blocks) {
        for (const auto& run : block.runs) {
            const auto* comp = std::get_if<VariationComponent>(&run);
            if (!comp) continue;
            ComponentSummary summary{comp->id, block.id, {}};
            for (const auto& v : comp->variations) {
                summary.variations.push_back({v.id, v.text, v.id == comp->selected_id, v.origin});
            }
            out.push_back(std::move(summary));
        }
    }
    return out;
}

const Block* find_block(const Document& doc, std::string_view block_id) {
    for (const auto& block : doc.blocks) {
        if (block.id == block_id) return &block;
    }
    return nullptr;
}

const VariationComponent* find_component(const Document& doc, std::string_view component_id) {
    const auto loc = locate_component(doc, component_id);
    if (!loc) return nullptr;
    return &std::get<VariationComponent>(doc.blocks[loc->block].runs[loc->run]);
}

std::size_t component_count(const Document& doc) {
    std::size_t n = 0;
    for (const auto& block : doc.blocks) {
        for (const auto& run : block.runs) n += std::holds_alternative<VariationComponent>(run);
    }
    return n;
}

std::string block_text(const Block& block) { return runs_text(block.runs, 0, block.runs.size()); }

std::size_t block_length(const Block& block) {
    std::size_t n = 0;
    for (const auto& run : block.runs) n += run_length(run);
    return n;
}

bool is_plain_position(const Block& block, std::size_t offset) {
    if (offset > block_length(block)) return false;
    const auto extents = run_extents(block);
    for (std::size_t i = 0; i < block.runs.size(); ++i) {
        if (std::holds_alternative<VariationComponent>(block.runs[i]) &&
            extents[i].start < offset && offset < extents[i].end) {
            return false;
        }
    }
    return true;
}

FlatSplit split_at_component(const Document& doc, std::string_view component_id) {
    const auto loc = locate_component(doc, component_id);
    if (!loc) {
        throw Error(ErrorCode::UnknownComponent, "unknown component " + std::string(component_id));
    }
    const auto& runs = doc.blocks[loc->block].runs;
    FlatSplit split;
    split.before = joined_blocks(doc, 0, loc->block);
    if (loc->block > 0) split.before += '\n';
    split.before += runs_text(runs, 0, loc->run);
    split.after = runs_text(runs, loc->run + 1, runs.size());
    if (loc->block + 1 < doc.blocks.size()) {
        split.after += '\n';
        split.after += joined_blocks(doc, loc->block + 1, doc.blocks.size());
    }
    return split;
}

FlatSplit split_at_anchor(const Document& doc, std::string_view block_id, std::size_t offset) {
    std::size_t index = doc.blocks.size();
    for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
        if (doc.blocks[b].id == block_id) index = b;
    }
    if (index == doc.blocks.size()) {
        throw Error(ErrorCode::UnknownBlock, "unknown block " + std::string(block_id));
    }
    const Block& block = doc.blocks[index];
    if (offset > block_length(block)) {
        throw Error(ErrorCode::OutOfBounds, "offset " + std::to_string(offset) + " exceeds block length " +
                                                std::to_string(block_length(block)));
    }
    if (!is_plain_position(block, offset)) {
        throw Error(ErrorCode::SpanCrossesComponent,
                    "offset " + std::to_string(offset) + " is inside a variation component");
    }
    const std::string whole = block_text(block);
    const std::size_t cut = text::byte_offset(whole, offset);
    FlatSplit split;
    split.before = joined_blocks(doc, 0, index);
    if (index > 0) split.before += '\n';
    split.before += whole.substr(0, cut);
    split.after = whole.substr(cut);
    if (index + 1 < doc.blocks.size()) {
        split.after += '\n';
        split.after += joined_blocks(doc, index + 1, doc.blocks.size());
    }
    return split;
}

std::vector<std::string> validate(const Document& doc) {
    std::vector<std::string> problems;
    std::set<std::string, std::less<>> block_ids;
    std::set<std::string, std::less<>> component_ids;
    for (const auto& block : doc.blocks) {
        if (!block_ids.insert(block.id).second) problems.push_back("duplicate block id " + block.id);
        if (block.runs.empty()) problems.push_back("block " + block.id + " has no runs");
        for (std::size_t r = 0; r < block.runs.size(); ++r) {
            const auto& run = block.runs[r];
            if (const auto* plain = std::get_if<PlainText>(&run)) {
                if (plain->text.empty() && block.runs.size() > 1) {
                    problems.push_back("block " + block.id + " has an empty plain run");
                }
                if (r > 0 && std::holds_alternative<PlainText>(block.runs[r - 1])) {
                    problems.push_back("block " + block.id + " has consecutive plain runs");
                }
                continue;
            }
            const auto& comp = std::get<VariationComponent>(run);
            if (!component_ids.insert(comp.id).second) {
                problems.push_back("component " + comp.id + " is referenced more than once");
            }
            if (comp.variations.empty()) {
                problems.push_back("component " + comp.id + " has no variations");
            }
            std::set<std::string, std::less<>> variation_ids;
            for (const auto& v : comp.variations) {
                if (!variation_ids.insert(v.id).second) {
                    problems.push_back("component " + comp.id + " has duplicate variation " + v.id);
                }
            }
            if (!comp.find(comp.selected_id)) {
                problems.push_back("component " + comp.id + " selects missing variation " +
                                   comp.selected_id);
            }
        }
    }
    return problems;
}

}  // namespace abscribe
