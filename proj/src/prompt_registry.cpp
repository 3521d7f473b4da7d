#include "abscribe/prompt_registry.hpp"

#include "abscribe/error.hpp"
#include "abscribe/text.hpp"

#include <set>
#include <utility>

namespace abscribe {
namespace {

std::string checked_prompt(std::string_view prompt_text) {
    if (!text::is_valid_utf8(prompt_text)) {
        throw Error(ErrorCode::InvalidText, "prompt is not valid UTF-8");
    }
    if (text::is_blank(prompt_text)) throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
    return std::string(text::trim(prompt_text));
}

}  // namespace

std::string fallback_label(std::string_view prompt_text) {
    return text::truncate_at_word(text::collapse_whitespace(prompt_text), kMaxLabelLength);
}

std::string checked_label(std::string_view label) {
    if (!text::is_valid_utf8(label)) throw Error(ErrorCode::InvalidText, "label is not valid UTF-8");
    const auto trimmed = text::trim(label);
    if (trimmed.empty()) throw Error(ErrorCode::EmptyLabel, "label is empty");
    if (text::length(trimmed) > kMaxLabelLength) {
        throw Error(ErrorCode::LabelTooLong,
                    "label exceeds " + std::to_string(kMaxLabelLength) + " characters");
    }
    return std::string(trimmed);
}

PromptRegistry::PromptRegistry(std::vector<PromptButton> buttons) : buttons_(std::move(buttons)) {}

const PromptButton& PromptRegistry::create(std::string_view prompt_text,
                                           const LabelProvider& provider) {
    std::string prompt = checked_prompt(prompt_text);
    std::string label;
    try {
        label = provider ? checked_label(provider(prompt)) : fallback_label(prompt);
    } catch (const std::exception&) {
        label = fallback_label(prompt);
    }
    buttons_.push_back(PromptButton{ids::new_id(), std::move(label), std::move(prompt),
                                    ids::now(), 0});
    return buttons_.back();
}

void PromptRegistry::edit(std::string_view id, std::optional<std::string> new_prompt,
                          std::optional<std::string> new_label) {
    PromptButton& button = get_mutable(id);
    std::optional<std::string> prompt;
    std::optional<std::string> label;
    if (new_prompt) prompt = checked_prompt(*new_prompt);
    if (new_label) label = checked_label(*new_label);
    if (prompt) button.prompt_text = std::move(*prompt);
    if (label) button.label = std::move(*label);
}

void PromptRegistry::remove(std::string_view id) {
    for (auto it = buttons_.begin(); it != buttons_.end(); ++it) {
        if (it->id == id) {
            buttons_.erase(it);
            return;
        }
    }
    throw Error(ErrorCode::UnknownButton, "unknown button " + std::string(id));
}

void PromptRegistry::record_use(std::string_view id) { ++get_mutable(id).use_count; }

const PromptButton* PromptRegistry::find(std::string_view id) const {
    for (const auto& b : buttons_) {
        if (b.id == id) return &b;
    }
    return nullptr;
}

const PromptButton& PromptRegistry::get(std::string_view id) const {
    if (const auto* b = find(id)) return *b;
    throw Error(ErrorCode::UnknownButton, "unknown button " + std::string(id));
}

PromptButton& PromptRegistry::get_mutable(std::string_view id) {
    for (auto& b : buttons_) {
        if (b.id == id) return b;
    }
    throw Error(ErrorCode::UnknownButton, "unknown button " + std::string(id));
}

std::vector<std::string> validate(const PromptRegistry& registry) {
    std::vector<std::string> problems;
    std::set<std::string, std::less<>> seen;
    for (const auto& b : registry.list()) {
        if (!seen.insert(b.id).second) problems.push_back("duplicate button id " + b.id);
        if (text::is_blank(b.label)) problems.push_back("button " + b.id + " has an empty label");
        if (text::length(b.label) > kMaxLabelLength) {
            problems.push_back("button " + b.id + " label is too long");
        }
        if (text::is_blank(b.prompt_text)) {
            problems.push_back("button " + b.id + " has an empty prompt");
        }
    }
    return problems;
}

}  // namespace abscribe
