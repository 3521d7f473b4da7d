#pragma once

#include "abscribe/ids.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abscribe {

inline constexpr std::size_t kMaxLabelLength = 32;

// A reified LLM instruction that can be applied to any component.
struct PromptButton {
    std::string id;
    std::string label;
    std::string prompt_text;
    Timestamp created_at;
    std::uint64_t use_count = 0;

    bool operator==(const PromptButton&) const = default;
};

// Produces a label for a prompt; throws on failure.
using LabelProvider = std::function<std::string(std::string_view prompt_text)>;

// First kMaxLabelLength characters of the prompt, cut at a word boundary
// when possible.
std::string fallback_label(std::string_view prompt_text);

// Trims and checks a user-supplied label. Throws EmptyLabel / LabelTooLong.
std::string checked_label(std::string_view label);

// Creation-ordered, workspace-global collection of buttons.
class PromptRegistry {
public:
    PromptRegistry() = default;
    explicit PromptRegistry(std::vector<PromptButton> buttons);

    // Labels come from `provider`; a throwing provider or an unusable label
    // falls back to fallback_label().
    const PromptButton& create(std::string_view prompt_text, const LabelProvider& provider);

    void edit(std::string_view id, std::optional<std::string> new_prompt,
              std::optional<std::string> new_label);
    void remove(std::string_view id);
    void record_use(std::string_view id);

    const PromptButton* find(std::string_view id) const;
    const PromptButton& get(std::string_view id) const;
    const std::vector<PromptButton>& list() const { return buttons_; }
    std::size_t size() const { return buttons_.size(); }

    bool operator==(const PromptRegistry&) const = default;

private:
    PromptButton& get_mutable(std::string_view id);

    std::vector<PromptButton> buttons_;
};

// Problems with stored buttons (bad labels, empty prompts, duplicate ids).
std::vector<std::string> validate(const PromptRegistry& registry);

}  // namespace abscribe
