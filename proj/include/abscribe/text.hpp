#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers. Lengths and offsets are in Unicode scalar values.
namespace abscribe::text {

bool is_valid_utf8(std::string_view s);

// Number of scalar values. Assumes valid UTF-8.
std::size_t length(std::string_view s);

// Byte offset of scalar index `index` (index == length(s) gives s.size()).
std::size_t byte_offset(std::string_view s, std::size_t index);

// Scalar-indexed substring [start, start + count).
std::string_view substr(std::string_view s, std::size_t start,
                        std::size_t count = std::string_view::npos);

// Splits into one string per scalar value.
std::vector<std::string> scalars(std::string_view s);

std::string_view trim(std::string_view s);

bool is_blank(std::string_view s);

// Collapses every run of ASCII whitespace into one space and trims.
std::string collapse_whitespace(std::string_view s);

// At most `max_len` scalars, cut at the last space when the cut would split
// a word and a space exists in the kept prefix. Result is trimmed.
std::string truncate_at_word(std::string_view s, std::size_t max_len);

}  // namespace abscribe::text
