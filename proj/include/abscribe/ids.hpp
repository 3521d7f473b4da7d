#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace abscribe {

// UTC instant with millisecond precision.
struct Timestamp {
    std::int64_t unix_ms = 0;

    auto operator<=>(const Timestamp&) const = default;
};

// "2024-03-01T12:00:00.000Z"
std::string to_rfc3339(Timestamp ts);

// Accepts a 'Z' or numeric offset suffix and an optional fractional part.
// Returns nullopt for anything malformed.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

namespace ids {

// Random UUIDv4 string drawn from a thread-local engine.
std::string new_id();

bool is_uuid(std::string_view text);

// Re-seeds the calling thread's engine. Used for reproducible runs.
void reseed(std::uint64_t seed);

// Current time, or the pinned time when one is set.
Timestamp now();

// Pins (or with nullopt, unpins) the process-wide clock.
void set_fixed_clock(std::optional<Timestamp> ts);

}  // namespace ids
}  // namespace abscribe
