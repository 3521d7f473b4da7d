#pragma once

#include <string>
#include <string_view>
#include <vector>

// Server-sent events framing, used both for the service's insert streams
// and for reading streamed chat completions.
namespace abscribe::sse {

struct Event {
    std::string event;  // empty means the default "message" type
    std::string data;
    std::string id;

    bool operator==(const Event&) const = default;
};

// "event: <name>\ndata: <line>\n...\n\n"
std::string format(std::string_view event, std::string_view data);

// Incremental parser; feed arbitrary byte chunks, collect complete events.
class Parser {
public:
    std::vector<Event> feed(std::string_view bytes);

private:
    void consume_line(std::string_view line, std::vector<Event>& out);

    std::string buffer_;
    Event pending_;
    bool has_data_ = false;
};

}  // namespace abscribe::sse
