#include "abscribe/sse.hpp"

namespace abscribe::sse {

std::string format(std::string_view event, std::string_view data) {
    std::string out;
    if (!event.empty()) {
        out += "event: ";
        out += event;
        out += '\n';
    }
    std::size_t start = 0;
    while (true) {
        const auto nl = data.find('\n', start);
        out += "data: ";
        out += data.substr(start, nl == std::string_view::npos ? nl : nl - start);
        out += '\n';
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    out += '\n';
    return out;
}

std::vector<Event> Parser::feed(std::string_view bytes) {
    std::vector<Event> out;
    buffer_.append(bytes);
    std::size_t start = 0;
    while (true) {
        const auto nl = buffer_.find('\n', start);
        if (nl == std::string::npos) break;
        std::string_view line(buffer_.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        consume_line(line, out);
        start = nl + 1;
    }
    buffer_.erase(0, start);
    return out;
}

void Parser::consume_line(std::string_view line, std::vector<Event>& out) {
    if (line.empty()) {
        if (has_data_) out.push_back(std::move(pending_));
        pending_ = Event{};
        has_data_ = false;
        return;
    }
    if (line.front() == ':') return;  // comment
    const auto colon = line.find(':');
    std::string_view field = line.substr(0, colon);
    std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (field == "event") {
        pending_.event = value;
    } else if (field == "data") {
        if (has_data_) pending_.data += '\n';
        pending_.data += value;
        has_data_ = true;
    } else if (field == "id") {
        pending_.id = value;
    }
}

}  // namespace abscribe::sse
