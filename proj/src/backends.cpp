#include "abscribe/backends.hpp"

#include "abscribe/error.hpp"
#include "abscribe/prompt_registry.hpp"
#include "abscribe/sse.hpp"
#include "abscribe/text.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <sstream>
#include <thread>

namespace abscribe::llm {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string title_case(std::string_view word) {
    std::string out(word);
    bool first = true;
    for (char& c : out) {
        const auto uc = static_cast<unsigned char>(c);
        if (uc >= 0x80) {
            first = false;
            continue;
        }
        c = static_cast<char>(first ? std::toupper(uc) : std::tolower(uc));
        first = false;
    }
    return out;
}

std::string insert_text(const GenerationRequest& request) {
    return "MOCK-INSERT[" + request.instruction + "]";
}

std::string mock_output(const GenerationRequest& request) {
    switch (request.kind) {
        case GenerationKind::Variation: return MockBackend::render(request);
        case GenerationKind::Label: return MockBackend::mock_label(request.instruction);
        case GenerationKind::Insert: return insert_text(request);
    }
    return {};
}

std::chrono::milliseconds timeout_of(const CompletionCall& call) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(call.timeout_seconds * 1000.0));
}

[[noreturn]] void throw_http_failure(httplib::Error err, Clock::time_point started,
                                     const CompletionCall& call) {
    const auto elapsed = Clock::now() - started;
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= timeout_of(call) * 9 / 10)) {
        throw Error(ErrorCode::BackendTimeout, "backend did not answer within " +
                                                   std::to_string(call.timeout_seconds) + " s");
    }
    if (err == httplib::Error::Read) throw Error(ErrorCode::BackendError, "connection closed");
    throw Error(ErrorCode::BackendError, "backend request failed: " + httplib::to_string(err));
}

[[noreturn]] void throw_status(int status, const std::string& body) {
    std::string message = body;
    try {
        const auto parsed = json::parse(body);
        if (parsed.contains("error") && parsed["error"].contains("message")) {
            message = parsed["error"]["message"].get<std::string>();
        }
    } catch (const json::exception&) {
    }
    throw Error(ErrorCode::BackendError,
                "backend returned status " + std::to_string(status) + ": " + message);
}

void set_timeouts(httplib::Client& client, const CompletionCall& call) {
    const auto t = timeout_of(call);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
}

}  // namespace

std::string MockBackend::render(const GenerationRequest& request) {
    return "MOCK[" + request.instruction + "]{" + request.target_text + "}";
}

std::string MockBackend::mock_label(std::string_view prompt_text) {
    std::istringstream words{std::string(prompt_text)};
    std::string word;
    std::string label;
    for (int i = 0; i < 3 && words >> word; ++i) {
        if (!label.empty()) label += ' ';
        label += title_case(word);
    }
    return text::truncate_at_word(label, kMaxLabelLength);
}

std::string MockBackend::complete(const CompletionCall& call) {
    if (options_.latency.count() > 0) {
        const auto limit = timeout_of(call);
        if (options_.latency > limit) {
            std::this_thread::sleep_for(limit);
            throw Error(ErrorCode::BackendTimeout, "backend did not answer within " +
                                                       std::to_string(call.timeout_seconds) + " s");
        }
        std::this_thread::sleep_for(options_.latency);
    }
    return mock_output(call.request);
}

void MockBackend::stream(const CompletionCall& call, const ChunkCallback& on_chunk) {
    const std::string full = mock_output(call.request);
    const std::size_t step = options_.chunk_size == 0 ? 1 : options_.chunk_size;
    const std::size_t total = text::length(full);
    for (std::size_t pos = 0; pos < total; pos += step) {
        if (pos > 0 && options_.chunk_delay.count() > 0) {
            std::this_thread::sleep_for(options_.chunk_delay);
        }
        if (!on_chunk(text::substr(full, pos, step))) return;
    }
}

FaultInjectingBackend::FaultInjectingBackend(std::shared_ptr<TextBackend> inner,
                                             double failure_rate, std::uint64_t seed)
    : inner_(std::move(inner)), failure_rate_(failure_rate), rng_(seed) {}

void FaultInjectingBackend::maybe_fail() {
    ++calls_;
    bool fail = false;
    {
        std::lock_guard lock(rng_mutex_);
        fail = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < failure_rate_;
    }
    if (fail) {
        ++failures_;
        throw Error(ErrorCode::BackendError, "injected backend failure");
    }
}

std::string FaultInjectingBackend::complete(const CompletionCall& call) {
    maybe_fail();
    return inner_->complete(call);
}

void FaultInjectingBackend::stream(const CompletionCall& call, const ChunkCallback& on_chunk) {
    maybe_fail();
    inner_->stream(call, on_chunk);
}

HttpChatBackend::HttpChatBackend(std::string api_base_url, std::string api_key)
    : api_key_(std::move(api_key)) {
    while (!api_base_url.empty() && api_base_url.back() == '/') api_base_url.pop_back();
    const auto scheme_end = api_base_url.find("://");
    const auto path_start =
        api_base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = api_base_url.substr(0, path_start);
    path_ = (path_start == std::string::npos ? std::string{} : api_base_url.substr(path_start)) +
            "/chat/completions";
}

std::string HttpChatBackend::request_body(const CompletionCall& call) const {
    json messages = json::array();
    for (const auto& m : call.prompt.messages()) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    json body = {{"model", call.model_name},
                 {"messages", std::move(messages)},
                 {"temperature", call.temperature},
                 {"max_tokens", call.max_output_tokens},
                 {"stream", call.stream}};
    return body.dump();
}

std::string HttpChatBackend::complete(const CompletionCall& call) {
    httplib::Client client(origin_);
    if (!client.is_valid()) {
        throw Error(ErrorCode::BackendError, "unsupported backend URL " + origin_);
    }
    set_timeouts(client, call);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    CompletionCall non_streaming = call;
    non_streaming.stream = false;
    const auto started = Clock::now();
    auto res = client.Post(path_, headers, request_body(non_streaming), "application/json");
    if (!res) throw_http_failure(res.error(), started, call);
    if (res->status != 200) throw_status(res->status, res->body);
    try {
        const auto parsed = json::parse(res->body);
        const auto& content = parsed.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendError, std::string("malformed completion: ") + e.what());
    }
}

void HttpChatBackend::stream(const CompletionCall& call, const ChunkCallback& on_chunk) {
    httplib::Client client(origin_);
    if (!client.is_valid()) {
        throw Error(ErrorCode::BackendError, "unsupported backend URL " + origin_);
    }
    set_timeouts(client, call);

    CompletionCall streaming = call;
    streaming.stream = true;
    httplib::Request req;
    req.method = "POST";
    req.path = path_;
    req.body = request_body(streaming);
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    if (!api_key_.empty()) req.set_header("Authorization", "Bearer " + api_key_);

    int status = 0;
    std::string error_body;
    bool saw_done = false;
    bool stopped = false;
    std::string malformed;
    sse::Parser parser;
    req.response_handler = [&](const httplib::Response& response) {
        status = response.status;
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            error_body.append(data, len);
            return true;
        }
        for (const auto& event : parser.feed(std::string_view(data, len))) {
            if (event.data == "[DONE]") {
                saw_done = true;
                return true;
            }
            try {
                const auto parsed = json::parse(event.data);
                const auto& delta = parsed.at("choices").at(0).at("delta");
                if (delta.contains("content") && delta["content"].is_string()) {
                    const auto piece = delta["content"].get<std::string>();
                    if (!piece.empty() && !on_chunk(piece)) {
                        stopped = true;
                        return false;
                    }
                }
            } catch (const json::exception& e) {
                malformed = e.what();
                return false;
            }
        }
        return true;
    };

    const auto started = Clock::now();
    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    const bool ok = client.send(req, res, err);
    if (stopped) return;
    if (!malformed.empty()) throw Error(ErrorCode::BackendError, "malformed stream event: " + malformed);
    if (!ok) throw_http_failure(err, started, call);
    if (status != 200) throw_status(status, error_body);
    if (!saw_done) throw Error(ErrorCode::BackendError, "connection closed");
}

std::shared_ptr<TextBackend> make_backend(const ModelConfig& config) {
    if (config.backend == BackendKind::Mock) return std::make_shared<MockBackend>();
    return std::make_shared<HttpChatBackend>(config.api_base_url, config.api_key);
}

}  // namespace abscribe::llm
