#include <doctest.h>

#include "abscribe/backends.hpp"
#include "abscribe/error.hpp"
#include "abscribe/sse.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace abscribe;
using json = nlohmann::json;

namespace {

// A local stand-in for an OpenAI-compatible chat-completions endpoint.
// The reply depends on the last user message.
class FakeChatServer {
public:
    FakeChatServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            {
                std::lock_guard lock(mutex_);
                last_request_ = body;
                last_auth_ = req.get_header_value("Authorization");
            }
            const std::string prompt = body["messages"].back()["content"];
            if (prompt.find("FAIL") != std::string::npos) {
                res.status = 500;
                res.set_content(R"({"error":{"message":"model overloaded"}})", "application/json");
                return;
            }
            if (prompt.find("SLOW") != std::string::npos) {
                std::this_thread::sleep_for(std::chrono::milliseconds(600));
            }
            if (!body["stream"].get<bool>()) {
                json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "  Rewritten.  "}}}}}}};
                res.set_content(reply.dump(), "application/json");
                return;
            }
            const bool drop = prompt.find("DROP") != std::string::npos;
            res.set_chunked_content_provider("text/event-stream", [drop](std::size_t, httplib::DataSink& sink) {
                for (const char* piece : {"Hel", "lo", " there"}) {
                    json chunk = {{"choices", {{{"delta", {{"content", piece}}}}}}};
                    const auto event = sse::format("", chunk.dump());
                    sink.write(event.data(), event.size());
                }
                if (!drop) {
                    const auto done = sse::format("", "[DONE]");
                    sink.write(done.data(), done.size());
                }
                sink.done();
                return true;
            });
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeChatServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    json last_request() {
        std::lock_guard lock(mutex_);
        return last_request_;
    }
    std::string last_auth() {
        std::lock_guard lock(mutex_);
        return last_auth_;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mutex_;
    json last_request_;
    std::string last_auth_;
};

llm::CompletionCall call_for(const std::string& instruction, double timeout = 5.0) {
    llm::CompletionCall call;
    call.request.kind = llm::GenerationKind::Variation;
    call.request.instruction = instruction;
    call.request.target_text = "Hello";
    call.prompt = llm::build_variation_prompt(call.request);
    call.model_name = "gpt-4";
    call.temperature = 0.7;
    call.max_output_tokens = 64;
    call.timeout_seconds = timeout;
    return call;
}

}  // namespace

TEST_SUITE("sse") {
    TEST_CASE("format writes event and data lines") {
        CHECK(sse::format("token", R"({"text":"ab"})") == "event: token\ndata: {\"text\":\"ab\"}\n\n");
        CHECK(sse::format("", "a\nb") == "data: a\ndata: b\n\n");
    }

    TEST_CASE("parser handles arbitrary chunk boundaries") {
        const std::string stream = sse::format("token", "one") + ": comment\n" + sse::format("done", "two\nlines") +
                                   "id: 7\r\ndata: three\r\n\r\n";
        for (std::size_t cut = 1; cut < 7; ++cut) {
            sse::Parser parser;
            std::vector<sse::Event> events;
            for (std::size_t i = 0; i < stream.size(); i += cut) {
                for (auto& e : parser.feed(std::string_view(stream).substr(i, cut))) events.push_back(e);
            }
            REQUIRE(events.size() == 3);
            CHECK(events[0] == sse::Event{"token", "one", ""});
            CHECK(events[1] == sse::Event{"done", "two\nlines", ""});
            CHECK(events[2] == sse::Event{"", "three", "7"});
        }
    }
}

TEST_SUITE("http_backend") {
    TEST_CASE("complete posts a chat request and returns the content") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "secret");
        CHECK(backend.complete(call_for("shorter")) == "  Rewritten.  ");
        const auto sent = server.last_request();
        CHECK(sent["model"] == "gpt-4");
        CHECK(sent["stream"] == false);
        CHECK(sent["max_tokens"] == 64);
        CHECK(sent["temperature"].get<double>() == doctest::Approx(0.7));
        REQUIRE(sent["messages"].size() == 2);
        CHECK(sent["messages"][0]["role"] == "system");
        CHECK(sent["messages"][1]["role"] == "user");
        CHECK(server.last_auth() == "Bearer secret");

        llm::Gateway gw(std::make_shared<llm::HttpChatBackend>(server.base_url(), ""), llm::ModelConfig{});
        llm::GenerationRequest req;
        req.instruction = "shorter";
        req.target_text = "Hello";
        CHECK(gw.generate_variation(req) == "Rewritten.");
    }

    TEST_CASE("stream delivers deltas in order") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "");
        std::vector<std::string> chunks;
        backend.stream(call_for("go"), [&](std::string_view c) {
            chunks.emplace_back(c);
            return true;
        });
        CHECK(chunks == std::vector<std::string>{"Hel", "lo", " there"});
        CHECK(server.last_request()["stream"] == true);
    }

    TEST_CASE("stream stops when the callback declines") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "");
        int seen = 0;
        backend.stream(call_for("go"), [&](std::string_view) { return ++seen < 2; });
        CHECK(seen == 2);
    }

    TEST_CASE("a stream without [DONE] is a closed connection") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "");
        std::string got;
        try {
            backend.stream(call_for("DROP"), [&](std::string_view c) {
                got += c;
                return true;
            });
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BackendError);
            CHECK(std::string(e.what()) == "connection closed");
        }
        CHECK(got == "Hello there");

        llm::Gateway gw(std::make_shared<llm::HttpChatBackend>(server.base_url(), ""), llm::ModelConfig{});
        auto session = gw.start_insert("", "", "DROP it", {});
        const auto snap = session->wait();
        CHECK(snap.state == llm::InsertState::Failed);
        CHECK(snap.failure_reason == "connection closed");
        CHECK(snap.accumulated_text == "Hello there");
    }

    TEST_CASE("server errors carry the status and message") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "");
        try {
            backend.complete(call_for("FAIL"));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BackendError);
            CHECK(std::string(e.what()).find("500") != std::string::npos);
            CHECK(std::string(e.what()).find("model overloaded") != std::string::npos);
        }
        CHECK_THROWS_AS(backend.stream(call_for("FAIL"), [](std::string_view) { return true; }), Error);
    }

    TEST_CASE("slow responses time out") {
        FakeChatServer server;
        llm::HttpChatBackend backend(server.base_url(), "");
        try {
            backend.complete(call_for("SLOW", 0.2));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BackendTimeout);
        }
    }

    TEST_CASE("an unreachable backend is a backend error") {
        llm::HttpChatBackend backend("http://127.0.0.1:1/v1", "");
        try {
            backend.complete(call_for("x", 1.0));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(is_backend_error(e.code()));
        }
    }
}
