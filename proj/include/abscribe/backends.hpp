#pragma once

#include "abscribe/llm_gateway.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <string>

namespace abscribe::llm {

struct MockOptions {
    // Delay before a completion returns; exceeding the call timeout raises
    // BackendTimeout.
    std::chrono::milliseconds latency{0};
    // Delay between streamed chunks.
    std::chrono::milliseconds chunk_delay{0};
    std::size_t chunk_size = 4;
};

// Deterministic offline backend:
//   Variation -> "MOCK[" + instruction + "]{" + target + "}"
//   Label     -> first three words of the prompt, title-cased
//   Insert    -> "MOCK-INSERT[" + prompt + "]" in 4-character chunks
class MockBackend final : public TextBackend {
public:
    explicit MockBackend(MockOptions options = {}) : options_(options) {}

    static std::string render(const GenerationRequest& request);
    static std::string mock_label(std::string_view prompt_text);

    std::string complete(const CompletionCall& call) override;
    void stream(const CompletionCall& call, const ChunkCallback& on_chunk) override;

private:
    MockOptions options_;
};

// Wraps a backend and fails a seeded fraction of calls with BackendError
// before they reach it.
class FaultInjectingBackend final : public TextBackend {
public:
    FaultInjectingBackend(std::shared_ptr<TextBackend> inner, double failure_rate,
                          std::uint64_t seed);

    std::string complete(const CompletionCall& call) override;
    void stream(const CompletionCall& call, const ChunkCallback& on_chunk) override;

    std::uint64_t calls() const { return calls_.load(); }
    std::uint64_t failures() const { return failures_.load(); }

private:
    void maybe_fail();

    std::shared_ptr<TextBackend> inner_;
    double failure_rate_;
    std::mutex rng_mutex_;
    std::mt19937_64 rng_;
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<std::uint64_t> failures_{0};
};

// OpenAI-compatible chat-completions client: POST {base}/chat/completions
// with a messages array and the stream flag.
class HttpChatBackend final : public TextBackend {
public:
    HttpChatBackend(std::string api_base_url, std::string api_key);

    std::string complete(const CompletionCall& call) override;
    void stream(const CompletionCall& call, const ChunkCallback& on_chunk) override;

private:
    std::string request_body(const CompletionCall& call) const;

    std::string origin_;  // scheme://host[:port]
    std::string path_;    // path prefix + /chat/completions
    std::string api_key_;
};

std::shared_ptr<TextBackend> make_backend(const ModelConfig& config);

}  // namespace abscribe::llm
