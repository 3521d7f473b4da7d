#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

// Prompt assembly, text-generation backends and streamed insertion. The
// gateway only sees strings; it never holds a document.
namespace abscribe::llm {

inline constexpr int kPromptTemplateVersion = 1;
inline constexpr std::string_view kSegmentBegin = "«SEG_BEGIN»";
inline constexpr std::string_view kSegmentEnd = "«SEG_END»";
inline constexpr std::size_t kContextWindowChars = 2000;

enum class GenerationKind { Variation, Label, Insert };

struct GenerationRequest {
    GenerationKind kind = GenerationKind::Variation;
    std::string instruction;
    std::string target_text;  // empty for Label and Insert
    std::string context_before;
    std::string context_after;
    std::string request_id;
};

enum class BackendKind { Real, Mock };

struct ModelConfig {
    BackendKind backend = BackendKind::Mock;
    std::string model_name = "gpt-4";
    // Unset means 0.7 for variations and inserts, 0.0 for labels.
    std::optional<double> temperature;
    int max_output_tokens = 1024;
    double timeout_seconds = 60.0;
    std::string api_base_url = "https://api.openai.com/v1";
    std::string api_key;

    double temperature_for(GenerationKind kind) const;

    // Throws InvalidConfig for out-of-range values.
    void check() const;

    // LLM_BACKEND, LLM_API_BASE_URL, LLM_API_KEY, LLM_MODEL. Without
    // LLM_BACKEND the real backend is chosen only when a key is present.
    static ModelConfig from_env();
};

std::optional<BackendKind> parse_backend_kind(std::string_view name);

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct RenderedPrompt {
    ChatMessage system;
    ChatMessage user;

    std::vector<ChatMessage> messages() const { return {system, user}; }
};

// "«SEG_" becomes "«SEG__" so that escaped text never contains a sentinel.
std::string escape_sentinels(std::string_view s);
std::string unescape_sentinels(std::string_view s);

RenderedPrompt build_variation_prompt(const GenerationRequest& request);
RenderedPrompt build_label_prompt(std::string_view prompt_text);
RenderedPrompt build_insert_prompt(const GenerationRequest& request);

// Trims to at most `max_chars` on each side, dropping whole lines (blocks)
// farthest from the split point first.
struct ContextWindow {
    std::string before;
    std::string after;
};
ContextWindow bound_context(std::string_view before, std::string_view after,
                            std::size_t max_chars = kContextWindowChars);

// First line, quotes stripped, whitespace collapsed, cut to the label cap.
std::string postprocess_label(std::string_view raw);

// Trimmed, with echoed sentinels removed.
std::string postprocess_variation(std::string_view raw);

struct CompletionCall {
    GenerationRequest request;
    RenderedPrompt prompt;
    std::string model_name;
    double temperature = 0.0;
    int max_output_tokens = 0;
    double timeout_seconds = 0.0;
    bool stream = false;
};

using ChunkCallback = std::function<bool(std::string_view chunk)>;

// A text-generation backend. Failures are thrown as Error with
// BackendTimeout or BackendError.
class TextBackend {
public:
    virtual ~TextBackend() = default;

    virtual std::string complete(const CompletionCall& call) = 0;

    // Delivers chunks in arrival order; stops early when the callback
    // returns false.
    virtual void stream(const CompletionCall& call, const ChunkCallback& on_chunk) = 0;
};

enum class InsertState { Streaming, Complete, Failed, Cancelled };

std::string_view state_name(InsertState state);

struct InsertSnapshot {
    std::string id;
    std::string prompt_text;
    std::string accumulated_text;
    InsertState state = InsertState::Streaming;
    std::string failure_reason;
};

// Callbacks run on the streaming thread. on_finish fires once for Complete
// or Failed; a cancelled stream produces no further events.
struct InsertSink {
    std::function<void(std::string_view token)> on_token;
    std::function<void(const InsertSnapshot& final_state)> on_finish;
};

class InsertSession {
public:
    ~InsertSession();
    InsertSession(const InsertSession&) = delete;
    InsertSession& operator=(const InsertSession&) = delete;

    const std::string& id() const { return id_; }
    InsertSnapshot snapshot() const;

    // Blocks until the stream reaches a terminal state.
    InsertSnapshot wait() const;

    // Idempotent; has no effect once a terminal state is set.
    void cancel();

private:
    friend class Gateway;
    struct State;

    InsertSession(std::string id, std::shared_ptr<State> state);

    std::string id_;
    std::shared_ptr<State> state_;
    std::thread worker_;
};

class Gateway {
public:
    Gateway(std::shared_ptr<TextBackend> backend, ModelConfig config);
    ~Gateway();

    const ModelConfig& config() const { return config_; }

    // Throws InvalidRequest for non-Variation requests or empty targets,
    // EmptyCompletion when nothing usable comes back.
    std::string generate_variation(const GenerationRequest& request) const;

    std::string generate_label(std::string_view prompt_text) const;

    std::shared_ptr<InsertSession> start_insert(std::string_view context_before,
                                                std::string_view context_after,
                                                std::string_view prompt_text, InsertSink sink);
    void cancel_insert(std::string_view id);
    std::shared_ptr<InsertSession> find_insert(std::string_view id) const;
    void forget_insert(std::string_view id);

private:
    CompletionCall make_call(GenerationRequest request, RenderedPrompt prompt, bool stream) const;

    std::shared_ptr<TextBackend> backend_;
    ModelConfig config_;
    mutable std::mutex inserts_mutex_;
    std::map<std::string, std::shared_ptr<InsertSession>, std::less<>> inserts_;
};

}  // namespace abscribe::llm
