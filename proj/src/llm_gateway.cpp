#include "abscribe/llm_gateway.hpp"

#include "abscribe/error.hpp"
#include "abscribe/ids.hpp"
#include "abscribe/prompt_registry.hpp"
#include "abscribe/text.hpp"

#include <cstdlib>
#include <utility>

namespace abscribe::llm {
namespace {

// Template text, version kPromptTemplateVersion.
constexpr std::string_view kVariationSystem =
    "You are a writing assistant that rewrites one marked segment of a document. "
    "The segment appears between the markers «SEG_BEGIN» and «SEG_END». Apply the "
    "instruction to that segment only, keeping it consistent with the surrounding text. "
    "Return only the rewritten segment: no markers, no quotes, no commentary.";
constexpr std::string_view kLabelSystem =
    "You name reusable writing-instruction buttons. Reply with a short title of at most "
    "four words that describes the instruction. Reply with the title only.";
constexpr std::string_view kInsertSystem =
    "You are a writing assistant that writes new text to be inserted into a document at "
    "the insertion point. Follow the instruction and fit the surrounding text. Return only "
    "the text to insert: no quotes, no commentary.";

constexpr std::string_view kSentinelStem = "«SEG_";

constexpr double kDefaultTemperature = 0.7;
constexpr double kLabelTemperature = 0.0;

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

void erase_all(std::string& s, std::string_view needle) {
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos)) {
        s.erase(pos, needle.size());
    }
}

bool strip_quote_pair(std::string& s) {
    static constexpr std::string_view kPairs[][2] = {
        {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"“", "”"}, {"‘", "’"}, {"«", "»"}};
    for (const auto& pair : kPairs) {
        if (s.size() >= pair[0].size() + pair[1].size() && s.starts_with(pair[0]) &&
            s.ends_with(pair[1])) {
            s = s.substr(pair[0].size(), s.size() - pair[0].size() - pair[1].size());
            return true;
        }
    }
    return false;
}

}  // namespace

double ModelConfig::temperature_for(GenerationKind kind) const {
    if (temperature) return *temperature;
    return kind == GenerationKind::Label ? kLabelTemperature : kDefaultTemperature;
}

void ModelConfig::check() const {
    if (temperature && (*temperature < 0.0 || *temperature > 2.0)) {
        throw Error(ErrorCode::InvalidConfig, "temperature must be within [0, 2]");
    }
    if (max_output_tokens <= 0) {
        throw Error(ErrorCode::InvalidConfig, "max_output_tokens must be positive");
    }
    if (!(timeout_seconds > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
    }
}

std::optional<BackendKind> parse_backend_kind(std::string_view name) {
    if (name == "real") return BackendKind::Real;
    if (name == "mock") return BackendKind::Mock;
    return std::nullopt;
}

ModelConfig ModelConfig::from_env() {
    ModelConfig config;
    config.api_base_url = env_or("LLM_API_BASE_URL", config.api_base_url);
    config.api_key = env_or("LLM_API_KEY", "");
    config.model_name = env_or("LLM_MODEL", config.model_name);
    const std::string backend = env_or("LLM_BACKEND", "");
    if (backend.empty()) {
        config.backend = config.api_key.empty() ? BackendKind::Mock : BackendKind::Real;
    } else if (auto kind = parse_backend_kind(backend)) {
        config.backend = *kind;
    } else {
        throw Error(ErrorCode::InvalidConfig, "LLM_BACKEND must be 'real' or 'mock'");
    }
    return config;
}

std::string escape_sentinels(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (true) {
        const auto hit = s.find(kSentinelStem, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit + kSentinelStem.size() - pos));
        out.push_back('_');
        pos = hit + kSentinelStem.size();
    }
    out.append(s.substr(pos));
    return out;
}

std::string unescape_sentinels(std::string_view s) {
    static constexpr std::string_view kEscaped = "«SEG__";
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (true) {
        const auto hit = s.find(kEscaped, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit + kSentinelStem.size() - pos));
        pos = hit + kEscaped.size();
    }
    out.append(s.substr(pos));
    return out;
}

RenderedPrompt build_variation_prompt(const GenerationRequest& request) {
    std::string user;
    if (!request.context_before.empty()) {
        user += "Text before the segment:\n" + escape_sentinels(request.context_before) + "\n\n";
    }
    user += "Segment to rewrite:\n";
    user += kSegmentBegin;
    user += escape_sentinels(request.target_text);
    user += kSegmentEnd;
    user += "\n\n";
    if (!request.context_after.empty()) {
        user += "Text after the segment:\n" + escape_sentinels(request.context_after) + "\n\n";
    }
    user += "Instruction: " + escape_sentinels(request.instruction);
    return {{"system", std::string(kVariationSystem)}, {"user", std::move(user)}};
}

RenderedPrompt build_label_prompt(std::string_view prompt_text) {
    return {{"system", std::string(kLabelSystem)},
            {"user", "Instruction: " + std::string(prompt_text)}};
}

RenderedPrompt build_insert_prompt(const GenerationRequest& request) {
    std::string user;
    if (!request.context_before.empty()) {
        user += "Text before the insertion point:\n" + request.context_before + "\n\n";
    }
    if (!request.context_after.empty()) {
        user += "Text after the insertion point:\n" + request.context_after + "\n\n";
    }
    user += "Instruction: " + request.instruction;
    return {{"system", std::string(kInsertSystem)}, {"user", std::move(user)}};
}

ContextWindow bound_context(std::string_view before, std::string_view after,
                            std::size_t max_chars) {
    ContextWindow window;
    while (text::length(before) > max_chars) {
        const auto nl = before.find('\n');
        if (nl == std::string_view::npos) {
            before = text::substr(before, text::length(before) - max_chars);
            break;
        }
        before.remove_prefix(nl + 1);
    }
    while (text::length(after) > max_chars) {
        const auto nl = after.rfind('\n');
        if (nl == std::string_view::npos) {
            after = text::substr(after, 0, max_chars);
            break;
        }
        after = after.substr(0, nl);
    }
    window.before = before;
    window.after = after;
    return window;
}

std::string postprocess_label(std::string_view raw) {
    std::string_view rest = raw;
    std::string_view line;
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        line = text::trim(rest.substr(0, nl));
        if (!line.empty()) break;
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    }
    std::string label(line);
    while (strip_quote_pair(label)) label = std::string(text::trim(label));
    // A lone leading or trailing quote survives pair stripping.
    while (!label.empty() && (label.front() == '"' || label.front() == '\'')) label.erase(0, 1);
    while (!label.empty() && (label.back() == '"' || label.back() == '\'')) label.pop_back();
    return text::truncate_at_word(text::collapse_whitespace(label), kMaxLabelLength);
}

std::string postprocess_variation(std::string_view raw) {
    std::string out(raw);
    erase_all(out, kSegmentBegin);
    erase_all(out, kSegmentEnd);
    return std::string(text::trim(out));
}

std::string_view state_name(InsertState state) {
    switch (state) {
        case InsertState::Streaming: return "streaming";
        case InsertState::Complete: return "complete";
        case InsertState::Failed: return "failed";
        case InsertState::Cancelled: return "cancelled";
    }
    return "unknown";
}

// Shared between the session handle and its worker thread. The recursive
// mutex lets a sink cancel from inside its own callback.
struct InsertSession::State {
    mutable std::recursive_mutex mutex;
    mutable std::condition_variable_any finished;
    InsertSnapshot snapshot;
    InsertSink sink;

    bool deliver(std::string_view chunk) {
        std::lock_guard lock(mutex);
        if (snapshot.state != InsertState::Streaming) return false;
        snapshot.accumulated_text.append(chunk);
        if (sink.on_token) sink.on_token(chunk);
        return snapshot.state == InsertState::Streaming;
    }

    void finish(InsertState state, std::string reason = {}) {
        std::lock_guard lock(mutex);
        if (snapshot.state != InsertState::Streaming) return;
        snapshot.state = state;
        snapshot.failure_reason = std::move(reason);
        if (sink.on_finish && state != InsertState::Cancelled) sink.on_finish(snapshot);
        finished.notify_all();
    }
};

InsertSession::InsertSession(std::string id, std::shared_ptr<State> state)
    : id_(std::move(id)), state_(std::move(state)) {}

InsertSession::~InsertSession() {
    cancel();
    if (worker_.joinable()) {
        if (worker_.get_id() == std::this_thread::get_id()) {
            worker_.detach();
        } else {
            worker_.join();
        }
    }
}

InsertSnapshot InsertSession::snapshot() const {
    std::lock_guard lock(state_->mutex);
    return state_->snapshot;
}

InsertSnapshot InsertSession::wait() const {
    std::unique_lock lock(state_->mutex);
    state_->finished.wait(lock, [&] { return state_->snapshot.state != InsertState::Streaming; });
    return state_->snapshot;
}

void InsertSession::cancel() { state_->finish(InsertState::Cancelled); }

Gateway::Gateway(std::shared_ptr<TextBackend> backend, ModelConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {
    config_.check();
}

Gateway::~Gateway() {
    std::map<std::string, std::shared_ptr<InsertSession>, std::less<>> inserts;
    {
        std::lock_guard lock(inserts_mutex_);
        inserts.swap(inserts_);
    }
    for (auto& [id, session] : inserts) session->cancel();
}

CompletionCall Gateway::make_call(GenerationRequest request, RenderedPrompt prompt,
                                  bool stream) const {
    CompletionCall call;
    call.temperature = config_.temperature_for(request.kind);
    call.request = std::move(request);
    call.prompt = std::move(prompt);
    call.model_name = config_.model_name;
    call.max_output_tokens = config_.max_output_tokens;
    call.timeout_seconds = config_.timeout_seconds;
    call.stream = stream;
    return call;
}

std::string Gateway::generate_variation(const GenerationRequest& request) const {
    if (request.kind != GenerationKind::Variation) {
        throw Error(ErrorCode::InvalidRequest, "generate_variation needs a Variation request");
    }
    if (request.target_text.empty()) {
        throw Error(ErrorCode::InvalidRequest, "variation requests need a non-empty target");
    }
    GenerationRequest req = request;
    if (req.request_id.empty()) req.request_id = ids::new_id();
    auto prompt = build_variation_prompt(req);
    std::string out = postprocess_variation(backend_->complete(make_call(std::move(req), std::move(prompt), false)));
    if (out.empty()) throw Error(ErrorCode::EmptyCompletion, "backend returned no text");
    return out;
}

std::string Gateway::generate_label(std::string_view prompt_text) const {
    if (text::is_blank(prompt_text)) throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
    GenerationRequest req;
    req.kind = GenerationKind::Label;
    req.instruction = std::string(prompt_text);
    req.request_id = ids::new_id();
    auto prompt = build_label_prompt(prompt_text);
    std::string label = postprocess_label(backend_->complete(make_call(std::move(req), std::move(prompt), false)));
    if (label.empty()) throw Error(ErrorCode::EmptyCompletion, "backend returned an empty label");
    return label;
}

std::shared_ptr<InsertSession> Gateway::start_insert(std::string_view context_before,
                                                     std::string_view context_after,
                                                     std::string_view prompt_text,
                                                     InsertSink sink) {
    if (text::is_blank(prompt_text)) throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
    GenerationRequest req;
    req.kind = GenerationKind::Insert;
    req.instruction = std::string(text::trim(prompt_text));
    req.context_before = std::string(context_before);
    req.context_after = std::string(context_after);
    req.request_id = ids::new_id();

    auto state = std::make_shared<InsertSession::State>();
    state->snapshot.id = req.request_id;
    state->snapshot.prompt_text = req.instruction;
    state->sink = std::move(sink);

    auto prompt = build_insert_prompt(req);
    auto call = make_call(req, std::move(prompt), true);
    std::shared_ptr<InsertSession> session(new InsertSession(req.request_id, state));
    {
        std::lock_guard lock(inserts_mutex_);
        inserts_[session->id()] = session;
    }
    session->worker_ = std::thread([state, backend = backend_, call = std::move(call)] {
        try {
            backend->stream(call, [&](std::string_view chunk) { return state->deliver(chunk); });
            state->finish(InsertState::Complete);
        } catch (const std::exception& e) {
            state->finish(InsertState::Failed, e.what());
        }
    });
    return session;
}

void Gateway::cancel_insert(std::string_view id) {
    if (auto session = find_insert(id)) {
        session->cancel();
        return;
    }
    throw Error(ErrorCode::UnknownInsert, "unknown insert " + std::string(id));
}

std::shared_ptr<InsertSession> Gateway::find_insert(std::string_view id) const {
    std::lock_guard lock(inserts_mutex_);
    const auto it = inserts_.find(id);
    return it == inserts_.end() ? nullptr : it->second;
}

void Gateway::forget_insert(std::string_view id) {
    std::shared_ptr<InsertSession> dropped;
    {
        std::lock_guard lock(inserts_mutex_);
        const auto it = inserts_.find(id);
        if (it == inserts_.end()) return;
        dropped = std::move(it->second);
        inserts_.erase(it);
    }
    dropped->cancel();
}

}  // namespace abscribe::llm
