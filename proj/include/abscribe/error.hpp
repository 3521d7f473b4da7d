#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace abscribe {

enum class ErrorCode {
    // document model
    SpanOutOfBounds,
    SpanCrossesComponent,
    EmptySpan,
    OutOfBounds,
    UnknownBlock,
    UnknownComponent,
    UnknownVariation,
    LastVariation,
    BlockHasComponents,
    InvalidText,
    // prompt registry
    UnknownButton,
    EmptyPrompt,
    EmptyLabel,
    LabelTooLong,
    // llm gateway
    InvalidConfig,
    BackendTimeout,
    BackendError,
    EmptyCompletion,
    // persistence
    IoError,
    ParseError,
    UnsupportedVersion,
    IntegrityError,
    WorkspaceLocked,
    // service
    UnknownDocument,
    UnknownInsert,
    InsertNotReady,
    AnchorLost,
    InvalidRequest,
};

// Machine-readable name, e.g. "span_crosses_component".
std::string_view code_name(ErrorCode code);

// HTTP status the code maps to: unknown entities 404, validation 422,
// backend failures 502, state conflicts 409, storage failures 500.
int http_status(ErrorCode code);

// True for the codes that originate at the text-generation backend.
bool is_backend_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view name() const { return code_name(code_); }

private:
    ErrorCode code_;
};

}  // namespace abscribe
