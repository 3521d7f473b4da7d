#include "abscribe/error.hpp"

namespace abscribe {

std::string_view code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::SpanOutOfBounds: return "span_out_of_bounds";
        case ErrorCode::SpanCrossesComponent: return "span_crosses_component";
        case ErrorCode::EmptySpan: return "empty_span";
        case ErrorCode::OutOfBounds: return "out_of_bounds";
        case ErrorCode::UnknownBlock: return "unknown_block";
        case ErrorCode::UnknownComponent: return "unknown_component";
        case ErrorCode::UnknownVariation: return "unknown_variation";
        case ErrorCode::LastVariation: return "last_variation";
        case ErrorCode::BlockHasComponents: return "block_has_components";
        case ErrorCode::InvalidText: return "invalid_text";
        case ErrorCode::UnknownButton: return "unknown_button";
        case ErrorCode::EmptyPrompt: return "empty_prompt";
        case ErrorCode::EmptyLabel: return "empty_label";
        case ErrorCode::LabelTooLong: return "label_too_long";
        case ErrorCode::InvalidConfig: return "invalid_config";
        case ErrorCode::BackendTimeout: return "backend_timeout";
        case ErrorCode::BackendError: return "backend_error";
        case ErrorCode::EmptyCompletion: return "empty_completion";
        case ErrorCode::IoError: return "io_error";
        case ErrorCode::ParseError: return "parse_error";
        case ErrorCode::UnsupportedVersion: return "unsupported_version";
        case ErrorCode::IntegrityError: return "integrity_error";
        case ErrorCode::WorkspaceLocked: return "workspace_locked";
        case ErrorCode::UnknownDocument: return "unknown_document";
        case ErrorCode::UnknownInsert: return "unknown_insert";
        case ErrorCode::InsertNotReady: return "insert_not_ready";
        case ErrorCode::AnchorLost: return "anchor_lost";
        case ErrorCode::InvalidRequest: return "invalid_request";
    }
    return "unknown_error";
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownBlock:
        case ErrorCode::UnknownComponent:
        case ErrorCode::UnknownVariation:
        case ErrorCode::UnknownButton:
        case ErrorCode::UnknownDocument:
        case ErrorCode::UnknownInsert:
            return 404;
        case ErrorCode::BackendTimeout:
        case ErrorCode::BackendError:
        case ErrorCode::EmptyCompletion:
            return 502;
        case ErrorCode::AnchorLost:
        case ErrorCode::InsertNotReady:
        case ErrorCode::WorkspaceLocked:
            return 409;
        case ErrorCode::IoError:
        case ErrorCode::ParseError:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::IntegrityError:
            return 500;
        default:
            return 422;
    }
}

bool is_backend_error(ErrorCode code) {
    return code == ErrorCode::BackendTimeout || code == ErrorCode::BackendError ||
           code == ErrorCode::EmptyCompletion;
}

}  // namespace abscribe
