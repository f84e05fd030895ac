#ifndef AFS_ERROR_HPP
#define AFS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace afs {

enum class ErrorCode {
    EmptyAudio,
    InvalidSignal,
    InvalidConfig,
    ShapeMismatch,
    EmptyInput,
    InsufficientData,
    CorruptCode,
    RateMismatch,
    InvalidState,
    SequenceTooLong,
    GraphError,
    SessionClosed,
    SpeakerMismatch,
    EmptyStream,
    ConfigMismatch,
    FormatError,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::EmptyAudio: return "EmptyAudio";
        case ErrorCode::InvalidSignal: return "InvalidSignal";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::CorruptCode: return "CorruptCode";
        case ErrorCode::RateMismatch: return "RateMismatch";
        case ErrorCode::InvalidState: return "InvalidState";
        case ErrorCode::SequenceTooLong: return "SequenceTooLong";
        case ErrorCode::GraphError: return "GraphError";
        case ErrorCode::SessionClosed: return "SessionClosed";
        case ErrorCode::SpeakerMismatch: return "SpeakerMismatch";
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

} // namespace afs

#endif
