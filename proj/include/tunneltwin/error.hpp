#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tunneltwin {

enum class ErrorCode {
    DuplicateName,
    UnknownSignal,
    UnknownGroup,
    BadTemplate,
    DuplicateVariable,
    SyntaxError,
    UndeclaredIdentifier,
    AssignToInput,
    InputMissing,
    PolicyMismatch,
    ProtocolError,
    ConnectionLost,
    NotAButton,
    ScenarioError,
    ConfigError,
};

inline std::string_view to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownSignal: return "UnknownSignal";
    case ErrorCode::UnknownGroup: return "UnknownGroup";
    case ErrorCode::BadTemplate: return "BadTemplate";
    case ErrorCode::DuplicateVariable: return "DuplicateVariable";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UndeclaredIdentifier: return "UndeclaredIdentifier";
    case ErrorCode::AssignToInput: return "AssignToInput";
    case ErrorCode::InputMissing: return "InputMissing";
    case ErrorCode::PolicyMismatch: return "PolicyMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConnectionLost: return "ConnectionLost";
    case ErrorCode::NotAButton: return "NotAButton";
    case ErrorCode::ScenarioError: return "ScenarioError";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

/// Parse errors additionally carry a 1-based source position.
class SourceError : public Error {
  public:
    SourceError(ErrorCode code, int line, int column, const std::string &what)
        : Error(code, std::to_string(line) + ":" + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}

    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }

  private:
    int line_;
    int column_;
};

} // namespace tunneltwin
