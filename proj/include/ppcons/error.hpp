#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppc {

enum class ErrorCode {
    // graph
    SelfLoop,
    DuplicateEdge,
    Disconnected,
    NodeIndexOutOfRange,
    // sharing
    InvalidKeys,
    TooFewChannels,
    InsufficientShares,
    DuplicateKey,
    InconsistentShares,
    TooManyShares,
    // handshake
    ChannelBudgetTooSmall,
    NotAnEdge,
    // consensus
    DegreeTooHigh,
    InvalidAssignment,
    InvalidState,
    AlreadyFailed,
    NotFailed,
    InsufficientNeighbors,
    ReconstructionInconsistent,
    // analysis
    HypothesisViolated,
    StepSizeOutOfRange,
    DimensionMismatch,
    // cli
    ConfigInvalid,
    UnknownSuite,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::NodeIndexOutOfRange: return "NodeIndexOutOfRange";
    case ErrorCode::InvalidKeys: return "InvalidKeys";
    case ErrorCode::TooFewChannels: return "TooFewChannels";
    case ErrorCode::InsufficientShares: return "InsufficientShares";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::InconsistentShares: return "InconsistentShares";
    case ErrorCode::TooManyShares: return "TooManyShares";
    case ErrorCode::ChannelBudgetTooSmall: return "ChannelBudgetTooSmall";
    case ErrorCode::NotAnEdge: return "NotAnEdge";
    case ErrorCode::DegreeTooHigh: return "DegreeTooHigh";
    case ErrorCode::InvalidAssignment: return "InvalidAssignment";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::AlreadyFailed: return "AlreadyFailed";
    case ErrorCode::NotFailed: return "NotFailed";
    case ErrorCode::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorCode::ReconstructionInconsistent: return "ReconstructionInconsistent";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::StepSizeOutOfRange: return "StepSizeOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnknownSuite: return "UnknownSuite";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ppc
