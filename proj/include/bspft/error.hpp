#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bspft {

enum class ErrorCode {
  DuplicateId,
  IdTooLong,
  InvalidId,
  ReservedId,
  SegmentTooLarge,
  StaleHandle,
  ProtectedSectionOpen,
  UnbalancedExit,
  NonMonotonicEpoch,
  IoFailure,
  RetentionTooSmall,
  BadMagic,
  BadLength,
  BadVersion,
  BadFlags,
  AlreadyBound,
  MtbfTooSmall,
  EmptySamples,
  NonPositiveTime,
  ParseError,
  ConfigError,
  UnrecoverableFailure,
  NoCheckpoint,
  MetaMismatch,
};

constexpr std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IdTooLong: return "IdTooLong";
    case ErrorCode::InvalidId: return "InvalidId";
    case ErrorCode::ReservedId: return "ReservedId";
    case ErrorCode::SegmentTooLarge: return "SegmentTooLarge";
    case ErrorCode::StaleHandle: return "StaleHandle";
    case ErrorCode::ProtectedSectionOpen: return "ProtectedSectionOpen";
    case ErrorCode::UnbalancedExit: return "UnbalancedExit";
    case ErrorCode::NonMonotonicEpoch: return "NonMonotonicEpoch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::RetentionTooSmall: return "RetentionTooSmall";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadFlags: return "BadFlags";
    case ErrorCode::AlreadyBound: return "AlreadyBound";
    case ErrorCode::MtbfTooSmall: return "MtbfTooSmall";
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::UnrecoverableFailure: return "UnrecoverableFailure";
    case ErrorCode::NoCheckpoint: return "NoCheckpoint";
    case ErrorCode::MetaMismatch: return "MetaMismatch";
  }
  return "Unknown";
}

// Every failure surfaced by the library is an Error carrying a stable code.
// what() reads "<CodeName>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bspft
