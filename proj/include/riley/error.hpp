#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace riley {

enum class ErrorCode {
  PreconditionViolation,
  InvalidConfig,
  TransportError,
  ModelNotFound,
  EmptyCompletion,
  InvalidImage,
  DimensionMismatch,
  ZeroVector,
  MissingPersona,
  UnparseableVote,
  MissingFinalAnswer,
  MalformedSynthesis,
  EmbeddingFailure,
  EmptyIndex,
  UnknownSession,
  Busy,
  CorruptSnapshot,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ModelNotFound: return "ModelNotFound";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::MissingPersona: return "MissingPersona";
    case ErrorCode::UnparseableVote: return "UnparseableVote";
    case ErrorCode::MissingFinalAnswer: return "MissingFinalAnswer";
    case ErrorCode::MalformedSynthesis: return "MalformedSynthesis";
    case ErrorCode::EmbeddingFailure: return "EmbeddingFailure";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::Busy: return "Busy";
    case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
  }
  return "Unknown";
}

/// Single exception type for the library. The code identifies the failure;
/// stage and emotion are filled in by the pipeline as the error propagates.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, bool retryable = false)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        retryable_(retryable) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept { return retryable_; }

  const std::string& stage() const noexcept { return stage_; }
  const std::string& emotion() const noexcept { return emotion_; }
  // Raw backend output attached to parse failures.
  const std::string& detail() const noexcept { return detail_; }

  Error& with_stage(std::string stage) {
    stage_ = std::move(stage);
    return *this;
  }
  Error& with_emotion(std::string emotion) {
    emotion_ = std::move(emotion);
    return *this;
  }
  Error& with_detail(std::string detail) {
    detail_ = std::move(detail);
    return *this;
  }

 private:
  ErrorCode code_;
  bool retryable_;
  std::string stage_;
  std::string emotion_;
  std::string detail_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::PreconditionViolation, message);
}

}  // namespace riley
