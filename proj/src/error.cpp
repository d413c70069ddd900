// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/error.hpp"

namespace grimlock {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::HandshakeAuthFailure: return "HandshakeAuthFailure";
    case ErrorCode::TransportClosed: return "TransportClosed";
    case ErrorCode::RecordAuthFailure: return "RecordAuthFailure";
    case ErrorCode::NotEstablished: return "NotEstablished";
    case ErrorCode::InvalidLength: return "InvalidLength";
    case ErrorCode::StalePeerContext: return "StalePeerContext";
    case ErrorCode::DuplicateSandbox: return "DuplicateSandbox";
    case ErrorCode::MeasurementMismatch: return "MeasurementMismatch";
    case ErrorCode::UnknownSandbox: return "UnknownSandbox";
    case ErrorCode::DefaultDeny: return "DefaultDeny";
    case ErrorCode::BypassBlocked: return "BypassBlocked";
    case ErrorCode::BadNonceLength: return "BadNonceLength";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::NonceMismatch: return "NonceMismatch";
    case ErrorCode::ReplayDetected: return "ReplayDetected";
    case ErrorCode::BindingMismatch: return "BindingMismatch";
    case ErrorCode::MeasurementRejected: return "MeasurementRejected";
    case ErrorCode::AppraisalRejected: return "AppraisalRejected";
    case ErrorCode::EmptyGrant: return "EmptyGrant";
    case ErrorCode::AudienceMismatch: return "AudienceMismatch";
    case ErrorCode::Expired: return "Expired";
    case ErrorCode::NotYetValid: return "NotYetValid";
    case ErrorCode::ScopeViolation: return "ScopeViolation";
    case ErrorCode::ParentExpired: return "ParentExpired";
    case ErrorCode::MalformedToken: return "MalformedToken";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::InvalidContext: return "InvalidContext";
    case ErrorCode::InvalidScopeEntry: return "InvalidScopeEntry";
    case ErrorCode::ScenarioConfigError: return "ScenarioConfigError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::WouldBlock: return "WouldBlock";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "UnknownError";
}

std::optional<ErrorCode> error_from_name(std::string_view name) {
  for (uint16_t v = 1; v <= static_cast<uint16_t>(ErrorCode::ParseError); ++v) {
    auto code = static_cast<ErrorCode>(v);
    if (name == error_name(code)) return code;
  }
  return std::nullopt;
}

std::string Error::to_string() const {
  std::string out = error_name(code);
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace grimlock
