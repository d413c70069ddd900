// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace grimlock {

/// Protocol and plumbing failure codes. The numeric values are wire-visible:
/// AUTH_DENY frames and audit records carry them as u16 reason codes, so
/// existing values must never be renumbered.
enum class ErrorCode : uint16_t {
  HandshakeAuthFailure = 1,
  TransportClosed = 2,
  RecordAuthFailure = 3,
  NotEstablished = 4,
  InvalidLength = 5,
  StalePeerContext = 6,
  DuplicateSandbox = 7,
  MeasurementMismatch = 8,
  UnknownSandbox = 9,
  DefaultDeny = 10,
  BypassBlocked = 11,
  BadNonceLength = 12,
  BadSignature = 13,
  NonceMismatch = 14,
  ReplayDetected = 15,
  BindingMismatch = 16,
  MeasurementRejected = 17,
  AppraisalRejected = 18,
  EmptyGrant = 19,
  AudienceMismatch = 20,
  Expired = 21,
  NotYetValid = 22,
  ScopeViolation = 23,
  ParentExpired = 24,
  MalformedToken = 25,
  UnsupportedVersion = 26,
  BadMagic = 27,
  LengthMismatch = 28,
  ProtocolError = 29,
  InvalidContext = 30,
  InvalidScopeEntry = 31,
  ScenarioConfigError = 32,
  InvalidConfig = 33,
  WouldBlock = 34,
  IoError = 35,
  ParseError = 36,
};

const char* error_name(ErrorCode code);
std::optional<ErrorCode> error_from_name(std::string_view name);

struct Error {
  ErrorCode code;
  std::string detail;

  Error(ErrorCode c, std::string d = {}) : code(c), detail(std::move(d)) {}

  std::string to_string() const;
};

/// Value-or-error result. Protocol verdicts are data here, not exceptions:
/// deny reasons travel on the wire and into the audit log.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error err) : v_(std::move(err)) {}
  Result(ErrorCode code, std::string detail = {}) : v_(Error(code, std::move(detail))) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

  const Error& error() const { return std::get<Error>(v_); }
  ErrorCode code() const { return error().code; }

 private:
  std::variant<T, Error> v_;
};

/// Result without a value payload.
class Status {
 public:
  Status() = default;
  Status(Error err) : err_(std::move(err)) {}
  Status(ErrorCode code, std::string detail = {}) : err_(Error(code, std::move(detail))) {}

  static Status ok_status() { return Status(); }

  bool ok() const { return !err_.has_value(); }
  explicit operator bool() const { return ok(); }

  const Error& error() const { return *err_; }
  ErrorCode code() const { return err_->code; }

 private:
  std::optional<Error> err_;
};

}  // namespace grimlock
