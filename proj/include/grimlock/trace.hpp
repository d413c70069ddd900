// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Event trace for the simulation harness. Every observable protocol step is
// appended to one totally ordered trace; safety properties are checked as
// ordering predicates over it. Lines serialize as
//
//   seq=<u64> t=<u64> flow=<hex32> kind=<NAME> [key=value ...]
//
// with attributes sorted by key so a fixed seed reproduces the file byte for
// byte.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grimlock/core.hpp"
#include "grimlock/error.hpp"

namespace grimlock {

enum class EventKind : uint8_t {
  SandboxConnect = 1,
  BypassAttempt = 2,
  HandshakeDone = 3,
  CbComputed = 4,
  EvidenceSent = 5,
  EvidenceVerified = 6,
  TokenMinted = 7,
  TokenValid = 8,
  TokenRejected = 9,
  GateOpen = 10,
  FirstPlaintext = 11,
  FlowDenied = 12,
  FlowClosed = 13,
};

const char* event_kind_name(EventKind kind);
std::optional<EventKind> event_kind_from_name(std::string_view name);

/// Audit decision attached to the record mirrored from each event.
enum class Decision : uint8_t { Info = 0, Allow = 1, Deny = 2 };
const char* decision_name(Decision d);

struct Event {
  uint64_t seq = 0;
  uint64_t t = 0;
  FlowId flow{};  // all-zero for events not tied to a flow
  EventKind kind = EventKind::SandboxConnect;
  Decision decision = Decision::Info;
  std::optional<ErrorCode> reason;
  std::optional<TokenId> token_id;
  std::map<std::string, std::string> attrs;
};

/// One trace line, no trailing newline. Attribute keys and values must not
/// contain whitespace; values violating that are rejected at record time.
std::string serialize_event(const Event& ev);
Result<Event> parse_event_line(std::string_view line);

std::string serialize_trace(const std::vector<Event>& events);
Result<std::vector<Event>> parse_trace(std::string_view text);

/// Logical clock driven by the scenario script. Guards only read it.
class LogicalClock {
 public:
  uint64_t now() const { return now_; }
  void advance(uint64_t dt) { now_ += dt; }
  void set(uint64_t t) { now_ = t; }

 private:
  uint64_t now_ = 0;
};

class AuditLog;

/// Assigns the global sequence numbers and mirrors every event into the audit
/// log (so audit completeness holds by construction: exactly one record per
/// event). Thread safe; the sequence is the single total order.
class Recorder {
 public:
  Recorder();
  ~Recorder();
  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  /// Returns the assigned sequence number.
  uint64_t record(uint64_t t, const FlowId& flow, EventKind kind,
                  std::map<std::string, std::string> attrs = {},
                  Decision decision = Decision::Info,
                  std::optional<ErrorCode> reason = std::nullopt,
                  std::optional<TokenId> token_id = std::nullopt);

  const std::vector<Event>& events() const { return events_; }
  const AuditLog& audit() const { return *audit_; }

 private:
  mutable std::mutex mu_;
  uint64_t next_seq_ = 0;
  std::vector<Event> events_;
  std::unique_ptr<AuditLog> audit_;
};

}  // namespace grimlock
