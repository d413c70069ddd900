// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic multi-host simulation. A scenario stands up N hosts (guard +
// sandboxes each), one verifier, and a scripted workload, then runs it against
// a pluggable adversary. Everything observable lands in one totally ordered
// event trace plus a hash-chained audit log; the verdict re-checks the safety
// properties over that trace. A fixed (name, seed) pair reproduces the trace
// and audit bytes exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "grimlock/a2a.hpp"
#include "grimlock/audit.hpp"
#include "grimlock/trace.hpp"

namespace grimlock {

inline constexpr size_t kMaxSandboxesPerHost = 16;

enum class Adversary : uint8_t {
  None = 0,
  Bypass,          // sandboxes attempt direct egress around the guard
  Replay,          // captured evidence and tokens are replayed
  Relay,           // credentialed middlebox splices two channels together
  Mitm,            // handshake interception without trusted credentials
  ScopeEscalation, // sandboxes request more scope than policy grants
  ExpiredToken,    // grant delivery delayed past token expiry
};

const char* adversary_name(Adversary a);

struct ScenarioSpec {
  std::string name = "honest";
  Adversary adversary = Adversary::None;
  uint64_t seed = 0;
  size_t hosts = 2;
  size_t sandboxes_per_host = 2;
  size_t flows = 4;
  size_t bypass_attempts = 0;
  size_t payload_bytes = 64;
  uint64_t token_ttl = kDefaultTokenTtl;

  Status validate() const;

  static Result<ScenarioSpec> preset(std::string_view name, uint64_t seed);
  static std::vector<std::string> preset_names();
};

struct ScenarioResult {
  ScenarioSpec spec;
  bool pass = false;
  std::vector<std::string> failures;

  std::vector<Event> trace;
  AuditLog audit;

  size_t flows_attempted = 0;
  size_t flows_authorized = 0;
  size_t flows_denied = 0;
  size_t attacks_attempted = 0;
  size_t bypass_attempts = 0;
  size_t bypass_blocked = 0;
  uint64_t bytes_delivered = 0;
  std::map<ErrorCode, size_t> deny_reasons;
  std::map<std::string, uint64_t> full_handshakes;  // per host
};

Result<ScenarioResult> run_scenario(const ScenarioSpec& spec);

struct TraceCheckResult {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Safety predicates over the ordered trace:
///  (a) FIRST_PLAINTEXT on a flow is preceded by GATE_OPEN on that flow,
///  (b) GATE_OPEN is preceded by TOKEN_VALID on that flow with the same
///      cb_hash,
///  (c) FIRST_PLAINTEXT is preceded by SANDBOX_CONNECT on that flow (every
///      delivered byte maps to an intercepted flow),
///  (d) no TOKEN_MINTED scope exceeds policy_max.
TraceCheckResult assert_trace_properties(const std::vector<Event>& trace,
                                         const Scope& policy_max);

/// Writes dir/trace.txt and dir/audit.bin.
Status write_scenario_outputs(const ScenarioResult& result,
                              const std::filesystem::path& dir);

}  // namespace grimlock
