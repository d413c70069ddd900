// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Interposition at the sandbox boundary. Every simulated egress path runs
// through a MediationPoint: intercept_connect creates gated per-flow state,
// block_direct is the deny verdict for anything that tries to skip it. The
// real-kernel seam this stands in for is documented at the bottom of this
// header and is intentionally not implemented.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "grimlock/channel.hpp"
#include "grimlock/core.hpp"
#include "grimlock/rng.hpp"

namespace grimlock {

inline constexpr uint64_t kDefaultFlowTtl = 300;

struct Ipv4 {
  uint32_t value = 0;

  static Ipv4 of(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
    return Ipv4{(uint32_t(a) << 24) | (uint32_t(b) << 16) | (uint32_t(c) << 8) | uint32_t(d)};
  }
  std::string str() const;

  auto operator<=>(const Ipv4&) const = default;
};

/// One "destination pattern -> scope" policy line. Patterns are
/// "host:port" where host may be the literal '*'; first match wins.
struct ScopeRule {
  std::string pattern;
  Scope scope;

  bool operator==(const ScopeRule&) const = default;
};

/// The measured description of a sandbox: identity plus its egress policy.
/// measurement = hash(canonical_bytes()), which covers everything except the
/// measurement field itself.
struct SandboxManifest {
  SandboxIdentity identity;
  std::vector<ScopeRule> scope_rules;

  Result<Bytes> canonical_bytes() const;
  Result<Digest> computed_measurement() const;
  Status validate() const;
};

/// Builds a manifest whose identity.measurement is already consistent.
Result<SandboxManifest> make_manifest(std::string host_id, std::string sandbox_id,
                                      std::vector<ScopeRule> scope_rules);

struct FlowKey {
  SandboxIdentity src_sandbox;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  uint16_t dst_port = 0;

  auto operator<=>(const FlowKey&) const = default;
};

enum class AuthState : uint8_t { PendingAuth, Authorized, Denied, Closed };
const char* auth_state_name(AuthState state);

struct FlowRecord {
  FlowId flow_id{};
  FlowKey key;
  Scope requested_scope;
  Digest requested_scope_hash;
  uint64_t expiry = 0;
  AuthState auth_state = AuthState::PendingAuth;
  std::optional<ChannelId> channel_id;
};

struct BypassAttempt {
  std::string host_id;
  std::string sandbox_id;  // empty for unregistered processes
  Ipv4 dst_ip;
  uint16_t dst_port = 0;
};

/// Per-host mediation state: registered sandboxes and the live flow table.
/// Thread-safe; flow state transitions are atomic and at-most-once.
class MediationPoint {
 public:
  MediationPoint(std::string host_id, uint64_t rng_seed, uint64_t flow_ttl = kDefaultFlowTtl);

  const std::string& host_id() const { return host_id_; }
  uint64_t flow_ttl() const { return flow_ttl_; }

  Result<SandboxIdentity> register_sandbox(const SandboxManifest& manifest);
  const SandboxManifest* manifest_for(const SandboxIdentity& id) const;
  size_t sandbox_count() const;

  /// First-match resolution of the requested scope for a destination. The
  /// match target is "dns_name:port" when dns_name is given, else "ip:port".
  static Result<Scope> resolve_scope(const SandboxManifest& manifest, Ipv4 dst_ip,
                                     uint16_t dst_port,
                                     const std::optional<std::string>& dns_name);

  /// Entry point for every mediated connect. Returns the new PENDING_AUTH
  /// record; no payload may cross until the record reaches AUTHORIZED.
  Result<FlowRecord> intercept_connect(const SandboxIdentity& src, Ipv4 src_ip, Ipv4 dst_ip,
                                       uint16_t dst_port, uint64_t now,
                                       const std::optional<std::string>& dns_name = std::nullopt);

  /// The enforcement verdict for egress that skipped intercept_connect.
  /// Always fails; counts the attempt and notifies the sink.
  Status block_direct(const std::string& sandbox_id, Ipv4 dst_ip, uint16_t dst_port);

  std::optional<FlowRecord> flow_lookup(const FlowKey& key) const;
  std::optional<FlowRecord> flow_by_id(const FlowId& id) const;
  size_t flow_count() const;

  /// Removes records with expiry < now or in a terminal state.
  size_t flow_evict_expired(uint64_t now);

  /// PENDING_AUTH -> AUTHORIZED. Returns true iff this call performed the
  /// transition (the release gate opens on exactly one true).
  Result<bool> mark_authorized(const FlowId& id, const ChannelId& channel_id);
  Status mark_denied(const FlowId& id);
  Status mark_closed(const FlowId& id);

  uint64_t bypass_attempts() const;
  void set_bypass_sink(std::function<void(const BypassAttempt&)> sink);

 private:
  std::string host_id_;
  uint64_t flow_ttl_;
  mutable std::mutex mu_;
  DetRng rng_;
  std::map<std::string, SandboxManifest> sandboxes_;  // by sandbox_id
  std::map<FlowKey, FlowId> by_key_;
  std::map<FlowId, FlowRecord> flows_;
  uint64_t bypass_attempts_ = 0;
  std::function<void(const BypassAttempt&)> bypass_sink_;
};

// Kernel seam (documented, not implemented). A native deployment replaces
// this module with:
//   - a connect-time hook (cgroup/connect4) that redirects sandbox egress to
//     the local guard's listening port and allocates the FlowKey,
//   - a per-packet egress hook that drops anything without an AUTHORIZED
//     entry in a shared map keyed exactly like FlowKey,
//   - a shared map from FlowKey to {verdict, guard redirect address} that the
//     guard updates on AUTH_GRANT/AUTH_DENY.
// The simulation keeps the same decision table and state machine.

}  // namespace grimlock
