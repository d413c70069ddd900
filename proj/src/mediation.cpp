// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/mediation.hpp"

#include <algorithm>

namespace grimlock {

std::string Ipv4::str() const {
  return std::to_string((value >> 24) & 0xff) + "." + std::to_string((value >> 16) & 0xff) + "." +
         std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
}

const char* auth_state_name(AuthState state) {
  switch (state) {
    case AuthState::PendingAuth:
      return "PENDING_AUTH";
    case AuthState::Authorized:
      return "AUTHORIZED";
    case AuthState::Denied:
      return "DENIED";
    case AuthState::Closed:
      return "CLOSED";
  }
  return "UNKNOWN";
}

// Layout: u8 version || lp16 host_id || lp16 sandbox_id || u16 rule count ||
// per rule lp16 pattern || scope bytes. The measurement field is excluded on
// purpose: it is defined as the hash of these bytes.
Result<Bytes> SandboxManifest::canonical_bytes() const {
  ByteWriter w;
  w.u8(1);
  w.lp16(identity.host_id);
  w.lp16(identity.sandbox_id);
  if (scope_rules.size() > UINT16_MAX) {
    return Error(ErrorCode::InvalidConfig, "too many scope rules");
  }
  w.u16(static_cast<uint16_t>(scope_rules.size()));
  for (const auto& rule : scope_rules) {
    if (rule.pattern.empty()) {
      return Error(ErrorCode::InvalidConfig, "empty scope rule pattern");
    }
    w.lp16(rule.pattern);
    auto scope_bytes = scope_canonical_bytes(rule.scope);
    if (!scope_bytes.ok()) return scope_bytes.error();
    w.raw(*scope_bytes);
  }
  return w.take();
}

Result<Digest> SandboxManifest::computed_measurement() const {
  auto bytes = canonical_bytes();
  if (!bytes.ok()) return bytes.error();
  return hash(*bytes);
}

Status SandboxManifest::validate() const {
  if (identity.host_id.empty() || identity.sandbox_id.empty()) {
    return Status(ErrorCode::InvalidConfig, "empty sandbox identity");
  }
  auto measured = computed_measurement();
  if (!measured.ok()) return Status(measured.error());
  if (*measured != identity.measurement) {
    return Status(ErrorCode::MeasurementMismatch, "manifest measurement mismatch");
  }
  return Status();
}

Result<SandboxManifest> make_manifest(std::string host_id, std::string sandbox_id,
                                      std::vector<ScopeRule> scope_rules) {
  SandboxManifest m;
  m.identity.host_id = std::move(host_id);
  m.identity.sandbox_id = std::move(sandbox_id);
  m.scope_rules = std::move(scope_rules);
  auto measured = m.computed_measurement();
  if (!measured.ok()) return measured.error();
  m.identity.measurement = *measured;
  return m;
}

MediationPoint::MediationPoint(std::string host_id, uint64_t rng_seed, uint64_t flow_ttl)
    : host_id_(std::move(host_id)), flow_ttl_(flow_ttl), rng_(rng_seed) {}

Result<SandboxIdentity> MediationPoint::register_sandbox(const SandboxManifest& manifest) {
  if (manifest.identity.host_id != host_id_) {
    return Error(ErrorCode::InvalidConfig, "manifest host does not match mediation point");
  }
  auto measured = manifest.computed_measurement();
  if (!measured.ok()) return measured.error();
  if (*measured != manifest.identity.measurement) {
    return Error(ErrorCode::MeasurementMismatch, manifest.identity.subject());
  }
  std::lock_guard lock(mu_);
  auto [it, inserted] = sandboxes_.emplace(manifest.identity.sandbox_id, manifest);
  if (!inserted) {
    return Error(ErrorCode::DuplicateSandbox, manifest.identity.subject());
  }
  return it->second.identity;
}

const SandboxManifest* MediationPoint::manifest_for(const SandboxIdentity& id) const {
  std::lock_guard lock(mu_);
  auto it = sandboxes_.find(id.sandbox_id);
  if (it == sandboxes_.end() || it->second.identity != id) return nullptr;
  return &it->second;
}

size_t MediationPoint::sandbox_count() const {
  std::lock_guard lock(mu_);
  return sandboxes_.size();
}

namespace {

bool pattern_matches(const std::string& pattern, const std::string& host, uint16_t port) {
  size_t colon = pattern.rfind(':');
  if (colon == std::string::npos) return false;
  std::string p_host = pattern.substr(0, colon);
  std::string p_port = pattern.substr(colon + 1);
  if (p_port != std::to_string(port)) return false;
  return p_host == "*" || p_host == host;
}

}  // namespace

Result<Scope> MediationPoint::resolve_scope(const SandboxManifest& manifest, Ipv4 dst_ip,
                                            uint16_t dst_port,
                                            const std::optional<std::string>& dns_name) {
  const std::string host = dns_name ? *dns_name : dst_ip.str();
  for (const auto& rule : manifest.scope_rules) {
    if (pattern_matches(rule.pattern, host, dst_port)) return rule.scope;
  }
  return Error(ErrorCode::DefaultDeny, host + ":" + std::to_string(dst_port));
}

Result<FlowRecord> MediationPoint::intercept_connect(const SandboxIdentity& src, Ipv4 src_ip,
                                                     Ipv4 dst_ip, uint16_t dst_port, uint64_t now,
                                                     const std::optional<std::string>& dns_name) {
  std::lock_guard lock(mu_);
  auto it = sandboxes_.find(src.sandbox_id);
  if (it == sandboxes_.end() || it->second.identity != src) {
    return Error(ErrorCode::UnknownSandbox, src.subject());
  }

  auto scope = resolve_scope(it->second, dst_ip, dst_port, dns_name);
  if (!scope.ok()) return scope.error();
  auto scope_bytes = scope_canonical_bytes(*scope);
  if (!scope_bytes.ok()) return scope_bytes.error();

  FlowRecord record;
  rng_.fill(record.flow_id.data(), record.flow_id.size());
  record.key = FlowKey{src, src_ip, dst_ip, dst_port};
  record.requested_scope = *scope;
  record.requested_scope_hash = hash(*scope_bytes);
  record.expiry = now + flow_ttl_;
  record.auth_state = AuthState::PendingAuth;

  by_key_[record.key] = record.flow_id;
  flows_[record.flow_id] = record;
  return record;
}

Status MediationPoint::block_direct(const std::string& sandbox_id, Ipv4 dst_ip,
                                    uint16_t dst_port) {
  BypassAttempt attempt{host_id_, sandbox_id, dst_ip, dst_port};
  std::function<void(const BypassAttempt&)> sink;
  {
    std::lock_guard lock(mu_);
    ++bypass_attempts_;
    sink = bypass_sink_;
  }
  if (sink) sink(attempt);
  return Status(ErrorCode::BypassBlocked,
                sandbox_id + " -> " + dst_ip.str() + ":" + std::to_string(dst_port));
}

std::optional<FlowRecord> MediationPoint::flow_lookup(const FlowKey& key) const {
  std::lock_guard lock(mu_);
  auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  auto fit = flows_.find(it->second);
  if (fit == flows_.end()) return std::nullopt;
  return fit->second;
}

std::optional<FlowRecord> MediationPoint::flow_by_id(const FlowId& id) const {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return std::nullopt;
  return it->second;
}

size_t MediationPoint::flow_count() const {
  std::lock_guard lock(mu_);
  return flows_.size();
}

size_t MediationPoint::flow_evict_expired(uint64_t now) {
  std::lock_guard lock(mu_);
  size_t removed = 0;
  for (auto it = flows_.begin(); it != flows_.end();) {
    const FlowRecord& r = it->second;
    bool terminal = r.auth_state == AuthState::Denied || r.auth_state == AuthState::Closed;
    if (r.expiry < now || terminal) {
      auto kit = by_key_.find(r.key);
      if (kit != by_key_.end() && kit->second == r.flow_id) by_key_.erase(kit);
      it = flows_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

Result<bool> MediationPoint::mark_authorized(const FlowId& id, const ChannelId& channel_id) {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return Error(ErrorCode::ProtocolError, "unknown flow");
  FlowRecord& r = it->second;
  switch (r.auth_state) {
    case AuthState::PendingAuth:
      r.auth_state = AuthState::Authorized;
      r.channel_id = channel_id;
      return true;
    case AuthState::Authorized:
      return false;
    case AuthState::Denied:
    case AuthState::Closed:
      return Error(ErrorCode::ProtocolError, "flow in terminal state");
  }
  return Error(ErrorCode::ProtocolError, "corrupt flow state");
}

Status MediationPoint::mark_denied(const FlowId& id) {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return Status(ErrorCode::ProtocolError, "unknown flow");
  FlowRecord& r = it->second;
  if (r.auth_state != AuthState::PendingAuth) {
    return Status(ErrorCode::ProtocolError, "flow not pending");
  }
  r.auth_state = AuthState::Denied;
  return Status();
}

Status MediationPoint::mark_closed(const FlowId& id) {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return Status(ErrorCode::ProtocolError, "unknown flow");
  FlowRecord& r = it->second;
  switch (r.auth_state) {
    case AuthState::Closed:
      return Status();
    case AuthState::Authorized:
    case AuthState::Denied:
      r.auth_state = AuthState::Closed;
      return Status();
    case AuthState::PendingAuth:
      // CLOSED is only reachable through AUTHORIZED or DENIED.
      return Status(ErrorCode::ProtocolError, "flow still pending");
  }
  return Status(ErrorCode::ProtocolError, "corrupt flow state");
}

uint64_t MediationPoint::bypass_attempts() const {
  std::lock_guard lock(mu_);
  return bypass_attempts_;
}

void MediationPoint::set_bypass_sink(std::function<void(const BypassAttempt&)> sink) {
  std::lock_guard lock(mu_);
  bypass_sink_ = std::move(sink);
}

}  // namespace grimlock
