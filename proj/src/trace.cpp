// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/trace.hpp"

#include <algorithm>
#include <charconv>

#include "grimlock/audit.hpp"

namespace grimlock {

namespace {

struct KindName {
  EventKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {EventKind::SandboxConnect, "SANDBOX_CONNECT"},
    {EventKind::BypassAttempt, "BYPASS_ATTEMPT"},
    {EventKind::HandshakeDone, "HANDSHAKE_DONE"},
    {EventKind::CbComputed, "CB_COMPUTED"},
    {EventKind::EvidenceSent, "EVIDENCE_SENT"},
    {EventKind::EvidenceVerified, "EVIDENCE_VERIFIED"},
    {EventKind::TokenMinted, "TOKEN_MINTED"},
    {EventKind::TokenValid, "TOKEN_VALID"},
    {EventKind::TokenRejected, "TOKEN_REJECTED"},
    {EventKind::GateOpen, "GATE_OPEN"},
    {EventKind::FirstPlaintext, "FIRST_PLAINTEXT"},
    {EventKind::FlowDenied, "FLOW_DENIED"},
    {EventKind::FlowClosed, "FLOW_CLOSED"},
};

bool token_clean(std::string_view s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '=';
  });
}

bool value_clean(std::string_view s) {
  return std::none_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t';
  });
}

std::optional<uint64_t> parse_u64(std::string_view s) {
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

const char* event_kind_name(EventKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "UNKNOWN";
}

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (name == kn.name) return kn.kind;
  }
  return std::nullopt;
}

const char* decision_name(Decision d) {
  switch (d) {
    case Decision::Info: return "info";
    case Decision::Allow: return "allow";
    case Decision::Deny: return "deny";
  }
  return "info";
}

std::string serialize_event(const Event& ev) {
  std::string out;
  out += "seq=" + std::to_string(ev.seq);
  out += " t=" + std::to_string(ev.t);
  out += " flow=" + to_hex(ev.flow);
  out += " kind=";
  out += event_kind_name(ev.kind);
  if (ev.decision != Decision::Info) {
    out += " decision=";
    out += decision_name(ev.decision);
  }
  if (ev.reason) {
    out += " reason=";
    out += error_name(*ev.reason);
  }
  if (ev.token_id) out += " token=" + to_hex(*ev.token_id);
  for (const auto& [k, v] : ev.attrs) {
    out += " " + k + "=" + v;
  }
  return out;
}

Result<Event> parse_event_line(std::string_view line) {
  Event ev;
  bool saw_seq = false, saw_t = false, saw_flow = false, saw_kind = false;
  size_t pos = 0;
  while (pos < line.size()) {
    size_t end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    std::string_view tok = line.substr(pos, end - pos);
    pos = end + 1;
    if (tok.empty()) continue;
    size_t eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      return Error(ErrorCode::ParseError, "trace token without key=value");
    }
    std::string_view key = tok.substr(0, eq);
    std::string_view val = tok.substr(eq + 1);
    if (key == "seq") {
      auto v = parse_u64(val);
      if (!v) return Error(ErrorCode::ParseError, "bad seq");
      ev.seq = *v;
      saw_seq = true;
    } else if (key == "t") {
      auto v = parse_u64(val);
      if (!v) return Error(ErrorCode::ParseError, "bad t");
      ev.t = *v;
      saw_t = true;
    } else if (key == "flow") {
      auto raw = from_hex(val);
      if (!raw || raw->size() != ev.flow.size()) {
        return Error(ErrorCode::ParseError, "bad flow id");
      }
      std::copy(raw->begin(), raw->end(), ev.flow.begin());
      saw_flow = true;
    } else if (key == "kind") {
      auto k = event_kind_from_name(val);
      if (!k) return Error(ErrorCode::ParseError, "unknown event kind");
      ev.kind = *k;
      saw_kind = true;
    } else if (key == "decision") {
      if (val == "allow") ev.decision = Decision::Allow;
      else if (val == "deny") ev.decision = Decision::Deny;
      else if (val == "info") ev.decision = Decision::Info;
      else return Error(ErrorCode::ParseError, "unknown decision");
    } else if (key == "reason") {
      auto code = error_from_name(val);
      if (!code) return Error(ErrorCode::ParseError, "unknown reason");
      ev.reason = *code;
    } else if (key == "token") {
      auto raw = from_hex(val);
      if (!raw || raw->size() != 16) {
        return Error(ErrorCode::ParseError, "bad token id");
      }
      TokenId id{};
      std::copy(raw->begin(), raw->end(), id.begin());
      ev.token_id = id;
    } else {
      ev.attrs.emplace(std::string(key), std::string(val));
    }
  }
  if (!saw_seq || !saw_t || !saw_flow || !saw_kind) {
    return Error(ErrorCode::ParseError, "trace line missing required field");
  }
  return ev;
}

std::string serialize_trace(const std::vector<Event>& events) {
  std::string out;
  for (const auto& ev : events) {
    out += serialize_event(ev);
    out += '\n';
  }
  return out;
}

Result<std::vector<Event>> parse_trace(std::string_view text) {
  std::vector<Event> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    auto ev = parse_event_line(line);
    if (!ev) return ev.error();
    out.push_back(std::move(*ev));
  }
  return out;
}

Recorder::Recorder() : audit_(std::make_unique<AuditLog>()) {}
Recorder::~Recorder() = default;

uint64_t Recorder::record(uint64_t t, const FlowId& flow, EventKind kind,
                          std::map<std::string, std::string> attrs,
                          Decision decision, std::optional<ErrorCode> reason,
                          std::optional<TokenId> token_id) {
  std::lock_guard<std::mutex> lock(mu_);
  Event ev;
  ev.seq = next_seq_++;
  ev.t = t;
  ev.flow = flow;
  ev.kind = kind;
  ev.decision = decision;
  ev.reason = reason;
  ev.token_id = token_id;
  for (auto& [k, v] : attrs) {
    if (!token_clean(k) || !value_clean(v)) {
      ev.attrs.emplace(k, "<invalid>");
    } else {
      ev.attrs.emplace(k, v);
    }
  }
  events_.push_back(ev);

  AuditRecord rec;
  rec.seq = ev.seq;
  rec.timestamp = t;
  rec.flow_id = flow;
  rec.event = kind;
  rec.decision = decision;
  rec.token_id = token_id;
  rec.reason = reason;
  audit_->append(rec);
  return ev.seq;
}

}  // namespace grimlock
