// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "grimlock/harness.hpp"

using namespace grimlock;

namespace {

Event ev(uint64_t seq, EventKind kind, uint8_t flow_byte,
         std::map<std::string, std::string> attrs = {}) {
  Event e;
  e.seq = seq;
  e.t = seq;
  e.flow.fill(flow_byte);
  e.kind = kind;
  e.attrs = std::move(attrs);
  return e;
}

ScenarioResult run_preset(const std::string& name, uint64_t seed = 42) {
  auto spec = ScenarioSpec::preset(name, seed);
  REQUIRE(spec.ok());
  auto result = run_scenario(*spec);
  REQUIRE(result.ok());
  return std::move(*result);
}

}  // namespace

TEST_CASE("every preset scenario reaches its expected verdict") {
  for (const auto& name : ScenarioSpec::preset_names()) {
    CAPTURE(name);
    auto result = run_preset(name);
    for (const auto& f : result.failures) {
      CAPTURE(f);
    }
    CHECK(result.pass);
    CHECK(result.audit.verify().ok);
    CHECK(result.audit.size() == result.trace.size());
  }
}

TEST_CASE("honest runs amortize to one full handshake per guard") {
  auto result = run_preset("honest");
  REQUIRE(result.full_handshakes.size() == 2);
  for (const auto& [host, count] : result.full_handshakes) {
    CAPTURE(host);
    CHECK(count == 1);
  }
  CHECK(result.flows_authorized == result.spec.flows);
  CHECK(result.bytes_delivered == result.spec.flows * result.spec.payload_bytes);
}

TEST_CASE("each adversary is stopped with its characteristic reason") {
  auto relay = run_preset("relay");
  CHECK(relay.deny_reasons.size() == 1);
  CHECK(relay.deny_reasons.count(ErrorCode::BindingMismatch) == 1);

  auto mitm = run_preset("mitm");
  CHECK(mitm.deny_reasons.size() == 1);
  CHECK(mitm.deny_reasons.count(ErrorCode::HandshakeAuthFailure) == 1);

  auto replay = run_preset("replay");
  CHECK(replay.deny_reasons[ErrorCode::ReplayDetected] == replay.spec.flows);
  CHECK(replay.deny_reasons[ErrorCode::BindingMismatch] == replay.spec.flows);

  auto expired = run_preset("expired_token");
  CHECK(expired.deny_reasons.size() == 1);
  CHECK(expired.deny_reasons.count(ErrorCode::Expired) == 1);

  auto escalation = run_preset("scope_escalation");
  for (const auto& [code, count] : escalation.deny_reasons) {
    CHECK((code == ErrorCode::EmptyGrant || code == ErrorCode::ScopeViolation));
  }

  auto bypass = run_preset("bypass");
  CHECK(bypass.bypass_blocked == bypass.spec.bypass_attempts);
}

TEST_CASE("a fixed seed reproduces trace and audit byte for byte") {
  for (const auto& name : ScenarioSpec::preset_names()) {
    CAPTURE(name);
    auto r1 = run_preset(name, 7);
    auto r2 = run_preset(name, 7);
    auto r3 = run_preset(name, 8);
    CHECK(serialize_trace(r1.trace) == serialize_trace(r2.trace));
    CHECK(r1.audit.serialize() == r2.audit.serialize());
    CHECK(serialize_trace(r1.trace) != serialize_trace(r3.trace));
  }
}

TEST_CASE("scenario validation rejects out-of-range shapes") {
  ScenarioSpec spec;
  spec.hosts = 1;
  CHECK(spec.validate().code() == ErrorCode::ScenarioConfigError);
  spec.hosts = 2;
  spec.sandboxes_per_host = 0;
  CHECK(spec.validate().code() == ErrorCode::ScenarioConfigError);
  spec.sandboxes_per_host = kMaxSandboxesPerHost + 1;
  CHECK(spec.validate().code() == ErrorCode::ScenarioConfigError);
  spec.sandboxes_per_host = kMaxSandboxesPerHost;
  spec.flows = 0;
  CHECK(spec.validate().code() == ErrorCode::ScenarioConfigError);
  spec.flows = 1;
  CHECK(spec.validate().ok());
  CHECK_FALSE(ScenarioSpec::preset("no_such_scenario", 1).ok());
  CHECK_FALSE(run_scenario(ScenarioSpec{.hosts = 1}).ok());
}

TEST_CASE("trace properties catch synthetic counterexamples") {
  Scope policy_max({"read:feed", "send:mail"});

  SUBCASE("plaintext before the gate") {
    std::vector<Event> trace{ev(1, EventKind::SandboxConnect, 1),
                             ev(2, EventKind::FirstPlaintext, 1)};
    auto r = assert_trace_properties(trace, policy_max);
    REQUIRE_FALSE(r.ok);
    CHECK(r.violations.size() == 1);
    CHECK(r.violations[0].find("(a)") != std::string::npos);
  }

  SUBCASE("gate without a validated token") {
    std::vector<Event> trace{ev(1, EventKind::GateOpen, 1, {{"cb_hash", "aa"}})};
    auto r = assert_trace_properties(trace, policy_max);
    REQUIRE_FALSE(r.ok);
    CHECK(r.violations[0].find("(b)") != std::string::npos);
  }

  SUBCASE("gate bound to a different channel than the token") {
    std::vector<Event> trace{ev(1, EventKind::TokenValid, 1, {{"cb_hash", "aa"}}),
                             ev(2, EventKind::GateOpen, 1, {{"cb_hash", "bb"}})};
    auto r = assert_trace_properties(trace, policy_max);
    REQUIRE_FALSE(r.ok);
    CHECK(r.violations[0].find("(b)") != std::string::npos);
  }

  SUBCASE("plaintext on a flow mediation never saw") {
    std::vector<Event> trace{ev(1, EventKind::TokenValid, 1, {{"cb_hash", "aa"}}),
                             ev(2, EventKind::GateOpen, 1, {{"cb_hash", "aa"}}),
                             ev(3, EventKind::FirstPlaintext, 1)};
    auto r = assert_trace_properties(trace, policy_max);
    REQUIRE_FALSE(r.ok);
    CHECK(r.violations.size() == 1);
    CHECK(r.violations[0].find("(c)") != std::string::npos);
  }

  SUBCASE("minted scope outside the policy ceiling") {
    std::vector<Event> trace{ev(1, EventKind::TokenMinted, 1, {{"scope", "admin:all,send:mail"}})};
    auto r = assert_trace_properties(trace, policy_max);
    REQUIRE_FALSE(r.ok);
    CHECK(r.violations[0].find("(d)") != std::string::npos);
    CHECK(r.violations[0].find("admin:all") != std::string::npos);
  }

  SUBCASE("the well-ordered trace passes") {
    std::vector<Event> trace{
        ev(1, EventKind::SandboxConnect, 1),
        ev(2, EventKind::TokenMinted, 1, {{"scope", "send:mail"}}),
        ev(3, EventKind::TokenValid, 1, {{"cb_hash", "aa"}}),
        ev(4, EventKind::GateOpen, 1, {{"cb_hash", "aa"}}),
        ev(5, EventKind::FirstPlaintext, 1),
    };
    auto r = assert_trace_properties(trace, policy_max);
    CHECK(r.ok);
    CHECK(r.violations.empty());
  }
}

TEST_CASE("tampering with a serialized audit log is localized to a record") {
  auto result = run_preset("honest");
  Bytes raw = result.audit.serialize();
  REQUIRE(result.audit.size() > 4);

  auto clean = AuditLog::deserialize(raw);
  REQUIRE(clean.ok());
  CHECK(clean->verify().ok);

  // Flip one byte inside the third record's region and find the break there.
  size_t offset = 0;
  for (size_t i = 0; i < 2; ++i) {
    uint32_t len = (uint32_t(raw[offset]) << 24) | (uint32_t(raw[offset + 1]) << 16) |
                   (uint32_t(raw[offset + 2]) << 8) | uint32_t(raw[offset + 3]);
    offset += 4 + len + 32;
  }
  Bytes tampered = raw;
  tampered[offset + 4 + 9] ^= 0x01;  // timestamp byte of record 2
  auto reloaded = AuditLog::deserialize(tampered);
  REQUIRE(reloaded.ok());
  auto v = reloaded->verify();
  REQUIRE_FALSE(v.ok);
  CHECK(v.first_broken == 2);
}

TEST_CASE("scenario outputs land on disk and parse back") {
  auto result = run_preset("honest", 11);
  auto dir = std::filesystem::temp_directory_path() / "grimlock-harness-test";
  std::filesystem::remove_all(dir);
  REQUIRE(write_scenario_outputs(result, dir).ok());

  std::ifstream trace_in(dir / "trace.txt");
  REQUIRE(trace_in.good());
  std::string text((std::istreambuf_iterator<char>(trace_in)), std::istreambuf_iterator<char>());
  auto parsed = parse_trace(text);
  REQUIRE(parsed.ok());
  CHECK(parsed->size() == result.trace.size());
  for (size_t i = 0; i < parsed->size(); ++i) {
    CHECK((*parsed)[i].kind == result.trace[i].kind);
    CHECK((*parsed)[i].seq == result.trace[i].seq);
  }

  std::ifstream audit_in(dir / "audit.bin", std::ios::binary);
  REQUIRE(audit_in.good());
  Bytes raw((std::istreambuf_iterator<char>(audit_in)), std::istreambuf_iterator<char>());
  auto log = AuditLog::deserialize(raw);
  REQUIRE(log.ok());
  CHECK(log->verify().ok);
  CHECK(log->size() == result.audit.size());
  std::filesystem::remove_all(dir);
}
