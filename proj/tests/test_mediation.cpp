// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include "grimlock/mediation.hpp"

using namespace grimlock;

namespace {

SandboxManifest mail_manifest(const std::string& host = "hostA", const std::string& sb = "sb1") {
  auto m = make_manifest(host, sb,
                         {ScopeRule{"mail.example:443", Scope{"send:mail"}},
                          ScopeRule{"*:443", Scope{"fetch:web"}}});
  REQUIRE(m.ok());
  return *m;
}

}  // namespace

TEST_CASE("manifest measurement is reproducible and covers the policy") {
  auto m = mail_manifest();
  CHECK(m.validate().ok());
  auto recomputed = m.computed_measurement();
  REQUIRE(recomputed.ok());
  CHECK(*recomputed == m.identity.measurement);

  // Any policy edit moves the measurement.
  SandboxManifest edited = m;
  edited.scope_rules[0].scope = Scope{"send:mail", "read:mail"};
  auto moved = edited.computed_measurement();
  REQUIRE(moved.ok());
  CHECK(*moved != m.identity.measurement);
  CHECK(edited.validate().code() == ErrorCode::MeasurementMismatch);

  SandboxManifest bad_rule = m;
  bad_rule.scope_rules.push_back(ScopeRule{"", Scope{"a:b"}});
  CHECK(bad_rule.canonical_bytes().code() == ErrorCode::InvalidConfig);
}

TEST_CASE("sandbox registration") {
  MediationPoint mp("hostA", 1);
  auto m = mail_manifest();

  auto id = mp.register_sandbox(m);
  REQUIRE(id.ok());
  CHECK(id->subject() == "hostA/sb1");
  CHECK(mp.sandbox_count() == 1);
  REQUIRE(mp.manifest_for(*id) != nullptr);
  CHECK(mp.manifest_for(*id)->scope_rules.size() == 2);

  CHECK(mp.register_sandbox(m).code() == ErrorCode::DuplicateSandbox);

  SandboxManifest tampered = mail_manifest("hostA", "sb2");
  tampered.scope_rules[0].scope = Scope{"admin:all"};
  CHECK(mp.register_sandbox(tampered).code() == ErrorCode::MeasurementMismatch);

  CHECK(mp.register_sandbox(mail_manifest("hostB", "sb1")).code() == ErrorCode::InvalidConfig);
}

TEST_CASE("scope resolution is first-match with wildcard hosts") {
  auto m = mail_manifest();
  Ipv4 ip = Ipv4::of(10, 0, 0, 5);

  auto by_name = MediationPoint::resolve_scope(m, ip, 443, "mail.example");
  REQUIRE(by_name.ok());
  CHECK(by_name->entries() == std::vector<std::string>{"send:mail"});

  // Without a dns name the literal ip:port is matched; only the wildcard hits.
  auto by_ip = MediationPoint::resolve_scope(m, ip, 443, std::nullopt);
  REQUIRE(by_ip.ok());
  CHECK(by_ip->entries() == std::vector<std::string>{"fetch:web"});

  CHECK(MediationPoint::resolve_scope(m, ip, 80, "mail.example").code() == ErrorCode::DefaultDeny);

  // Ordered semantics: an earlier wildcard shadows a later literal.
  auto shadowed = make_manifest("hostA", "sb9",
                                {ScopeRule{"*:443", Scope{"fetch:web"}},
                                 ScopeRule{"mail.example:443", Scope{"send:mail"}}});
  REQUIRE(shadowed.ok());
  auto first = MediationPoint::resolve_scope(*shadowed, ip, 443, "mail.example");
  REQUIRE(first.ok());
  CHECK(first->entries() == std::vector<std::string>{"fetch:web"});
}

TEST_CASE("intercept_connect creates gated flow state") {
  MediationPoint mp("hostA", 2);
  auto id = mp.register_sandbox(mail_manifest());
  REQUIRE(id.ok());

  Ipv4 src = Ipv4::of(172, 16, 0, 2);
  Ipv4 dst = Ipv4::of(10, 0, 0, 5);
  auto flow = mp.intercept_connect(*id, src, dst, 443, 1000, "mail.example");
  REQUIRE(flow.ok());
  CHECK(flow->auth_state == AuthState::PendingAuth);
  CHECK(flow->expiry == 1000 + kDefaultFlowTtl);
  CHECK(flow->requested_scope.entries() == std::vector<std::string>{"send:mail"});

  auto scope_bytes = scope_canonical_bytes(flow->requested_scope);
  REQUIRE(scope_bytes.ok());
  CHECK(flow->requested_scope_hash == hash(*scope_bytes));

  auto found = mp.flow_lookup(flow->key);
  REQUIRE(found.has_value());
  CHECK(found->flow_id == flow->flow_id);
  CHECK(mp.flow_by_id(flow->flow_id).has_value());

  SandboxIdentity ghost{"hostA", "ghost", {}};
  CHECK(mp.intercept_connect(ghost, src, dst, 443, 1000).code() == ErrorCode::UnknownSandbox);

  size_t before = mp.flow_count();
  CHECK(mp.intercept_connect(*id, src, dst, 25, 1000, "smtp.example").code() ==
        ErrorCode::DefaultDeny);
  CHECK(mp.flow_count() == before);
}

TEST_CASE("block_direct always denies and counts") {
  MediationPoint mp("hostA", 3);
  auto id = mp.register_sandbox(mail_manifest());
  REQUIRE(id.ok());

  size_t sink_calls = 0;
  mp.set_bypass_sink([&](const BypassAttempt& a) {
    ++sink_calls;
    CHECK(a.host_id == "hostA");
  });

  Ipv4 dst = Ipv4::of(10, 0, 0, 9);
  for (int i = 0; i < 5; ++i) {
    CHECK(mp.block_direct("sb1", dst, 443).code() == ErrorCode::BypassBlocked);
  }
  CHECK(mp.block_direct("", dst, 443).code() == ErrorCode::BypassBlocked);
  CHECK(mp.bypass_attempts() == 6);
  CHECK(sink_calls == 6);
}

TEST_CASE("flow state machine transitions exactly once") {
  MediationPoint mp("hostA", 4);
  auto id = mp.register_sandbox(mail_manifest());
  REQUIRE(id.ok());
  auto flow = mp.intercept_connect(*id, Ipv4::of(172, 16, 0, 2), Ipv4::of(10, 0, 0, 5), 443, 0,
                                   "mail.example");
  REQUIRE(flow.ok());
  ChannelId ch{};
  ch.fill(0xAA);

  // Closing a pending flow skips a required state.
  CHECK_FALSE(mp.mark_closed(flow->flow_id).ok());

  auto first = mp.mark_authorized(flow->flow_id, ch);
  REQUIRE(first.ok());
  CHECK(*first == true);
  auto second = mp.mark_authorized(flow->flow_id, ch);
  REQUIRE(second.ok());
  CHECK(*second == false);
  CHECK(mp.flow_by_id(flow->flow_id)->channel_id == ch);

  // Authorized flows cannot be retroactively denied.
  CHECK_FALSE(mp.mark_denied(flow->flow_id).ok());
  CHECK(mp.mark_closed(flow->flow_id).ok());
  CHECK(mp.mark_closed(flow->flow_id).ok());
  CHECK(mp.mark_authorized(flow->flow_id, ch).code() == ErrorCode::ProtocolError);

  auto flow2 = mp.intercept_connect(*id, Ipv4::of(172, 16, 0, 2), Ipv4::of(10, 0, 0, 6), 443, 0);
  REQUIRE(flow2.ok());
  CHECK(mp.mark_denied(flow2->flow_id).ok());
  CHECK(mp.flow_by_id(flow2->flow_id)->auth_state == AuthState::Denied);
  CHECK(mp.mark_authorized(flow2->flow_id, ch).code() == ErrorCode::ProtocolError);
}

TEST_CASE("authorization race admits exactly one winner") {
  MediationPoint mp("hostA", 5);
  auto id = mp.register_sandbox(mail_manifest());
  REQUIRE(id.ok());
  auto flow = mp.intercept_connect(*id, Ipv4::of(172, 16, 0, 2), Ipv4::of(10, 0, 0, 5), 443, 0,
                                   "mail.example");
  REQUIRE(flow.ok());
  ChannelId ch{};

  std::atomic<int> winners{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      auto r = mp.mark_authorized(flow->flow_id, ch);
      if (r.ok() && *r) winners.fetch_add(1);
    });
  }
  for (auto& t : threads) t.join();
  CHECK(winners.load() == 1);
}

TEST_CASE("eviction removes expired and terminal flows") {
  MediationPoint mp("hostA", 6, 100);
  CHECK(mp.flow_evict_expired(0) == 0);

  auto id = mp.register_sandbox(mail_manifest());
  REQUIRE(id.ok());
  Ipv4 src = Ipv4::of(172, 16, 0, 2);

  auto f1 = mp.intercept_connect(*id, src, Ipv4::of(10, 0, 0, 1), 443, 0);
  auto f2 = mp.intercept_connect(*id, src, Ipv4::of(10, 0, 0, 2), 443, 50);
  auto f3 = mp.intercept_connect(*id, src, Ipv4::of(10, 0, 0, 3), 443, 50);
  REQUIRE(f1.ok());
  REQUIRE(f2.ok());
  REQUIRE(f3.ok());
  REQUIRE(mp.mark_denied(f3->flow_id).ok());

  // f1 expires at 100; at 101 it is gone. f3 goes with it (terminal state).
  CHECK(mp.flow_evict_expired(101) == 2);
  CHECK_FALSE(mp.flow_by_id(f1->flow_id).has_value());
  CHECK(mp.flow_by_id(f2->flow_id).has_value());
  CHECK_FALSE(mp.flow_by_id(f3->flow_id).has_value());
  CHECK(mp.flow_evict_expired(101) == 0);
}
