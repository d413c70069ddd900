// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <set>

#include "golden_vectors.hpp"
#include "grimlock/channel.hpp"
#include "grimlock/rng.hpp"
#include "oracle/oracles.hpp"

using namespace grimlock;

namespace {

struct Endpoint {
  crypto::KeyPair keys;
  HostIdentity identity;
};

Endpoint make_endpoint(const std::string& host_id, uint8_t seed_byte) {
  crypto::Seed32 seed;
  seed.fill(seed_byte);
  auto keys = crypto::ed25519_keypair(seed);
  return Endpoint{keys, HostIdentity{host_id, keys.verify}};
}

ChannelConfig config_for(const Endpoint& e, const std::set<crypto::VerifyKey>& anchors,
                         uint64_t seed, AuthCounters* counters = nullptr) {
  return ChannelConfig::make(e.identity, e.keys.signing, anchors, seed, counters);
}

oracle::Bytes ob(BytesView b) { return oracle::Bytes(b.begin(), b.end()); }

// Recomputes exporter output from the handshake-public values with the
// OpenSSL-backed key schedule, bypassing the library's HKDF entirely.
Bytes oracle_exporter(const ChannelHandle& h, const Bytes& label, const Bytes& ctx,
                      size_t out_len) {
  auto secret = oracle::exporter_secret_from_handshake(
      ob(BytesView(h.client_random().data(), 32)), ob(BytesView(h.server_random().data(), 32)),
      ob(h.transcript_hash().view()));
  auto out = oracle::exporter(secret, std::string(label.begin(), label.end()),
                              oracle::Bytes(ctx.begin(), ctx.end()), out_len);
  return Bytes(out.begin(), out.end());
}

}  // namespace

TEST_CASE("establish authenticates both ends and derives a shared exporter") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  AuthCounters ca, cb;

  auto transport = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1, &ca), config_for(b, anchors, 2, &cb), transport);
  REQUIRE(pair.ok());
  CHECK(pair->initiator.established());
  CHECK(pair->responder.established());
  CHECK(pair->initiator.channel_id() == pair->responder.channel_id());
  CHECK(pair->initiator.peer().host_id == "hostB");
  CHECK(pair->responder.peer().host_id == "hostA");
  CHECK(ca.full_handshakes == 1);
  CHECK(cb.full_handshakes == 1);

  DetRng rng(3);
  for (int i = 0; i < 32; ++i) {
    Bytes label = rng.bytes(1 + rng.next_below(24));
    Bytes ctx = rng.bytes(rng.next_below(64));
    size_t n = 1 + rng.next_below(64);
    auto ei = pair->initiator.exporter(label, ctx, n);
    auto er = pair->responder.exporter(label, ctx, n);
    REQUIRE(ei.ok());
    REQUIRE(er.ok());
    CHECK(*ei == *er);
    CHECK(*ei == oracle_exporter(pair->initiator, label, ctx, n));
  }
}

TEST_CASE("establish rejects untrusted peers") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  auto rogue = make_endpoint("hostB", 0x33);

  std::set<crypto::VerifyKey> only_a{a.keys.verify};
  std::set<crypto::VerifyKey> both{a.keys.verify, b.keys.verify};

  // Responder key absent from initiator anchors.
  auto t1 = std::make_shared<InMemoryTransport>();
  auto r1 = establish(config_for(a, only_a, 1), config_for(b, both, 2), t1);
  CHECK(r1.code() == ErrorCode::HandshakeAuthFailure);

  // Initiator key absent from responder anchors.
  std::set<crypto::VerifyKey> only_b{b.keys.verify};
  auto t2 = std::make_shared<InMemoryTransport>();
  auto r2 = establish(config_for(a, both, 1), config_for(b, only_b, 2), t2);
  CHECK(r2.code() == ErrorCode::HandshakeAuthFailure);

  // Unanchored key on the wire even with the right host_id string.
  auto t3 = std::make_shared<InMemoryTransport>();
  auto r3 = establish(config_for(a, both, 1), config_for(rogue, both, 2), t3);
  CHECK(r3.code() == ErrorCode::HandshakeAuthFailure);
}

TEST_CASE("channel ids are unique across seeded establishments") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto cfg_a = config_for(a, anchors, 41);
  auto cfg_b = config_for(b, anchors, 42);

  std::set<ChannelId> ids;
  for (int i = 0; i < 1000; ++i) {
    auto t = std::make_shared<InMemoryTransport>();
    auto pair = establish(cfg_a, cfg_b, t);
    REQUIRE(pair.ok());
    ids.insert(pair->initiator.channel_id());
  }
  CHECK(ids.size() == 1000);
}

TEST_CASE("establishment is deterministic for fixed seeds") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};

  auto run = [&] {
    auto t = std::make_shared<InMemoryTransport>();
    auto pair = establish(config_for(a, anchors, 7), config_for(b, anchors, 9), t);
    REQUIRE(pair.ok());
    auto e = pair->initiator.exporter(to_bytes("label"), to_bytes("ctx"), 32);
    REQUIRE(e.ok());
    return std::make_pair(pair->initiator.channel_id(), *e);
  };
  CHECK(run() == run());
}

TEST_CASE("exporter is sensitive to every context bit") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto t = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1), config_for(b, anchors, 2), t);
  REQUIRE(pair.ok());

  Bytes label = to_bytes("EXPORTER-grimlock-a2a-v1");
  DetRng rng(5);
  for (int i = 0; i < 64; ++i) {
    Bytes ctx = rng.bytes(1 + rng.next_below(48));
    auto base = pair->initiator.exporter(label, ctx, 32);
    REQUIRE(base.ok());
    Bytes flipped = ctx;
    size_t bit = rng.next_below(flipped.size() * 8);
    flipped[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
    auto other = pair->initiator.exporter(label, flipped, 32);
    REQUIRE(other.ok());
    CHECK(*base != *other);
    CHECK(*other == oracle_exporter(pair->initiator, label, flipped, 32));
  }

  CHECK(pair->initiator.exporter(label, {}, 0).code() == ErrorCode::InvalidLength);
  CHECK(pair->initiator.exporter(label, {}, 255 * 32 + 1).code() == ErrorCode::InvalidLength);
}

TEST_CASE("exporter outputs separate across channels") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto cfg_a = config_for(a, anchors, 51);
  auto cfg_b = config_for(b, anchors, 52);

  Bytes label = to_bytes("EXPORTER-grimlock-a2a-v1");
  Bytes ctx = to_bytes("fixed context");
  std::set<Bytes> outputs;
  for (int i = 0; i < 1000; ++i) {
    auto t = std::make_shared<InMemoryTransport>();
    auto pair = establish(cfg_a, cfg_b, t);
    REQUIRE(pair.ok());
    auto e = pair->initiator.exporter(label, ctx, 32);
    REQUIRE(e.ok());
    outputs.insert(*e);
  }
  CHECK(outputs.size() == 1000);
}

TEST_CASE("records round-trip and reject tampering") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto t = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1), config_for(b, anchors, 2), t);
  REQUIRE(pair.ok());

  Bytes msg = to_bytes("hello responder");
  REQUIRE(pair->initiator.send(msg).ok());
  auto rx = pair->responder.recv();
  REQUIRE(rx.ok());
  CHECK(*rx == msg);

  Bytes reply = to_bytes("hello initiator");
  REQUIRE(pair->responder.send(reply).ok());
  auto rx2 = pair->initiator.recv();
  REQUIRE(rx2.ok());
  CHECK(*rx2 == reply);

  // Flip one byte in flight: pull the raw frame off the transport, corrupt
  // it, and push it back toward the responder.
  REQUIRE(pair->initiator.send(to_bytes("payload")).ok());
  auto raw = t->recv(Side::B);
  REQUIRE(raw.ok());
  Bytes corrupted = *raw;
  corrupted[corrupted.size() / 2] ^= 0x01;
  REQUIRE(t->send(Side::A, corrupted).ok());
  CHECK(pair->responder.recv().code() == ErrorCode::RecordAuthFailure);
}

TEST_CASE("replayed records are rejected by sequence tracking") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto t = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1), config_for(b, anchors, 2), t);
  REQUIRE(pair.ok());

  Tap capture = tap(t);
  CHECK(capture.frames().empty());

  REQUIRE(pair->initiator.send(to_bytes("once")).ok());
  REQUIRE(pair->responder.recv().ok());
  REQUIRE(capture.size() == 1);

  REQUIRE(capture.reinject(0).ok());
  CHECK(pair->responder.recv().code() == ErrorCode::RecordAuthFailure);
}

TEST_CASE("recv reports transport state") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  auto t = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1), config_for(b, anchors, 2), t);
  REQUIRE(pair.ok());

  CHECK_FALSE(pair->responder.has_pending());
  CHECK(pair->responder.recv().code() == ErrorCode::WouldBlock);

  t->close();
  CHECK(pair->responder.recv().code() == ErrorCode::TransportClosed);
  CHECK(pair->initiator.send(to_bytes("x")).code() == ErrorCode::TransportClosed);
}

TEST_CASE("offload mode is a counted no-op") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};

  ChannelHandle null_handle;
  CHECK(null_handle.enable_offload().code() == ErrorCode::NotEstablished);

  auto t = std::make_shared<InMemoryTransport>();
  auto pair = establish(config_for(a, anchors, 1), config_for(b, anchors, 2), t);
  REQUIRE(pair.ok());

  REQUIRE(pair->initiator.send(to_bytes("soft")).ok());
  REQUIRE(pair->responder.recv().ok());
  CHECK(pair->initiator.records_software() == 1);
  CHECK(pair->initiator.records_offload() == 0);

  REQUIRE(pair->initiator.enable_offload().ok());
  REQUIRE(pair->responder.enable_offload().ok());
  CHECK(pair->initiator.offload());

  Bytes msg = to_bytes("offloaded payload");
  REQUIRE(pair->initiator.send(msg).ok());
  auto rx = pair->responder.recv();
  REQUIRE(rx.ok());
  CHECK(*rx == msg);
  CHECK(pair->initiator.records_offload() == 1);
  CHECK(pair->responder.records_offload() == 1);
  CHECK(pair->initiator.records_software() == 1);
}

TEST_CASE("resume reuses cached peer context without mutual auth") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify};
  AuthCounters ca, cb;
  auto cfg_a = config_for(a, anchors, 61, &ca);
  auto cfg_b = config_for(b, anchors, 62, &cb);

  auto t1 = std::make_shared<InMemoryTransport>();
  auto full = establish(cfg_a, cfg_b, t1);
  REQUIRE(full.ok());
  CHECK(ca.full_handshakes == 1);

  auto ctx_a = full->initiator.peer_context(100);
  auto ctx_b = full->responder.peer_context(100);
  REQUIRE(ctx_a.ok());
  REQUIRE(ctx_b.ok());
  CHECK(ctx_a->peer.host_id == "hostB");

  auto t2 = std::make_shared<InMemoryTransport>();
  auto resumed = resume(cfg_a, *ctx_a, cfg_b, *ctx_b, t2);
  REQUIRE(resumed.ok());
  CHECK(resumed->initiator.established());
  CHECK(ca.full_handshakes == 1);
  CHECK(cb.full_handshakes == 1);
  CHECK(resumed->initiator.channel_id() != full->initiator.channel_id());

  Bytes label = to_bytes("EXPORTER-grimlock-a2a-v1");
  Bytes fixed_ctx = to_bytes("ctx");
  auto e_full = full->initiator.exporter(label, fixed_ctx, 32);
  auto e_res = resumed->initiator.exporter(label, fixed_ctx, 32);
  auto e_res_b = resumed->responder.exporter(label, fixed_ctx, 32);
  REQUIRE(e_full.ok());
  REQUIRE(e_res.ok());
  CHECK(*e_res == *e_res_b);
  CHECK(*e_full != *e_res);

  Bytes msg = to_bytes("over resumed channel");
  REQUIRE(resumed->initiator.send(msg).ok());
  auto rx = resumed->responder.recv();
  REQUIRE(rx.ok());
  CHECK(*rx == msg);
}

TEST_CASE("resume rejects mismatched or stale contexts") {
  auto a = make_endpoint("hostA", 0x11);
  auto b = make_endpoint("hostB", 0x22);
  auto c = make_endpoint("hostC", 0x33);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, b.keys.verify, c.keys.verify};
  auto cfg_a = config_for(a, anchors, 71);
  auto cfg_b = config_for(b, anchors, 72);
  auto cfg_c = config_for(c, anchors, 73);

  auto t1 = std::make_shared<InMemoryTransport>();
  auto ab = establish(cfg_a, cfg_b, t1);
  REQUIRE(ab.ok());
  auto ctx_a = ab->initiator.peer_context(0);
  auto ctx_b = ab->responder.peer_context(0);
  REQUIRE(ctx_a.ok());
  REQUIRE(ctx_b.ok());

  // Context minted for peer B used against peer C.
  auto t2 = std::make_shared<InMemoryTransport>();
  CHECK(resume(cfg_a, *ctx_a, cfg_c, *ctx_b, t2).code() == ErrorCode::StalePeerContext);

  // Secret mismatch between the two sides (e.g. one side rotated).
  PeerContext bad = *ctx_b;
  bad.resumption_secret[0] ^= 1;
  auto t3 = std::make_shared<InMemoryTransport>();
  CHECK(resume(cfg_a, *ctx_a, cfg_b, bad, t3).code() == ErrorCode::StalePeerContext);
}

TEST_CASE("bridged channels keep distinct exporter secrets and reject spliced records") {
  auto a = make_endpoint("hostA", 0x11);
  auto m = make_endpoint("hostM", 0x44);
  auto b = make_endpoint("hostB", 0x22);
  std::set<crypto::VerifyKey> anchors{a.keys.verify, m.keys.verify, b.keys.verify};

  auto t_am = std::make_shared<InMemoryTransport>();
  auto t_mb = std::make_shared<InMemoryTransport>();
  auto am = establish(config_for(a, anchors, 81), config_for(m, anchors, 82), t_am);
  auto mb = establish(config_for(m, anchors, 83), config_for(b, anchors, 84), t_mb);
  REQUIRE(am.ok());
  REQUIRE(mb.ok());

  Bytes label = to_bytes("EXPORTER-grimlock-a2a-v1");
  Bytes ctx = to_bytes("same context");
  auto e1 = am->initiator.exporter(label, ctx, 32);
  auto e2 = mb->responder.exporter(label, ctx, 32);
  REQUIRE(e1.ok());
  REQUIRE(e2.ok());
  CHECK(*e1 != *e2);

  // Splice: records sent on the A–M leg surface on the M–B leg, where the
  // record keys do not match.
  Bridge br = bridge(t_am, t_mb);
  REQUIRE(am->initiator.send(to_bytes("diverted")).ok());
  CHECK(br.pump() > 0);
  CHECK(mb->responder.recv().code() == ErrorCode::RecordAuthFailure);
}
