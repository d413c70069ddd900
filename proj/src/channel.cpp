// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/channel.hpp"

#include <algorithm>

namespace grimlock {

namespace {

constexpr uint8_t kMsgHello1 = 0x01;
constexpr uint8_t kMsgHello2 = 0x02;
constexpr uint8_t kMsgFinish = 0x03;
constexpr uint8_t kMsgResume1 = 0x11;
constexpr uint8_t kMsgResume2 = 0x12;

constexpr std::string_view kExporterMasterLabel = "grimlock sim exporter master";
constexpr std::string_view kChannelIdLabel = "grimlock sim channel id";
constexpr std::string_view kResumptionLabel = "grimlock sim resumption";
constexpr std::string_view kRecordKeyI2R = "grimlock sim record i2r";
constexpr std::string_view kRecordKeyR2I = "grimlock sim record r2i";
constexpr std::string_view kResponderSigLabel = "grimlock hs responder";
constexpr std::string_view kInitiatorSigLabel = "grimlock hs initiator";
constexpr std::string_view kResumeBinderI = "grimlock resume binder i";
constexpr std::string_view kResumeBinderR = "grimlock resume binder r";

Bytes label_info(std::string_view label, const Digest& transcript) {
  Bytes info = to_bytes(label);
  info.insert(info.end(), transcript.bytes.begin(), transcript.bytes.end());
  return info;
}

std::array<uint8_t, 32> expand32(const crypto::Hash32& prk, const Bytes& info) {
  auto out = crypto::hkdf_expand(BytesView(prk.data(), prk.size()), info, 32);
  std::array<uint8_t, 32> arr{};
  std::copy(out->begin(), out->end(), arr.begin());
  return arr;
}

crypto::Hash32 labeled_digest(std::string_view label, BytesView data) {
  Bytes buf = to_bytes(label);
  buf.insert(buf.end(), data.begin(), data.end());
  return crypto::sha256(buf);
}

struct HelloMsg {
  std::array<uint8_t, 32> random;
  std::string host_id;
  crypto::VerifyKey key;
};

Bytes encode_hello(uint8_t type, const HelloMsg& msg) {
  ByteWriter w;
  w.u8(type);
  w.raw(BytesView(msg.random.data(), msg.random.size()));
  w.lp16(msg.host_id);
  w.raw(BytesView(msg.key.data(), msg.key.size()));
  return w.take();
}

Result<HelloMsg> decode_hello(uint8_t type, const Bytes& frame) {
  ByteReader r(frame);
  auto tag = r.u8();
  if (!tag || *tag != type) return Error(ErrorCode::HandshakeAuthFailure, "bad handshake message");
  HelloMsg msg;
  auto random = r.raw(32);
  auto host = r.lp16_string();
  auto key = r.raw(32);
  if (!random || !host || !key || !r.done()) {
    return Error(ErrorCode::HandshakeAuthFailure, "malformed handshake message");
  }
  std::copy(random->begin(), random->end(), msg.random.begin());
  msg.host_id = std::move(*host);
  std::copy(key->begin(), key->end(), msg.key.begin());
  return msg;
}

bool anchored(const std::set<crypto::VerifyKey>& anchors, const crypto::VerifyKey& key) {
  return anchors.count(key) > 0;
}

struct SessionKeys {
  ChannelId channel_id;
  std::array<uint8_t, 32> exporter_secret;
  std::array<uint8_t, 32> resumption_secret;
  std::array<uint8_t, 32> mac_i2r;
  std::array<uint8_t, 32> mac_r2i;
};

SessionKeys derive_session(const crypto::Hash32& prk, const Digest& transcript) {
  SessionKeys keys{};
  auto id_bytes = crypto::hkdf_expand(BytesView(prk.data(), prk.size()),
                                      label_info(kChannelIdLabel, transcript), 16);
  std::copy(id_bytes->begin(), id_bytes->end(), keys.channel_id.begin());
  keys.exporter_secret = expand32(prk, label_info(kExporterMasterLabel, transcript));
  keys.resumption_secret = expand32(prk, label_info(kResumptionLabel, transcript));
  crypto::Hash32 exp{};
  std::copy(keys.exporter_secret.begin(), keys.exporter_secret.end(), exp.begin());
  keys.mac_i2r = expand32(exp, to_bytes(kRecordKeyI2R));
  keys.mac_r2i = expand32(exp, to_bytes(kRecordKeyR2I));
  return keys;
}

ChannelHandle make_handle(ChannelRole role, const SessionKeys& keys, const Digest& transcript,
                          const std::array<uint8_t, 32>& c_rand,
                          const std::array<uint8_t, 32>& s_rand, HostIdentity peer,
                          std::shared_ptr<Transport> transport, Side side);

}  // namespace

// ---------------------------------------------------------------------------
// Transport

Status InMemoryTransport::send(Side from, const Bytes& frame) {
  std::lock_guard lock(mu_);
  if (closed_) return Status(ErrorCode::TransportClosed);
  if (tap_log_) tap_log_->push_back({from, frame});
  (from == Side::A ? to_b_ : to_a_).push_back(frame);
  return Status();
}

Result<Bytes> InMemoryTransport::recv(Side at) {
  std::lock_guard lock(mu_);
  auto& queue = at == Side::A ? to_a_ : to_b_;
  if (queue.empty()) {
    if (closed_) return Error(ErrorCode::TransportClosed);
    return Error(ErrorCode::WouldBlock);
  }
  Bytes frame = std::move(queue.front());
  queue.pop_front();
  return frame;
}

bool InMemoryTransport::pending(Side at) const {
  std::lock_guard lock(mu_);
  return !(at == Side::A ? to_a_ : to_b_).empty();
}

void InMemoryTransport::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
}

bool InMemoryTransport::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

Tap::Tap(std::shared_ptr<InMemoryTransport> transport) : transport_(std::move(transport)) {
  std::lock_guard lock(transport_->mu_);
  if (!transport_->tap_log_) {
    transport_->tap_log_ = std::make_shared<std::vector<TapFrame>>();
  }
  log_ = transport_->tap_log_;
}

Status Tap::reinject(size_t index) {
  if (index >= log_->size()) return Status(ErrorCode::InvalidLength, "no such captured frame");
  TapFrame frame = (*log_)[index];
  return transport_->send(frame.from, frame.data);
}

size_t Bridge::pump() {
  size_t moved = 0;
  while (t1_->pending(Side::B)) {
    auto frame = t1_->recv(Side::B);
    if (!frame) break;
    t2_->send(Side::A, *frame);
    ++moved;
  }
  while (t2_->pending(Side::A)) {
    auto frame = t2_->recv(Side::A);
    if (!frame) break;
    t1_->send(Side::B, *frame);
    ++moved;
  }
  forwarded_ += moved;
  return moved;
}

// ---------------------------------------------------------------------------
// Config

ChannelConfig ChannelConfig::make(HostIdentity identity, crypto::SigningKey signing_key,
                                  std::set<crypto::VerifyKey> trust_anchors, uint64_t rng_seed,
                                  AuthCounters* counters) {
  ChannelConfig cfg;
  cfg.local_identity = std::move(identity);
  cfg.signing_key = signing_key;
  cfg.trust_anchors = std::move(trust_anchors);
  cfg.rng_seed = rng_seed;
  cfg.counters = counters;
  cfg.rng = std::make_shared<DetRng>(rng_seed);
  return cfg;
}

Status ChannelConfig::validate() const {
  if (auto st = local_identity.validate(); !st.ok()) return st;
  if (crypto::ed25519_public(signing_key) != local_identity.guard_pubkey) {
    return Status(ErrorCode::InvalidConfig, "signing key does not match guard_pubkey");
  }
  if (!rng) return Status(ErrorCode::InvalidConfig, "config missing rng stream");
  return Status();
}

// ---------------------------------------------------------------------------
// Handshake

namespace detail {

struct ChannelFactory {
  template <typename Keys>
  static ChannelHandle make(ChannelRole role, const Keys& keys, const Digest& transcript,
                            const std::array<uint8_t, 32>& c_rand,
                            const std::array<uint8_t, 32>& s_rand, HostIdentity peer,
                            std::shared_ptr<Transport> transport, Side side) {
    ChannelHandle h;
    h.state_ = ChannelHandle::State::Established;
    h.role_ = role;
    h.channel_id_ = keys.channel_id;
    h.peer_ = std::move(peer);
    h.transcript_hash_ = transcript;
    h.client_random_ = c_rand;
    h.server_random_ = s_rand;
    h.exporter_secret_ = keys.exporter_secret;
    h.resumption_secret_ = keys.resumption_secret;
    h.mac_send_ = role == ChannelRole::Initiator ? keys.mac_i2r : keys.mac_r2i;
    h.mac_recv_ = role == ChannelRole::Initiator ? keys.mac_r2i : keys.mac_i2r;
    h.transport_ = std::move(transport);
    h.side_ = side;
    return h;
  }
};

}  // namespace detail

namespace {

ChannelHandle make_handle(ChannelRole role, const SessionKeys& keys, const Digest& transcript,
                          const std::array<uint8_t, 32>& c_rand,
                          const std::array<uint8_t, 32>& s_rand, HostIdentity peer,
                          std::shared_ptr<Transport> transport, Side side) {
  return detail::ChannelFactory::make(role, keys, transcript, c_rand, s_rand, std::move(peer),
                                      std::move(transport), side);
}

}  // namespace

Result<ChannelPair> establish(const ChannelConfig& initiator_cfg, const ChannelConfig& responder_cfg,
                              std::shared_ptr<Transport> transport) {
  if (auto st = initiator_cfg.validate(); !st.ok()) return st.error();
  if (auto st = responder_cfg.validate(); !st.ok()) return st.error();
  if (transport->closed()) return Error(ErrorCode::TransportClosed);

  // Initiator hello.
  HelloMsg hello1;
  hello1.random = initiator_cfg.rng->array<32>();
  hello1.host_id = initiator_cfg.local_identity.host_id;
  hello1.key = crypto::ed25519_public(initiator_cfg.signing_key);
  Bytes hs1 = encode_hello(kMsgHello1, hello1);
  if (auto st = transport->send(Side::A, hs1); !st.ok()) return st.error();

  auto hs1_rx = transport->recv(Side::B);
  if (!hs1_rx) return hs1_rx.error();
  auto hello1_rx = decode_hello(kMsgHello1, *hs1_rx);
  if (!hello1_rx) return hello1_rx.error();
  if (!anchored(responder_cfg.trust_anchors, hello1_rx->key)) {
    return Error(ErrorCode::HandshakeAuthFailure, "initiator key not trusted");
  }

  // Responder hello, signed over the running transcript.
  HelloMsg hello2;
  hello2.random = responder_cfg.rng->array<32>();
  hello2.host_id = responder_cfg.local_identity.host_id;
  hello2.key = crypto::ed25519_public(responder_cfg.signing_key);
  Bytes hs2_core = encode_hello(kMsgHello2, hello2);
  Bytes signed2 = *hs1_rx;
  signed2.insert(signed2.end(), hs2_core.begin(), hs2_core.end());
  auto sig_r = crypto::ed25519_sign(responder_cfg.signing_key,
                                    BytesView(labeled_digest(kResponderSigLabel, signed2)));
  Bytes hs2 = hs2_core;
  hs2.insert(hs2.end(), sig_r.begin(), sig_r.end());
  if (auto st = transport->send(Side::B, hs2); !st.ok()) return st.error();

  auto hs2_rx = transport->recv(Side::A);
  if (!hs2_rx) return hs2_rx.error();
  if (hs2_rx->size() < 64) return Error(ErrorCode::HandshakeAuthFailure, "short responder hello");
  Bytes hs2_rx_core(hs2_rx->begin(), hs2_rx->end() - 64);
  crypto::Signature sig_r_rx;
  std::copy(hs2_rx->end() - 64, hs2_rx->end(), sig_r_rx.begin());
  auto hello2_rx = decode_hello(kMsgHello2, hs2_rx_core);
  if (!hello2_rx) return hello2_rx.error();
  if (!anchored(initiator_cfg.trust_anchors, hello2_rx->key)) {
    return Error(ErrorCode::HandshakeAuthFailure, "responder key not trusted");
  }
  Bytes signed2_rx = hs1;
  signed2_rx.insert(signed2_rx.end(), hs2_rx_core.begin(), hs2_rx_core.end());
  if (!crypto::ed25519_verify(hello2_rx->key, BytesView(labeled_digest(kResponderSigLabel, signed2_rx)),
                              sig_r_rx)) {
    return Error(ErrorCode::HandshakeAuthFailure, "responder signature invalid");
  }

  // Initiator finish: proves possession of the key announced in hello1.
  Bytes transcript_i = hs1;
  transcript_i.insert(transcript_i.end(), hs2_rx->begin(), hs2_rx->end());
  auto sig_i = crypto::ed25519_sign(initiator_cfg.signing_key,
                                    BytesView(labeled_digest(kInitiatorSigLabel, transcript_i)));
  ByteWriter finish_w;
  finish_w.u8(kMsgFinish);
  finish_w.raw(BytesView(sig_i.data(), sig_i.size()));
  Bytes hs3 = finish_w.take();
  if (auto st = transport->send(Side::A, hs3); !st.ok()) return st.error();

  auto hs3_rx = transport->recv(Side::B);
  if (!hs3_rx) return hs3_rx.error();
  if (hs3_rx->size() != 65 || (*hs3_rx)[0] != kMsgFinish) {
    return Error(ErrorCode::HandshakeAuthFailure, "malformed finish");
  }
  crypto::Signature sig_i_rx;
  std::copy(hs3_rx->begin() + 1, hs3_rx->end(), sig_i_rx.begin());
  Bytes transcript_r = *hs1_rx;
  transcript_r.insert(transcript_r.end(), hs2.begin(), hs2.end());
  if (!crypto::ed25519_verify(hello1_rx->key, BytesView(labeled_digest(kInitiatorSigLabel, transcript_r)),
                              sig_i_rx)) {
    return Error(ErrorCode::HandshakeAuthFailure, "initiator signature invalid");
  }

  Bytes full_transcript = hs1;
  full_transcript.insert(full_transcript.end(), hs2.begin(), hs2.end());
  full_transcript.insert(full_transcript.end(), hs3.begin(), hs3.end());
  Digest transcript = hash(full_transcript);

  auto prk = crypto::hkdf_extract(BytesView(hello1.random.data(), 32),
                                  BytesView(hello2.random.data(), 32));
  SessionKeys keys = derive_session(prk, transcript);

  if (initiator_cfg.counters) initiator_cfg.counters->full_handshakes++;
  if (responder_cfg.counters) responder_cfg.counters->full_handshakes++;

  HostIdentity responder_peer{hello2_rx->host_id, hello2_rx->key};
  HostIdentity initiator_peer{hello1_rx->host_id, hello1_rx->key};
  ChannelPair pair{
      make_handle(ChannelRole::Initiator, keys, transcript, hello1.random, hello2.random,
                  std::move(responder_peer), transport, Side::A),
      make_handle(ChannelRole::Responder, keys, transcript, hello1.random, hello2.random,
                  std::move(initiator_peer), transport, Side::B),
  };
  return pair;
}

Result<ChannelPair> resume(const ChannelConfig& initiator_cfg, const PeerContext& initiator_ctx,
                           const ChannelConfig& responder_cfg, const PeerContext& responder_ctx,
                           std::shared_ptr<Transport> transport) {
  if (auto st = initiator_cfg.validate(); !st.ok()) return st.error();
  if (auto st = responder_cfg.validate(); !st.ok()) return st.error();
  if (transport->closed()) return Error(ErrorCode::TransportClosed);

  // A context is only usable against the peer it was minted for, with the
  // key that peer presented at the time.
  if (initiator_ctx.peer.host_id != responder_cfg.local_identity.host_id ||
      initiator_ctx.peer.guard_pubkey != responder_cfg.local_identity.guard_pubkey) {
    return Error(ErrorCode::StalePeerContext, "initiator context does not match peer");
  }
  if (responder_ctx.peer.host_id != initiator_cfg.local_identity.host_id ||
      responder_ctx.peer.guard_pubkey != initiator_cfg.local_identity.guard_pubkey) {
    return Error(ErrorCode::StalePeerContext, "responder context does not match peer");
  }

  auto c_rand = initiator_cfg.rng->array<32>();
  BytesView i_secret(initiator_ctx.resumption_secret.data(), 32);
  BytesView r_secret(responder_ctx.resumption_secret.data(), 32);

  Bytes binder_input_i = to_bytes(kResumeBinderI);
  binder_input_i.insert(binder_input_i.end(), c_rand.begin(), c_rand.end());
  auto binder_i = crypto::hmac_sha256(i_secret, binder_input_i);

  ByteWriter r1w;
  r1w.u8(kMsgResume1);
  r1w.raw(BytesView(c_rand.data(), 32));
  r1w.lp16(initiator_cfg.local_identity.host_id);
  r1w.raw(BytesView(binder_i.data(), 32));
  Bytes r1 = r1w.take();
  if (auto st = transport->send(Side::A, r1); !st.ok()) return st.error();

  auto r1_rx = transport->recv(Side::B);
  if (!r1_rx) return r1_rx.error();
  {
    ByteReader r(*r1_rx);
    auto tag = r.u8();
    auto rand_rx = r.raw(32);
    auto host_rx = r.lp16_string();
    auto binder_rx = r.raw(32);
    if (!tag || *tag != kMsgResume1 || !rand_rx || !host_rx || !binder_rx || !r.done()) {
      return Error(ErrorCode::StalePeerContext, "malformed resume message");
    }
    Bytes expect_input = to_bytes(kResumeBinderI);
    expect_input.insert(expect_input.end(), rand_rx->begin(), rand_rx->end());
    auto expect = crypto::hmac_sha256(r_secret, expect_input);
    if (!crypto::constant_time_equal(BytesView(expect.data(), 32), *binder_rx)) {
      return Error(ErrorCode::StalePeerContext, "resumption binder mismatch");
    }
  }

  auto s_rand = responder_cfg.rng->array<32>();
  Bytes binder_input_r = to_bytes(kResumeBinderR);
  binder_input_r.insert(binder_input_r.end(), c_rand.begin(), c_rand.end());
  binder_input_r.insert(binder_input_r.end(), s_rand.begin(), s_rand.end());
  auto binder_r = crypto::hmac_sha256(r_secret, binder_input_r);

  ByteWriter r2w;
  r2w.u8(kMsgResume2);
  r2w.raw(BytesView(s_rand.data(), 32));
  r2w.raw(BytesView(binder_r.data(), 32));
  Bytes r2 = r2w.take();
  if (auto st = transport->send(Side::B, r2); !st.ok()) return st.error();

  auto r2_rx = transport->recv(Side::A);
  if (!r2_rx) return r2_rx.error();
  {
    ByteReader r(*r2_rx);
    auto tag = r.u8();
    auto rand_rx = r.raw(32);
    auto binder_rx = r.raw(32);
    if (!tag || *tag != kMsgResume2 || !rand_rx || !binder_rx || !r.done()) {
      return Error(ErrorCode::StalePeerContext, "malformed resume message");
    }
    Bytes expect_input = to_bytes(kResumeBinderR);
    expect_input.insert(expect_input.end(), c_rand.begin(), c_rand.end());
    expect_input.insert(expect_input.end(), rand_rx->begin(), rand_rx->end());
    auto expect = crypto::hmac_sha256(i_secret, expect_input);
    if (!crypto::constant_time_equal(BytesView(expect.data(), 32), *binder_rx)) {
      return Error(ErrorCode::StalePeerContext, "resumption binder mismatch");
    }
  }

  Bytes full_transcript = r1;
  full_transcript.insert(full_transcript.end(), r2.begin(), r2.end());
  Digest transcript = hash(full_transcript);

  Bytes ikm(c_rand.begin(), c_rand.end());
  ikm.insert(ikm.end(), s_rand.begin(), s_rand.end());
  auto prk = crypto::hkdf_extract(i_secret, ikm);
  SessionKeys keys = derive_session(prk, transcript);

  ChannelPair pair{
      make_handle(ChannelRole::Initiator, keys, transcript, c_rand, s_rand, initiator_ctx.peer,
                  transport, Side::A),
      make_handle(ChannelRole::Responder, keys, transcript, c_rand, s_rand, responder_ctx.peer,
                  transport, Side::B),
  };
  return pair;
}

// ---------------------------------------------------------------------------
// Records

Result<Bytes> ChannelHandle::exporter(BytesView label, BytesView context, size_t out_len) const {
  if (state_ != State::Established) return Error(ErrorCode::NotEstablished);
  auto ctx_hash = crypto::sha256(context);
  Bytes info(label.begin(), label.end());
  info.insert(info.end(), ctx_hash.begin(), ctx_hash.end());
  return crypto::hkdf_expand(BytesView(exporter_secret_.data(), 32), info, out_len);
}

Status ChannelHandle::send(const Bytes& plaintext) {
  if (state_ != State::Established) return Status(ErrorCode::NotEstablished);
  if (transport_->closed()) return Status(ErrorCode::TransportClosed);

  ByteWriter w;
  w.u64(seq_send_);
  w.u32(static_cast<uint32_t>(plaintext.size()));
  w.raw(plaintext);
  auto mac = crypto::hmac_sha256(BytesView(mac_send_.data(), 32), w.bytes());
  w.raw(BytesView(mac.data(), mac.size()));

  if (auto st = transport_->send(side_, w.bytes()); !st.ok()) return st;
  ++seq_send_;
  (offload_ ? records_offload_ : records_software_)++;
  return Status();
}

Result<Bytes> ChannelHandle::recv() {
  if (state_ == State::Failed) return Error(ErrorCode::RecordAuthFailure, "channel failed");
  if (state_ != State::Established) return Error(ErrorCode::NotEstablished);

  auto frame = transport_->recv(side_);
  if (!frame) return frame.error();
  if (frame->size() < 8 + 4 + 32) {
    state_ = State::Failed;
    return Error(ErrorCode::RecordAuthFailure, "short record");
  }

  BytesView body(frame->data(), frame->size() - 32);
  BytesView mac_rx(frame->data() + frame->size() - 32, 32);
  auto mac = crypto::hmac_sha256(BytesView(mac_recv_.data(), 32), body);
  if (!crypto::constant_time_equal(BytesView(mac.data(), 32), mac_rx)) {
    state_ = State::Failed;
    return Error(ErrorCode::RecordAuthFailure, "record MAC mismatch");
  }

  ByteReader r(body);
  uint64_t seq = *r.u64();
  uint32_t len = *r.u32();
  if (len != r.remaining()) {
    state_ = State::Failed;
    return Error(ErrorCode::RecordAuthFailure, "record length mismatch");
  }
  if (seq != seq_recv_) {
    // Duplicate or out-of-order record; replays land here with a valid MAC.
    state_ = State::Failed;
    return Error(ErrorCode::RecordAuthFailure,
                 seq < seq_recv_ ? "duplicate record sequence" : "record sequence gap");
  }
  ++seq_recv_;
  (offload_ ? records_offload_ : records_software_)++;
  return r.raw(len).value();
}

bool ChannelHandle::has_pending() const {
  return state_ == State::Established && transport_->pending(side_);
}

Status ChannelHandle::enable_offload() {
  if (state_ != State::Established) return Status(ErrorCode::NotEstablished);
  offload_ = true;
  return Status();
}

Result<PeerContext> ChannelHandle::peer_context(uint64_t now) const {
  if (state_ != State::Established) return Error(ErrorCode::NotEstablished);
  PeerContext ctx;
  ctx.peer = peer_;
  ctx.resumption_secret = resumption_secret_;
  ctx.created_at = now;
  return ctx;
}

void ChannelHandle::close() {
  if (state_ == State::Established) state_ = State::Closed;
  if (transport_) transport_->close();
}

}  // namespace grimlock
