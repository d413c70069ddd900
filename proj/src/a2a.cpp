// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/a2a.hpp"

#include <algorithm>
#include <utility>

namespace grimlock {

namespace {

BytesView sv_bytes(std::string_view s) {
  return BytesView(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

std::string join_scope(const Scope& scope) {
  std::string out;
  for (const auto& e : scope.entries()) {
    if (!out.empty()) out += ',';
    out += e;
  }
  return out.empty() ? "-" : out;
}

constexpr uint8_t kDataTagPayload = 0x00;
constexpr uint8_t kDataTagFrame = 0x01;

}  // namespace

Result<Bytes> encode_context(const BindingContext& ctx) {
  if (ctx.version != 1) {
    return Error(ErrorCode::InvalidContext, "unsupported context version");
  }
  if (ctx.nonce.size() != 32) {
    return Error(ErrorCode::InvalidContext, "nonce must be 32 bytes");
  }
  if (ctx.audience.empty()) {
    return Error(ErrorCode::InvalidContext, "audience must not be empty");
  }
  auto scope = scope_canonical_bytes(ctx.scope);
  if (!scope) return scope.error();
  ByteWriter w;
  w.u8(ctx.version);
  w.raw(ctx.nonce);
  w.lp16(ctx.audience);
  w.raw(*scope);
  return w.take();
}

Result<BindingContext> decode_context(BytesView raw) {
  ByteReader r(raw);
  auto ver = r.u8();
  if (!ver) return Error(ErrorCode::ParseError, "truncated context");
  if (*ver != 1) return Error(ErrorCode::UnsupportedVersion, "context version");
  BindingContext ctx;
  ctx.version = *ver;
  auto nonce = r.raw(32);
  if (!nonce) return Error(ErrorCode::ParseError, "truncated nonce");
  ctx.nonce = std::move(*nonce);
  auto audience = r.lp16_string();
  if (!audience) return Error(ErrorCode::ParseError, "truncated audience");
  ctx.audience = std::move(*audience);
  auto scope = scope_from_reader(r);
  if (!scope) return scope.error();
  ctx.scope = std::move(*scope);
  if (!r.done()) return Error(ErrorCode::ParseError, "trailing bytes");
  if (ctx.audience.empty()) {
    return Error(ErrorCode::InvalidContext, "audience must not be empty");
  }
  return ctx;
}

Result<ChannelBinding> compute_cb(const ChannelHandle& channel, const BindingContext& ctx) {
  auto encoded = encode_context(ctx);
  if (!encoded) return encoded.error();
  auto cb = channel.exporter(sv_bytes(kExporterLabel), *encoded, 32);
  if (!cb) return cb.error();
  ChannelBinding out;
  out.cb = std::move(*cb);
  out.cb_hash = hash(out.cb);
  return out;
}

// --- control frames ---------------------------------------------------------

const char* frame_type_name(uint8_t type) {
  switch (static_cast<FrameType>(type)) {
    case FrameType::Hello: return "HELLO";
    case FrameType::AuthInit: return "AUTH_INIT";
    case FrameType::AuthEvidence: return "AUTH_EVIDENCE";
    case FrameType::AuthGrant: return "AUTH_GRANT";
    case FrameType::AuthDeny: return "AUTH_DENY";
    case FrameType::FlowClose: return "FLOW_CLOSE";
  }
  return "UNKNOWN";
}

void ControlFrame::add(TlvType t, BytesView value) {
  tlvs.push_back(Tlv{static_cast<uint16_t>(t), Bytes(value.begin(), value.end())});
}

void ControlFrame::add(TlvType t, std::string_view value) {
  add(t, sv_bytes(value));
}

const Bytes* ControlFrame::find(TlvType t) const {
  for (const auto& tlv : tlvs) {
    if (tlv.type == static_cast<uint16_t>(t)) return &tlv.value;
  }
  return nullptr;
}

Result<FlowId> ControlFrame::flow_id() const {
  const Bytes* v = find(TlvType::FlowId);
  if (!v) return Error(ErrorCode::ProtocolError, "missing flow_id TLV");
  if (v->size() != 16) return Error(ErrorCode::ProtocolError, "flow_id TLV must be 16 bytes");
  FlowId id{};
  std::copy(v->begin(), v->end(), id.begin());
  return id;
}

Result<Nonce32> ControlFrame::nonce() const {
  const Bytes* v = find(TlvType::Nonce);
  if (!v) return Error(ErrorCode::ProtocolError, "missing nonce TLV");
  if (v->size() != 32) return Error(ErrorCode::BadNonceLength, "nonce TLV must be 32 bytes");
  Nonce32 n{};
  std::copy(v->begin(), v->end(), n.begin());
  return n;
}

Result<std::string> ControlFrame::audience() const {
  const Bytes* v = find(TlvType::Audience);
  if (!v) return Error(ErrorCode::ProtocolError, "missing audience TLV");
  return std::string(v->begin(), v->end());
}

Result<Scope> ControlFrame::scope() const {
  const Bytes* v = find(TlvType::Scope);
  if (!v) return Error(ErrorCode::ProtocolError, "missing scope TLV");
  ByteReader r{BytesView(*v)};
  auto scope = scope_from_reader(r);
  if (!scope) return scope.error();
  if (!r.done()) return Error(ErrorCode::ProtocolError, "trailing bytes in scope TLV");
  return scope;
}

Result<Evidence> ControlFrame::evidence() const {
  const Bytes* v = find(TlvType::Evidence);
  if (!v) return Error(ErrorCode::ProtocolError, "missing evidence TLV");
  return Evidence::decode(BytesView(*v));
}

Result<ScopeToken> ControlFrame::token() const {
  const Bytes* v = find(TlvType::Token);
  if (!v) return Error(ErrorCode::ProtocolError, "missing token TLV");
  return ScopeToken::decode(BytesView(*v));
}

std::optional<ErrorCode> ControlFrame::deny_reason() const {
  const Bytes* v = find(TlvType::DenyReason);
  if (!v || v->size() != 2) return std::nullopt;
  return static_cast<ErrorCode>((uint16_t((*v)[0]) << 8) | uint16_t((*v)[1]));
}

Result<std::string> ControlFrame::host_id() const {
  const Bytes* v = find(TlvType::HostId);
  if (!v) return Error(ErrorCode::ProtocolError, "missing host TLV");
  return std::string(v->begin(), v->end());
}

Bytes frame_encode(const ControlFrame& frame) {
  ByteWriter payload;
  for (const auto& tlv : frame.tlvs) {
    payload.u16(tlv.type);
    payload.u32(static_cast<uint32_t>(tlv.value.size()));
    payload.raw(tlv.value);
  }
  ByteWriter w;
  w.raw(BytesView(kFrameMagic.data(), kFrameMagic.size()));
  w.u8(frame.version);
  w.u8(frame.type);
  w.u16(frame.flags);
  w.u32(static_cast<uint32_t>(payload.size()));
  w.raw(payload.bytes());
  return w.take();
}

Result<ControlFrame> frame_decode(BytesView raw) {
  ByteReader r(raw);
  auto magic = r.raw(4);
  if (!magic) return Error(ErrorCode::BadMagic, "frame shorter than magic");
  if (!std::equal(magic->begin(), magic->end(), kFrameMagic.begin())) {
    return Error(ErrorCode::BadMagic, "bad frame magic");
  }
  auto ver = r.u8();
  if (!ver) return Error(ErrorCode::LengthMismatch, "truncated header");
  if (*ver != kFrameVersion) {
    return Error(ErrorCode::UnsupportedVersion, "frame version");
  }
  auto type = r.u8();
  auto flags = r.u16();
  auto length = r.u32();
  if (!type || !flags || !length) {
    return Error(ErrorCode::LengthMismatch, "truncated header");
  }
  if (*length != r.remaining()) {
    return Error(ErrorCode::LengthMismatch, "payload length disagrees with buffer");
  }
  ControlFrame frame;
  frame.version = *ver;
  frame.type = *type;
  frame.flags = *flags;
  while (!r.done()) {
    auto t = r.u16();
    auto len = r.u32();
    if (!t || !len) return Error(ErrorCode::LengthMismatch, "truncated TLV header");
    auto value = r.raw(*len);
    if (!value) return Error(ErrorCode::LengthMismatch, "TLV runs past payload");
    frame.tlvs.push_back(Tlv{*t, std::move(*value)});
  }
  return frame;
}

ControlFrame make_hello(const FlowId& flow, std::string_view host) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::Hello);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  f.add(TlvType::HostId, host);
  return f;
}

ControlFrame make_auth_init(const FlowId& flow, const Nonce32& nonce,
                            std::string_view audience, const Scope& scope) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::AuthInit);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  f.add(TlvType::Nonce, BytesView(nonce.data(), nonce.size()));
  f.add(TlvType::Audience, audience);
  auto scope_bytes = scope_canonical_bytes(scope);
  f.add(TlvType::Scope, scope_bytes ? BytesView(*scope_bytes) : BytesView());
  return f;
}

ControlFrame make_auth_evidence(const FlowId& flow, const Evidence& ev) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::AuthEvidence);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  auto encoded = ev.encode();
  f.add(TlvType::Evidence, encoded ? BytesView(*encoded) : BytesView());
  return f;
}

ControlFrame make_auth_grant(const FlowId& flow, const ScopeToken& token) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::AuthGrant);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  auto encoded = token.encode();
  f.add(TlvType::Token, encoded ? BytesView(*encoded) : BytesView());
  return f;
}

ControlFrame make_auth_deny(const FlowId& flow, ErrorCode reason) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::AuthDeny);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  const auto code = static_cast<uint16_t>(reason);
  const uint8_t raw[2] = {static_cast<uint8_t>(code >> 8), static_cast<uint8_t>(code & 0xff)};
  f.add(TlvType::DenyReason, BytesView(raw, 2));
  return f;
}

ControlFrame make_flow_close(const FlowId& flow) {
  ControlFrame f;
  f.type = static_cast<uint8_t>(FrameType::FlowClose);
  f.add(TlvType::FlowId, BytesView(flow.data(), flow.size()));
  return f;
}

Status send_ctrl(ChannelHandle& ch, const ControlFrame& frame) {
  return ch.send(frame_encode(frame));
}

Result<ControlFrame> recv_ctrl(ChannelHandle& ch) {
  auto raw = ch.recv();
  if (!raw) return raw.error();
  return frame_decode(*raw);
}

Status send_data_frame(ChannelHandle& ch, const ControlFrame& frame) {
  Bytes msg;
  msg.push_back(kDataTagFrame);
  Bytes encoded = frame_encode(frame);
  msg.insert(msg.end(), encoded.begin(), encoded.end());
  return ch.send(msg);
}

Status send_data_payload(ChannelHandle& ch, BytesView payload) {
  Bytes msg;
  msg.reserve(payload.size() + 1);
  msg.push_back(kDataTagPayload);
  msg.insert(msg.end(), payload.begin(), payload.end());
  return ch.send(msg);
}

Result<DataMsg> recv_data(ChannelHandle& ch) {
  auto raw = ch.recv();
  if (!raw) return raw.error();
  if (raw->empty()) return Error(ErrorCode::ProtocolError, "empty data message");
  DataMsg msg;
  BytesView body(raw->data() + 1, raw->size() - 1);
  if ((*raw)[0] == kDataTagFrame) {
    auto frame = frame_decode(body);
    if (!frame) return frame.error();
    msg.is_frame = true;
    msg.frame = std::move(*frame);
  } else if ((*raw)[0] == kDataTagPayload) {
    msg.payload.assign(body.begin(), body.end());
  } else {
    return Error(ErrorCode::ProtocolError, "unknown data tag");
  }
  return msg;
}

// --- verifier ----------------------------------------------------------------

Verifier::Verifier(Config cfg)
    : cfg_(std::move(cfg)),
      nonces_(cfg_.policy.max_evidence_age),
      rng_(cfg_.rng_seed ^ 0x76657269664c4bULL) {}

crypto::VerifyKey Verifier::verify_key() const {
  return crypto::ed25519_public(cfg_.key);
}

Result<ScopeToken> Verifier::appraise_and_mint(const GrantRequest& req) {
  AppraisalResult initiator_side =
      appraise(req.initiator_evidence, cfg_.policy, req.cb_hash, req.nonce, nonces_,
               cfg_.attesters, req.now);
  if (!initiator_side.accepted) {
    return Error(initiator_side.reason,
                 "initiator evidence from " + req.initiator_evidence.attester_id);
  }
  AppraisalResult responder_side =
      appraise(req.responder_evidence, cfg_.policy, req.cb_hash, req.nonce, nonces_,
               cfg_.attesters, req.now);
  if (!responder_side.accepted) {
    return Error(responder_side.reason,
                 "responder evidence from " + req.responder_evidence.attester_id);
  }
  // Scope ceiling comes from the initiating side: the token authorizes the
  // source sandbox's traffic, so its platform's policy entry governs.
  return mint(cfg_.key, cfg_.id, initiator_side, req.subject, req.audience,
              req.requested_scope, req.cb_hash, cfg_.token_ttl, req.now, rng_);
}

// --- guard -------------------------------------------------------------------

Guard::Guard(Config cfg, const LogicalClock* clock, Recorder* recorder)
    : cfg_(std::move(cfg)),
      clock_(clock),
      recorder_(recorder),
      channel_cfg_(ChannelConfig::make(cfg_.identity, cfg_.channel_key, cfg_.channel_anchors,
                                       cfg_.rng_seed ^ 0x6368616e6eULL, &counters_)),
      mediation_(cfg_.identity.host_id, cfg_.rng_seed, cfg_.flow_ttl),
      rng_(cfg_.rng_seed ^ 0x6775617264ULL) {
  mediation_.set_bypass_sink([this](const BypassAttempt& a) {
    record(EventKind::BypassAttempt, FlowId{},
           {{"host", a.host_id},
            {"sandbox", a.sandbox_id.empty() ? std::string("-") : a.sandbox_id},
            {"dst", a.dst_ip.str() + ":" + std::to_string(a.dst_port)}},
           Decision::Deny, ErrorCode::BypassBlocked);
  });
}

uint64_t Guard::now() const { return clock_ ? clock_->now() : 0; }

void Guard::record(EventKind kind, const FlowId& flow,
                   std::map<std::string, std::string> attrs, Decision decision,
                   std::optional<ErrorCode> reason, std::optional<TokenId> token) {
  if (recorder_) {
    recorder_->record(now(), flow, kind, std::move(attrs), decision, reason, token);
  }
}

Result<FlowRecord> Guard::sandbox_connect(const SandboxIdentity& src, Ipv4 src_ip, Ipv4 dst_ip,
                                          uint16_t dst_port,
                                          const std::optional<std::string>& dns_name) {
  auto flow = mediation_.intercept_connect(src, src_ip, dst_ip, dst_port, now(), dns_name);
  if (!flow) return flow;
  record(EventKind::SandboxConnect, flow->flow_id,
         {{"host", host_id()},
          {"sandbox", src.sandbox_id},
          {"dst", dst_ip.str() + ":" + std::to_string(dst_port)},
          {"scope", join_scope(flow->requested_scope)}});
  return flow;
}

Status Guard::sandbox_direct_egress(const std::string& sandbox_id, Ipv4 dst_ip,
                                    uint16_t dst_port) {
  return mediation_.block_direct(sandbox_id, dst_ip, dst_port);
}

void Guard::adopt_control(const std::string& peer_host, ChannelHandle handle) {
  control_.insert_or_assign(peer_host, std::move(handle));
}

void Guard::adopt_data(ChannelHandle handle) {
  pending_data_.push_back(PendingData{std::move(handle)});
}

bool Guard::has_control(const std::string& peer_host) const {
  auto it = control_.find(peer_host);
  return it != control_.end() && it->second.established();
}

std::optional<PeerContext> Guard::cached_peer_context(const std::string& peer_host) const {
  auto it = peer_ctx_.find(peer_host);
  if (it == peer_ctx_.end()) return std::nullopt;
  return it->second;
}

void Guard::cache_peer_context(const std::string& peer_host, PeerContext ctx) {
  peer_ctx_.insert_or_assign(peer_host, std::move(ctx));
}

Result<ChannelHandle*> Guard::ensure_control(const std::string& dst_host, Connector& connector) {
  auto it = control_.find(dst_host);
  if (it != control_.end() && it->second.established()) return &it->second;
  auto res = connector.connect(*this, dst_host, ChannelPurpose::Control);
  if (!res) return res.error();
  record(EventKind::HandshakeDone, FlowId{},
         {{"local", host_id()},
          {"peer", dst_host},
          {"purpose", "control"},
          {"resumed", res->resumed ? "1" : "0"}});
  auto [pos, inserted] = control_.insert_or_assign(dst_host, std::move(res->handle));
  (void)inserted;
  return &pos->second;
}

Status Guard::deny_flow(const FlowId& flow_id, ErrorCode reason, const std::string& detail,
                        ChannelHandle* ctrl, bool notify_peer) {
  (void)mediation_.mark_denied(flow_id);
  record(EventKind::FlowDenied, flow_id, {}, Decision::Deny, reason);
  if (notify_peer && ctrl && ctrl->established()) {
    (void)send_ctrl(*ctrl, make_auth_deny(flow_id, reason));
  }
  outbound_.erase(flow_id);
  return Status(reason, detail);
}

Status Guard::open_flow(const FlowId& flow_id, const std::string& dst_host, Verifier& verifier,
                        Connector& connector, const Pump& pump) {
  auto rec = mediation_.flow_by_id(flow_id);
  if (!rec) return Status(ErrorCode::ProtocolError, "unknown flow");
  if (rec->auth_state != AuthState::PendingAuth) {
    return Status(ErrorCode::ProtocolError, "flow is not pending authorization");
  }
  const std::string audience = dst_host + "/guard";

  // (1) Control channel to the destination guard; one full handshake
  // amortized across every flow to that host.
  auto ctrl_res = ensure_control(dst_host, connector);
  if (!ctrl_res) {
    return deny_flow(flow_id, ctrl_res.error().code, ctrl_res.error().detail, nullptr, false);
  }
  ChannelHandle* ctrl = *ctrl_res;

  // (2) Fresh data channel for this flow, resumed off the cached context.
  auto data_res = connector.connect(*this, dst_host, ChannelPurpose::Data);
  if (!data_res) {
    return deny_flow(flow_id, data_res.error().code, data_res.error().detail, ctrl, false);
  }
  record(EventKind::HandshakeDone, flow_id,
         {{"local", host_id()},
          {"peer", dst_host},
          {"purpose", "data"},
          {"resumed", data_res->resumed ? "1" : "0"}});
  OutboundFlow ob;
  ob.data = std::move(data_res->handle);
  ob.dst_host = dst_host;

  // Announce the flow on the data channel so the far side can bind the
  // channel to it before any control traffic references it.
  if (auto st = send_data_frame(ob.data, make_hello(flow_id, host_id())); !st) {
    return deny_flow(flow_id, st.code(), st.error().detail, ctrl, false);
  }
  pump();

  // (3) Fresh nonce; AUTH_INIT rides the control channel.
  Nonce32 nonce = rng_.array<32>();
  BindingContext ctx{1, Bytes(nonce.begin(), nonce.end()), audience, rec->requested_scope};
  if (auto st = send_ctrl(*ctrl, make_auth_init(flow_id, nonce, audience, rec->requested_scope));
      !st) {
    return deny_flow(flow_id, st.code(), st.error().detail, nullptr, false);
  }

  // (4) Binding over the data channel. Both guards compute this
  // independently; only the hash ever leaves the guard.
  auto binding = compute_cb(ob.data, ctx);
  if (!binding) {
    return deny_flow(flow_id, binding.error().code, binding.error().detail, ctrl, true);
  }
  ob.binding = *binding;
  record(EventKind::CbComputed, flow_id,
         {{"side", "initiator"},
          {"cb_hash", binding->cb_hash.hex()},
          {"channel", to_hex(ob.data.channel_id())}});

  pump();  // destination computes its binding and answers with evidence

  // (5) Evidence both ways: ours goes out, the destination's comes back.
  auto ev_mine = attest(cfg_.attester_key, cfg_.attester_id, cfg_.platform_measurement,
                        binding->cb_hash, BytesView(nonce.data(), nonce.size()));
  if (!ev_mine) {
    return deny_flow(flow_id, ev_mine.error().code, ev_mine.error().detail, ctrl, true);
  }
  record(EventKind::EvidenceSent, flow_id,
         {{"attester", cfg_.attester_id}, {"side", "initiator"}});
  if (auto st = send_ctrl(*ctrl, make_auth_evidence(flow_id, *ev_mine)); !st) {
    return deny_flow(flow_id, st.code(), st.error().detail, nullptr, false);
  }
  pump();

  std::optional<Evidence> ev_peer;
  while (ctrl->has_pending()) {
    auto fr = recv_ctrl(*ctrl);
    if (!fr) return deny_flow(flow_id, fr.error().code, fr.error().detail, nullptr, false);
    if (fr->type == static_cast<uint8_t>(FrameType::AuthEvidence)) {
      auto ev_flow = fr->flow_id();
      if (ev_flow && *ev_flow == flow_id) {
        auto ev = fr->evidence();
        if (!ev) return deny_flow(flow_id, ev.error().code, ev.error().detail, ctrl, true);
        ev_peer = std::move(*ev);
      }
    } else if (fr->type == static_cast<uint8_t>(FrameType::AuthDeny)) {
      auto reason = fr->deny_reason();
      return deny_flow(flow_id, reason ? *reason : ErrorCode::ProtocolError, "denied by peer",
                       nullptr, false);
    } else {
      return deny_flow(flow_id, ErrorCode::ProtocolError,
                       std::string("unexpected frame ") + frame_type_name(fr->type), ctrl, true);
    }
  }
  if (!ev_peer) {
    return deny_flow(flow_id, ErrorCode::ProtocolError, "no evidence from peer", ctrl, true);
  }

  // (6) The verifier appraises both evidences against our binding and mints.
  Verifier::GrantRequest req;
  req.initiator_evidence = *ev_mine;
  req.responder_evidence = *ev_peer;
  req.cb_hash = binding->cb_hash;
  req.nonce = nonce;
  req.subject = rec->key.src_sandbox.subject();
  req.audience = audience;
  req.requested_scope = rec->requested_scope;
  req.now = now();
  auto token = verifier.appraise_and_mint(req);
  if (!token) {
    return deny_flow(flow_id, token.error().code, token.error().detail, ctrl, true);
  }
  record(EventKind::EvidenceVerified, flow_id,
         {{"attester", ev_mine->attester_id}, {"side", "initiator"}}, Decision::Allow);
  record(EventKind::EvidenceVerified, flow_id,
         {{"attester", ev_peer->attester_id}, {"side", "responder"}}, Decision::Allow);
  record(EventKind::TokenMinted, flow_id,
         {{"subject", token->subject},
          {"audience", token->audience},
          {"scope", join_scope(token->scope)},
          {"cb_hash", token->cb_hash.hex()},
          {"exp", std::to_string(token->exp)}},
         Decision::Allow, std::nullopt, token->token_id);

  // (7) Grant travels to the destination guard.
  if (auto st = send_ctrl(*ctrl, make_auth_grant(flow_id, *token)); !st) {
    return deny_flow(flow_id, st.code(), st.error().detail, nullptr, false);
  }
  pump();

  // (8) The destination either opened its gate (echo on the data channel) or
  // denied (AUTH_DENY on the control channel).
  while (ctrl->has_pending()) {
    auto fr = recv_ctrl(*ctrl);
    if (!fr) return deny_flow(flow_id, fr.error().code, fr.error().detail, nullptr, false);
    if (fr->type == static_cast<uint8_t>(FrameType::AuthDeny)) {
      auto reason = fr->deny_reason();
      return deny_flow(flow_id, reason ? *reason : ErrorCode::ProtocolError, "denied by peer",
                       nullptr, false);
    }
  }
  bool confirmed = false;
  while (ob.data.has_pending()) {
    auto msg = recv_data(ob.data);
    if (!msg) return deny_flow(flow_id, msg.error().code, msg.error().detail, nullptr, false);
    if (msg->is_frame && msg->frame.type == static_cast<uint8_t>(FrameType::Hello)) {
      confirmed = true;
    }
  }
  if (!confirmed) {
    return deny_flow(flow_id, ErrorCode::ProtocolError, "no gate confirmation", ctrl, true);
  }

  auto marked = mediation_.mark_authorized(flow_id, ob.data.channel_id());
  if (!marked) {
    return deny_flow(flow_id, marked.error().code, marked.error().detail, ctrl, true);
  }

  // (9) Record processing moves to the offload path only now.
  (void)ob.data.enable_offload();
  outbound_.insert_or_assign(flow_id, std::move(ob));
  return Status::ok_status();
}

Status Guard::send_payload(const FlowId& flow_id, BytesView payload, const Pump& pump) {
  auto rec = mediation_.flow_by_id(flow_id);
  if (!rec) return Status(ErrorCode::ProtocolError, "unknown flow");
  if (rec->auth_state != AuthState::Authorized) {
    return Status(ErrorCode::DefaultDeny, "flow is not authorized");
  }
  auto it = outbound_.find(flow_id);
  if (it == outbound_.end()) return Status(ErrorCode::NotEstablished, "no data channel");
  if (auto st = send_data_payload(it->second.data, payload); !st) return st;
  pump();
  return Status::ok_status();
}

Status Guard::close_flow(const FlowId& flow_id, const Pump& pump) {
  auto st = mediation_.mark_closed(flow_id);
  if (!st) return st;
  auto it = outbound_.find(flow_id);
  if (it != outbound_.end()) {
    auto ctrl = control_.find(it->second.dst_host);
    if (ctrl != control_.end() && ctrl->second.established()) {
      (void)send_ctrl(ctrl->second, make_flow_close(flow_id));
    }
    it->second.data.close();
    outbound_.erase(it);
    pump();
  }
  record(EventKind::FlowClosed, flow_id, {});
  return Status::ok_status();
}

Result<Guard::FrameActions> Guard::on_auth_init(const std::string& peer_host,
                                                const ControlFrame& frame) {
  FrameActions actions;
  auto flow = frame.flow_id();
  if (!flow) return flow.error();
  actions.flow = *flow;
  auto it = inbound_.find(*flow);
  if (it == inbound_.end()) {
    return Error(ErrorCode::ProtocolError, "AUTH_INIT for unknown flow");
  }
  if (it->second.binding) {
    return Error(ErrorCode::ProtocolError, "duplicate AUTH_INIT");
  }
  auto nonce = frame.nonce();
  auto audience = frame.audience();
  auto scope = frame.scope();
  if (!nonce) return nonce.error();
  if (!audience) return audience.error();
  if (!scope) return scope.error();

  InboundFlow& fl = it->second;
  fl.control_peer = peer_host;
  fl.nonce = *nonce;
  fl.requested = *scope;

  if (*audience != cfg_.identity.audience()) {
    actions.control_replies.push_back(make_auth_deny(*flow, ErrorCode::AudienceMismatch));
    inbound_.erase(it);
    return actions;
  }

  BindingContext ctx{1, Bytes(nonce->begin(), nonce->end()), *audience, *scope};
  auto binding = compute_cb(fl.data, ctx);
  if (!binding) {
    actions.control_replies.push_back(make_auth_deny(*flow, binding.error().code));
    inbound_.erase(it);
    return actions;
  }
  fl.binding = *binding;
  record(EventKind::CbComputed, *flow,
         {{"side", "responder"},
          {"cb_hash", binding->cb_hash.hex()},
          {"channel", to_hex(fl.data.channel_id())}});

  auto ev = attest(cfg_.attester_key, cfg_.attester_id, cfg_.platform_measurement,
                   binding->cb_hash, BytesView(nonce->data(), nonce->size()));
  if (!ev) {
    actions.control_replies.push_back(make_auth_deny(*flow, ev.error().code));
    inbound_.erase(it);
    return actions;
  }
  record(EventKind::EvidenceSent, *flow,
         {{"attester", cfg_.attester_id}, {"side", "responder"}});
  actions.control_replies.push_back(make_auth_evidence(*flow, *ev));
  return actions;
}

Result<Guard::FrameActions> Guard::on_auth_grant(const std::string& peer_host,
                                                 const ControlFrame& frame) {
  (void)peer_host;
  FrameActions actions;
  auto flow = frame.flow_id();
  if (!flow) return flow.error();
  actions.flow = *flow;
  auto it = inbound_.find(*flow);
  if (it == inbound_.end()) {
    return Error(ErrorCode::ProtocolError, "AUTH_GRANT for unknown flow");
  }
  InboundFlow& fl = it->second;
  if (!fl.binding) {
    return Error(ErrorCode::ProtocolError, "AUTH_GRANT before AUTH_INIT");
  }
  auto token = frame.token();
  if (!token) {
    record(EventKind::TokenRejected, *flow, {{"cb_hash", fl.binding->cb_hash.hex()}},
           Decision::Deny, token.error().code);
    actions.control_replies.push_back(make_auth_deny(*flow, token.error().code));
    return actions;
  }
  if (fl.gate_open && fl.token_id && *fl.token_id == token->token_id) {
    return actions;  // duplicate grant; the gate opened once and stays as-is
  }
  auto st = validate(*token, cfg_.token_anchors, cfg_.identity.audience(),
                     fl.binding->cb_hash, fl.requested, now());
  if (!st) {
    record(EventKind::TokenRejected, *flow, {{"cb_hash", fl.binding->cb_hash.hex()}},
           Decision::Deny, st.code(), token->token_id);
    actions.control_replies.push_back(make_auth_deny(*flow, st.code()));
    return actions;
  }
  record(EventKind::TokenValid, *flow,
         {{"cb_hash", fl.binding->cb_hash.hex()}, {"audience", token->audience}},
         Decision::Allow, std::nullopt, token->token_id);
  fl.gate_open = true;
  fl.token_id = token->token_id;
  record(EventKind::GateOpen, *flow,
         {{"cb_hash", fl.binding->cb_hash.hex()},
          {"channel", to_hex(fl.data.channel_id())}},
         Decision::Allow, std::nullopt, token->token_id);
  (void)fl.data.enable_offload();
  actions.data_replies.push_back(make_hello(*flow, host_id()));
  actions.gate_opened = true;
  return actions;
}

Result<Guard::FrameActions> Guard::handle_frame(const std::string& peer_host,
                                                const ControlFrame& frame) {
  if (frame.version != kFrameVersion) {
    return Error(ErrorCode::ProtocolError, "unsupported frame version");
  }
  switch (static_cast<FrameType>(frame.type)) {
    case FrameType::Hello:
      // Liveness no-op on a control channel; flow binding happens on data
      // channels.
      return FrameActions{};
    case FrameType::AuthInit:
      return on_auth_init(peer_host, frame);
    case FrameType::AuthEvidence: {
      auto flow = frame.flow_id();
      if (!flow) return flow.error();
      auto it = inbound_.find(*flow);
      if (it == inbound_.end()) {
        if (outbound_.count(*flow)) return FrameActions{};  // consumed by open_flow
        return Error(ErrorCode::ProtocolError, "AUTH_EVIDENCE for unknown flow");
      }
      auto ev = frame.evidence();
      if (ev) it->second.peer_evidence = std::move(*ev);
      FrameActions actions;
      actions.flow = *flow;
      return actions;
    }
    case FrameType::AuthGrant:
      return on_auth_grant(peer_host, frame);
    case FrameType::AuthDeny: {
      auto flow = frame.flow_id();
      if (!flow) return flow.error();
      FrameActions actions;
      actions.flow = *flow;
      auto it = inbound_.find(*flow);
      if (it != inbound_.end()) {
        it->second.gate_open = false;
        inbound_.erase(it);
        actions.gate_closed = true;
      }
      return actions;
    }
    case FrameType::FlowClose: {
      auto flow = frame.flow_id();
      if (!flow) return flow.error();
      auto it = inbound_.find(*flow);
      if (it == inbound_.end()) {
        if (outbound_.count(*flow)) return FrameActions{};
        return Error(ErrorCode::ProtocolError, "FLOW_CLOSE for unknown flow");
      }
      it->second.gate_open = false;
      it->second.data.close();
      inbound_.erase(it);
      FrameActions actions;
      actions.flow = *flow;
      actions.gate_closed = true;
      return actions;
    }
  }
  return Error(ErrorCode::ProtocolError,
               std::string("unknown frame type ") + std::to_string(frame.type));
}

void Guard::poison_connection(const std::string& peer_host) {
  auto ctrl = control_.find(peer_host);
  for (auto it = inbound_.begin(); it != inbound_.end();) {
    if (it->second.control_peer == peer_host) {
      if (ctrl != control_.end() && ctrl->second.established()) {
        (void)send_ctrl(ctrl->second, make_auth_deny(it->first, ErrorCode::ProtocolError));
      }
      it->second.gate_open = false;
      it->second.data.close();
      it = inbound_.erase(it);
    } else {
      ++it;
    }
  }
  if (ctrl != control_.end()) {
    ctrl->second.close();
    control_.erase(ctrl);
  }
}

size_t Guard::poll() {
  size_t processed = 0;

  std::vector<std::string> poisoned;
  for (auto& [peer, ch] : control_) {
    while (ch.established() && ch.has_pending()) {
      auto fr = recv_ctrl(ch);
      if (!fr) {
        poisoned.push_back(peer);
        break;
      }
      ++processed;
      auto actions = handle_frame(peer, *fr);
      if (!actions) {
        poisoned.push_back(peer);
        break;
      }
      for (const auto& reply : actions->control_replies) {
        (void)send_ctrl(ch, reply);
      }
      if (!actions->data_replies.empty()) {
        auto fl = inbound_.find(actions->flow);
        if (fl != inbound_.end()) {
          for (const auto& reply : actions->data_replies) {
            (void)send_data_frame(fl->second.data, reply);
          }
        }
      }
    }
  }
  for (const auto& peer : poisoned) poison_connection(peer);

  for (auto it = pending_data_.begin(); it != pending_data_.end();) {
    bool bound = false;
    ChannelHandle& h = it->handle;
    while (h.established() && h.has_pending()) {
      auto msg = recv_data(h);
      if (!msg) break;
      ++processed;
      if (msg->is_frame && msg->frame.type == static_cast<uint8_t>(FrameType::Hello)) {
        auto flow = msg->frame.flow_id();
        if (flow && !inbound_.count(*flow)) {
          InboundFlow fl;
          fl.data = std::move(h);
          auto host = msg->frame.host_id();
          fl.control_peer = host ? *host : std::string();
          inbound_.emplace(*flow, std::move(fl));
          bound = true;
          break;
        }
      }
    }
    it = bound ? pending_data_.erase(it) : std::next(it);
  }

  for (auto& [flow, fl] : inbound_) {
    while (fl.data.established() && fl.data.has_pending()) {
      auto msg = recv_data(fl.data);
      if (!msg) break;
      ++processed;
      if (msg->is_frame) continue;
      if (fl.gate_open) {
        fl.delivered += msg->payload.size();
        if (!fl.saw_plaintext) {
          fl.saw_plaintext = true;
          record(EventKind::FirstPlaintext, flow,
                 {{"bytes", std::to_string(msg->payload.size())}}, Decision::Allow,
                 std::nullopt, fl.token_id);
        }
      } else {
        dropped_bytes_ += msg->payload.size();
      }
    }
  }

  return processed;
}

bool Guard::gate_open(const FlowId& flow_id) const {
  auto it = inbound_.find(flow_id);
  return it != inbound_.end() && it->second.gate_open;
}

uint64_t Guard::delivered_bytes(const FlowId& flow_id) const {
  auto it = inbound_.find(flow_id);
  return it == inbound_.end() ? 0 : it->second.delivered;
}

}  // namespace grimlock
