// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Guard-to-guard authorization. A flow intercepted by the source guard stays
// gated until a verifier has appraised attestation evidence from both guards
// and minted a scope token bound to the data channel the flow will ride.
// Binding is by exported keying material: both ends derive
//
//   cb = Exporter("EXPORTER-grimlock-a2a-v1", encode_context(nonce, audience,
//                 scope), 32)
//
// over the data channel and commit to H(cb) in evidence and token. Anything
// spliced, relayed, or replayed lands on a channel with different exported
// material, so the commitment no longer matches and the gate stays shut.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "grimlock/attestation.hpp"
#include "grimlock/channel.hpp"
#include "grimlock/core.hpp"
#include "grimlock/mediation.hpp"
#include "grimlock/tokens.hpp"
#include "grimlock/trace.hpp"

namespace grimlock {

inline constexpr std::string_view kExporterLabel = "EXPORTER-grimlock-a2a-v1";

/// What the exported keying material is bound to: a fresh nonce, the intended
/// audience, and the requested scope. Both guards must assemble identical
/// bytes or their bindings diverge.
struct BindingContext {
  uint8_t version = 1;
  Bytes nonce;  // exactly 32 bytes
  std::string audience;
  Scope scope;
};

/// u8 version || nonce32 || lp16 audience || canonical scope bytes.
Result<Bytes> encode_context(const BindingContext& ctx);
Result<BindingContext> decode_context(BytesView raw);

struct ChannelBinding {
  Bytes cb;        // 32 bytes of exported keying material; never leaves the guard
  Digest cb_hash;  // H(cb), the public commitment
};

Result<ChannelBinding> compute_cb(const ChannelHandle& channel, const BindingContext& ctx);

// --- control frames ---------------------------------------------------------

inline constexpr std::array<uint8_t, 4> kFrameMagic = {'G', 'R', 'L', 'K'};
inline constexpr uint8_t kFrameVersion = 1;

enum class FrameType : uint8_t {
  Hello = 0x01,
  AuthInit = 0x02,
  AuthEvidence = 0x03,
  AuthGrant = 0x04,
  AuthDeny = 0x05,
  FlowClose = 0x06,
};

const char* frame_type_name(uint8_t type);

enum class TlvType : uint16_t {
  FlowId = 0x0001,     // 16 bytes
  Nonce = 0x0002,      // 32 bytes
  Audience = 0x0003,   // UTF-8
  Scope = 0x0004,      // canonical scope bytes
  Evidence = 0x0005,   // encoded Evidence
  Token = 0x0006,      // encoded ScopeToken
  DenyReason = 0x0007, // u16 ErrorCode
  HostId = 0x0008,     // UTF-8
};

struct Tlv {
  uint16_t type = 0;
  Bytes value;
  bool operator==(const Tlv&) const = default;
};

/// "GRLK" || u8 version || u8 type || u16 flags || u32 payload length || TLVs,
/// each TLV u16 type || u32 length || value. Integers big endian.
struct ControlFrame {
  uint8_t version = kFrameVersion;
  uint8_t type = 0;
  uint16_t flags = 0;
  std::vector<Tlv> tlvs;

  void add(TlvType t, BytesView value);
  void add(TlvType t, std::string_view value);
  const Bytes* find(TlvType t) const;

  // Typed accessors; absent or malformed TLVs come back as errors.
  Result<FlowId> flow_id() const;
  Result<Nonce32> nonce() const;
  Result<std::string> audience() const;
  Result<Scope> scope() const;
  Result<Evidence> evidence() const;
  Result<ScopeToken> token() const;
  std::optional<ErrorCode> deny_reason() const;
  Result<std::string> host_id() const;

  bool operator==(const ControlFrame&) const = default;
};

Bytes frame_encode(const ControlFrame& frame);
/// BadMagic, UnsupportedVersion, and LengthMismatch (header length
/// disagreeing with the buffer, or a TLV running past the payload).
Result<ControlFrame> frame_decode(BytesView raw);

ControlFrame make_hello(const FlowId& flow, std::string_view host);
ControlFrame make_auth_init(const FlowId& flow, const Nonce32& nonce,
                            std::string_view audience, const Scope& scope);
ControlFrame make_auth_evidence(const FlowId& flow, const Evidence& ev);
ControlFrame make_auth_grant(const FlowId& flow, const ScopeToken& token);
ControlFrame make_auth_deny(const FlowId& flow, ErrorCode reason);
ControlFrame make_flow_close(const FlowId& flow);

// Channel record payloads: control channels carry bare frames; data channels
// carry u8 tag || body with tag 1 = frame (HELLO and the gate-open echo) and
// tag 0 = application payload.
Status send_ctrl(ChannelHandle& ch, const ControlFrame& frame);
Result<ControlFrame> recv_ctrl(ChannelHandle& ch);
Status send_data_frame(ChannelHandle& ch, const ControlFrame& frame);
Status send_data_payload(ChannelHandle& ch, BytesView payload);

struct DataMsg {
  bool is_frame = false;
  ControlFrame frame;
  Bytes payload;
};
Result<DataMsg> recv_data(ChannelHandle& ch);

// --- verifier ----------------------------------------------------------------

/// Relying-party side of the protocol: appraises evidence from both guards of
/// a flow against policy and mints the scope token. Holds the replay cache.
class Verifier {
 public:
  struct Config {
    std::string id;
    crypto::SigningKey key{};
    AppraisalPolicy policy;
    AttesterKeys attesters;
    uint64_t token_ttl = kDefaultTokenTtl;
    uint64_t rng_seed = 0;
  };

  explicit Verifier(Config cfg);

  const std::string& id() const { return cfg_.id; }
  crypto::VerifyKey verify_key() const;
  const AppraisalPolicy& policy() const { return cfg_.policy; }
  uint64_t token_ttl() const { return cfg_.token_ttl; }

  struct GrantRequest {
    Evidence initiator_evidence;
    Evidence responder_evidence;
    Digest cb_hash;  // the submitting guard's locally computed binding
    Nonce32 nonce{};
    std::string subject;
    std::string audience;
    Scope requested_scope;
    uint64_t now = 0;
  };

  /// Appraises both evidences against the submitted binding and nonce, then
  /// mints. The error code is the first appraisal failure (BadSignature,
  /// NonceMismatch, ReplayDetected, BindingMismatch, MeasurementRejected) or
  /// the mint failure (EmptyGrant). The granted scope comes from the
  /// initiator-side measurement's policy entry.
  Result<ScopeToken> appraise_and_mint(const GrantRequest& req);

 private:
  Config cfg_;
  NonceCache nonces_;
  DetRng rng_;
};

// --- guard -------------------------------------------------------------------

class Guard;

enum class ChannelPurpose : uint8_t { Control, Data };

struct ConnectResult {
  ChannelHandle handle;
  bool resumed = false;
};

/// Network seam. An implementation runs the handshake between the initiating
/// guard and whatever endpoint the scenario routes dst_host to, delivers the
/// far handle to that endpoint, and returns the near one. Adversaries divert
/// traffic here; they cannot reach into guards.
class Connector {
 public:
  virtual ~Connector() = default;
  virtual Result<ConnectResult> connect(Guard& initiator, const std::string& dst_host,
                                        ChannelPurpose purpose) = 0;
};

/// Runs the peer side until quiescent. The scenario supplies it; for honest
/// runs it just polls the destination guard.
using Pump = std::function<void()>;

/// Per-host enforcement point: owns the mediation table, the control channel
/// per peer guard, one data channel per flow, and the release gates. A guard
/// never surfaces plaintext for a flow whose gate has not opened on a
/// validated, channel-bound token.
class Guard {
 public:
  struct Config {
    HostIdentity identity;
    crypto::SigningKey channel_key{};
    std::set<crypto::VerifyKey> channel_anchors;
    std::string attester_id;
    crypto::SigningKey attester_key{};
    Digest platform_measurement;
    TrustAnchors token_anchors;
    uint64_t rng_seed = 0;
    uint64_t flow_ttl = kDefaultFlowTtl;
  };

  Guard(Config cfg, const LogicalClock* clock, Recorder* recorder);
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;

  const HostIdentity& identity() const { return cfg_.identity; }
  const std::string& host_id() const { return cfg_.identity.host_id; }
  MediationPoint& mediation() { return mediation_; }
  AuthCounters& counters() { return counters_; }
  ChannelConfig& channel_config() { return channel_cfg_; }
  uint64_t now() const;

  // Sandbox-facing entry points. Connects are intercepted into gated flows;
  // direct egress attempts are unconditionally blocked and recorded.
  Result<FlowRecord> sandbox_connect(const SandboxIdentity& src, Ipv4 src_ip, Ipv4 dst_ip,
                                     uint16_t dst_port,
                                     const std::optional<std::string>& dns_name = std::nullopt);
  Status sandbox_direct_egress(const std::string& sandbox_id, Ipv4 dst_ip, uint16_t dst_port);

  // Channel adoption, called by the connector for the responder side.
  void adopt_control(const std::string& peer_host, ChannelHandle handle);
  void adopt_data(ChannelHandle handle);
  bool has_control(const std::string& peer_host) const;
  std::optional<PeerContext> cached_peer_context(const std::string& peer_host) const;
  void cache_peer_context(const std::string& peer_host, PeerContext ctx);

  /// Initiator-side orchestration for one intercepted flow. On success the
  /// flow is AUTHORIZED, the destination gate is open, and the data channel
  /// is offloaded; on failure the flow is DENIED with the returned reason and
  /// the destination gate never opened.
  Status open_flow(const FlowId& flow_id, const std::string& dst_host, Verifier& verifier,
                   Connector& connector, const Pump& pump);

  /// Sends sandbox payload over an authorized flow's data channel.
  Status send_payload(const FlowId& flow_id, BytesView payload, const Pump& pump);
  /// Closes an authorized or denied flow and tells the peer to drop its gate.
  Status close_flow(const FlowId& flow_id, const Pump& pump);

  /// Responder-side state machine: one frame in, replies and gate transitions
  /// out. A ProtocolError return poisons the whole connection; poll() then
  /// denies every flow riding it.
  struct FrameActions {
    std::vector<ControlFrame> control_replies;
    std::vector<ControlFrame> data_replies;
    FlowId flow{};
    bool gate_opened = false;
    bool gate_closed = false;
  };
  Result<FrameActions> handle_frame(const std::string& peer_host, const ControlFrame& frame);

  /// Drains every channel: control frames through handle_frame, data
  /// channels for HELLO binding and payload delivery. Returns messages
  /// processed.
  size_t poll();

  // Gate and delivery introspection.
  bool gate_open(const FlowId& flow_id) const;
  uint64_t delivered_bytes(const FlowId& flow_id) const;
  uint64_t dropped_bytes() const { return dropped_bytes_; }

 private:
  struct OutboundFlow {
    ChannelHandle data;
    std::string dst_host;
    std::optional<ChannelBinding> binding;
  };
  struct InboundFlow {
    ChannelHandle data;
    std::string control_peer;
    Scope requested;
    Nonce32 nonce{};
    std::optional<ChannelBinding> binding;
    std::optional<Evidence> peer_evidence;
    bool gate_open = false;
    bool saw_plaintext = false;
    uint64_t delivered = 0;
    std::optional<TokenId> token_id;
  };
  struct PendingData {
    ChannelHandle handle;
  };

  Result<ChannelHandle*> ensure_control(const std::string& dst_host, Connector& connector);
  Status deny_flow(const FlowId& flow_id, ErrorCode reason, const std::string& detail,
                   ChannelHandle* ctrl, bool notify_peer);
  void poison_connection(const std::string& peer_host);
  Result<FrameActions> on_auth_init(const std::string& peer_host, const ControlFrame& frame);
  Result<FrameActions> on_auth_grant(const std::string& peer_host, const ControlFrame& frame);
  void record(EventKind kind, const FlowId& flow, std::map<std::string, std::string> attrs,
              Decision decision = Decision::Info,
              std::optional<ErrorCode> reason = std::nullopt,
              std::optional<TokenId> token = std::nullopt);

  Config cfg_;
  const LogicalClock* clock_;
  Recorder* recorder_;
  AuthCounters counters_;
  ChannelConfig channel_cfg_;
  MediationPoint mediation_;
  DetRng rng_;

  std::map<std::string, ChannelHandle> control_;
  std::map<std::string, PeerContext> peer_ctx_;
  std::vector<PendingData> pending_data_;
  std::map<FlowId, OutboundFlow> outbound_;
  std::map<FlowId, InboundFlow> inbound_;
  uint64_t dropped_bytes_ = 0;
};

}  // namespace grimlock
