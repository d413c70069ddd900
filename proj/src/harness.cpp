// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/harness.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <utility>

namespace grimlock {

namespace {

std::string host_name(size_t i) { return "host" + std::to_string(i); }
std::string sandbox_name(size_t j) { return "sb" + std::to_string(j); }
Ipv4 host_ip(size_t i) { return Ipv4::of(10, 0, static_cast<uint8_t>(i), 1); }
Ipv4 sandbox_ip(size_t i, size_t j) {
  return Ipv4::of(10, 0, static_cast<uint8_t>(i), static_cast<uint8_t>(10 + j));
}

/// Record layout on the simulated channel: u64 seq || u32 len || payload ||
/// 32-byte MAC. A wire observer sees payloads in the clear, which is exactly
/// the capability the replay adversary gets.
std::optional<Bytes> record_payload(const Bytes& record) {
  if (record.size() < 44) return std::nullopt;
  uint32_t len = (uint32_t(record[8]) << 24) | (uint32_t(record[9]) << 16) |
                 (uint32_t(record[10]) << 8) | uint32_t(record[11]);
  if (record.size() != 12 + size_t(len) + 32) return std::nullopt;
  return Bytes(record.begin() + 12, record.begin() + 12 + len);
}

class HonestConnector : public Connector {
 public:
  HonestConnector(std::map<std::string, Guard*>* guards, LogicalClock* clock)
      : guards_(guards), clock_(clock) {}

  Result<ConnectResult> connect(Guard& initiator, const std::string& dst_host,
                                ChannelPurpose purpose) override {
    auto it = guards_->find(dst_host);
    if (it == guards_->end()) {
      return Error(ErrorCode::ScenarioConfigError, "no such host " + dst_host);
    }
    Guard* dst = it->second;
    auto transport = std::make_shared<InMemoryTransport>();
    Tap capture = tap(transport);

    auto i_ctx = initiator.cached_peer_context(dst_host);
    auto r_ctx = dst->cached_peer_context(initiator.host_id());
    if (i_ctx && r_ctx) {
      auto pair = resume(initiator.channel_config(), *i_ctx, dst->channel_config(), *r_ctx,
                         transport);
      if (pair) {
        deliver(dst, initiator.host_id(), purpose, std::move(pair->responder));
        return ConnectResult{std::move(pair->initiator), true};
      }
      // Stale contexts fall back to a full handshake below.
    }
    auto pair = establish(initiator.channel_config(), dst->channel_config(), transport);
    if (!pair) return pair.error();
    uint64_t t = clock_ ? clock_->now() : 0;
    if (auto pc = pair->initiator.peer_context(t)) {
      initiator.cache_peer_context(dst_host, *pc);
    }
    if (auto pc = pair->responder.peer_context(t)) {
      dst->cache_peer_context(initiator.host_id(), *pc);
    }
    if (purpose == ChannelPurpose::Control) {
      taps_.insert_or_assign({initiator.host_id(), dst_host}, capture);
    }
    deliver(dst, initiator.host_id(), purpose, std::move(pair->responder));
    return ConnectResult{std::move(pair->initiator), false};
  }

  const Tap* control_tap(const std::string& src, const std::string& dst) const {
    auto it = taps_.find({src, dst});
    if (it != taps_.end()) return &it->second;
    it = taps_.find({dst, src});
    if (it != taps_.end()) return &it->second;
    return nullptr;
  }

 private:
  static void deliver(Guard* dst, const std::string& peer, ChannelPurpose purpose,
                      ChannelHandle handle) {
    if (purpose == ChannelPurpose::Control) {
      dst->adopt_control(peer, std::move(handle));
    } else {
      dst->adopt_data(std::move(handle));
    }
  }

  std::map<std::string, Guard*>* guards_;
  LogicalClock* clock_;
  std::map<std::pair<std::string, std::string>, Tap> taps_;
};

/// Interception without trusted credentials: answers every connect with a key
/// outside the anchor set while asserting the target's name.
class MitmConnector : public Connector {
 public:
  explicit MitmConnector(ChannelConfig rogue) : rogue_(std::move(rogue)) {}

  Result<ConnectResult> connect(Guard& initiator, const std::string& dst_host,
                                ChannelPurpose purpose) override {
    (void)purpose;
    auto transport = std::make_shared<InMemoryTransport>();
    ChannelConfig masked = rogue_;
    masked.local_identity.host_id = dst_host;
    auto pair = establish(initiator.channel_config(), masked, transport);
    if (!pair) return pair.error();
    // If this ever succeeds the anchor check is broken; hand the channel back
    // so the scenario fails loudly instead of masking the defect.
    return ConnectResult{std::move(pair->initiator), false};
  }

 private:
  ChannelConfig rogue_;
};

/// Credentialed middlebox: terminates the initiator's channel with an
/// anchored key under the destination's name, opens its own channels to the
/// real destination, and shuttles frames between the two legs.
class RelayConnector : public Connector {
 public:
  RelayConnector(std::map<std::string, Guard*>* guards, ChannelConfig masked,
                 ChannelConfig honest)
      : guards_(guards), masked_(std::move(masked)), honest_(std::move(honest)) {}

  Result<ConnectResult> connect(Guard& initiator, const std::string& dst_host,
                                ChannelPurpose purpose) override {
    auto it = guards_->find(dst_host);
    if (it == guards_->end()) {
      return Error(ErrorCode::ScenarioConfigError, "no such host " + dst_host);
    }
    Guard* dst = it->second;

    auto ta = std::make_shared<InMemoryTransport>();
    ChannelConfig masked = masked_;
    masked.local_identity.host_id = dst_host;
    auto leg_a = establish(initiator.channel_config(), masked, ta);
    if (!leg_a) return leg_a.error();

    auto tb = std::make_shared<InMemoryTransport>();
    auto leg_b = establish(honest_, dst->channel_config(), tb);
    if (!leg_b) return leg_b.error();

    if (purpose == ChannelPurpose::Control) {
      dst->adopt_control(honest_.local_identity.host_id, std::move(leg_b->responder));
      ctrl_legs_[{initiator.host_id(), dst_host}] =
          LegPair{std::move(leg_a->responder), std::move(leg_b->initiator)};
    } else {
      dst->adopt_data(std::move(leg_b->responder));
      data_legs_.push_back(LegPair{std::move(leg_a->responder), std::move(leg_b->initiator)});
    }
    return ConnectResult{std::move(leg_a->initiator), false};
  }

  size_t forward() {
    size_t moved = 0;
    auto fwd_ctrl = [&moved](ChannelHandle& from, ChannelHandle& to) {
      while (from.established() && from.has_pending()) {
        auto frame = recv_ctrl(from);
        if (!frame) break;
        (void)send_ctrl(to, *frame);
        ++moved;
      }
    };
    for (auto& [key, leg] : ctrl_legs_) {
      fwd_ctrl(leg.a, leg.b);
      fwd_ctrl(leg.b, leg.a);
    }
    auto fwd_data = [&moved](ChannelHandle& from, ChannelHandle& to) {
      while (from.established() && from.has_pending()) {
        auto msg = recv_data(from);
        if (!msg) break;
        if (msg->is_frame) {
          (void)send_data_frame(to, msg->frame);
        } else {
          (void)send_data_payload(to, BytesView(msg->payload));
        }
        ++moved;
      }
    };
    for (auto& leg : data_legs_) {
      fwd_data(leg.a, leg.b);
      fwd_data(leg.b, leg.a);
    }
    return moved;
  }

 private:
  struct LegPair {
    ChannelHandle a;  // relay's end facing the initiator
    ChannelHandle b;  // relay's end facing the destination
  };

  std::map<std::string, Guard*>* guards_;
  ChannelConfig masked_;
  ChannelConfig honest_;
  std::map<std::pair<std::string, std::string>, LegPair> ctrl_legs_;
  std::vector<LegPair> data_legs_;
};

struct CapturedExchange {
  Nonce32 nonce{};
  std::string audience;
  Scope scope;
  std::optional<Evidence> initiator_evidence;
  std::optional<Evidence> responder_evidence;
  std::optional<ScopeToken> token;
};

std::optional<CapturedExchange> capture_exchange(const Tap& capture, const FlowId& flow,
                                                 const std::string& initiator_attester) {
  CapturedExchange out;
  bool saw_init = false;
  for (const auto& tf : capture.frames()) {
    auto payload = record_payload(tf.data);
    if (!payload) continue;
    auto frame = frame_decode(*payload);
    if (!frame) continue;
    auto fid = frame->flow_id();
    if (!fid || *fid != flow) continue;
    if (frame->type == static_cast<uint8_t>(FrameType::AuthInit)) {
      auto nonce = frame->nonce();
      auto audience = frame->audience();
      auto scope = frame->scope();
      if (nonce && audience && scope) {
        out.nonce = *nonce;
        out.audience = *audience;
        out.scope = *scope;
        saw_init = true;
      }
    } else if (frame->type == static_cast<uint8_t>(FrameType::AuthEvidence)) {
      auto ev = frame->evidence();
      if (ev) {
        if (ev->attester_id == initiator_attester) {
          out.initiator_evidence = std::move(*ev);
        } else {
          out.responder_evidence = std::move(*ev);
        }
      }
    } else if (frame->type == static_cast<uint8_t>(FrameType::AuthGrant)) {
      auto token = frame->token();
      if (token) out.token = std::move(*token);
    }
  }
  if (!saw_init || !out.initiator_evidence || !out.responder_evidence || !out.token) {
    return std::nullopt;
  }
  return out;
}

struct Sim {
  ScenarioSpec spec;
  LogicalClock clock;
  Recorder recorder;
  std::vector<std::unique_ptr<Guard>> guards;
  std::map<std::string, Guard*> by_host;
  std::vector<std::vector<SandboxIdentity>> sandboxes;
  std::unique_ptr<Verifier> verifier;
  Scope policy_max;
  crypto::KeyPair mallory_keys;
  std::optional<ChannelConfig> mallory_cfg;
  DetRng script{0};
};

Status build_sim(const ScenarioSpec& spec, Sim& sim) {
  sim.spec = spec;
  sim.clock.set(1000);
  DetRng master(spec.seed);

  std::vector<crypto::KeyPair> guard_keys;
  std::vector<crypto::KeyPair> attester_keys;
  for (size_t i = 0; i < spec.hosts; ++i) {
    guard_keys.push_back(crypto::ed25519_keypair(master.array<32>()));
    attester_keys.push_back(crypto::ed25519_keypair(master.array<32>()));
  }
  crypto::KeyPair verifier_keys = crypto::ed25519_keypair(master.array<32>());
  sim.mallory_keys = crypto::ed25519_keypair(master.array<32>());

  std::set<crypto::VerifyKey> anchors;
  for (const auto& kp : guard_keys) anchors.insert(kp.verify);
  if (spec.adversary == Adversary::Replay || spec.adversary == Adversary::Relay) {
    // The insider's channel key is trusted; its attester is not registered
    // and its platform is not an allowed measurement.
    anchors.insert(sim.mallory_keys.verify);
  }

  sim.policy_max = Scope({"read:feed", "send:mail"});
  AppraisalPolicy policy;
  AttesterKeys attesters;
  for (size_t i = 0; i < spec.hosts; ++i) {
    Digest meas = hash("platform:" + host_name(i));
    policy.allowed_measurements.insert(meas);
    policy.grantable_scopes[meas] = sim.policy_max;
    attesters["tee-" + host_name(i)] = attester_keys[i].verify;
  }

  TrustAnchors token_anchors;
  token_anchors.issuer_keys["verifier-0"] = verifier_keys.verify;

  for (size_t i = 0; i < spec.hosts; ++i) {
    Guard::Config gc;
    gc.identity = HostIdentity{host_name(i), guard_keys[i].verify};
    gc.channel_key = guard_keys[i].signing;
    gc.channel_anchors = anchors;
    gc.attester_id = "tee-" + host_name(i);
    gc.attester_key = attester_keys[i].signing;
    gc.platform_measurement = hash("platform:" + host_name(i));
    gc.token_anchors = token_anchors;
    gc.rng_seed = master.next_u64();
    sim.guards.push_back(std::make_unique<Guard>(std::move(gc), &sim.clock, &sim.recorder));
    sim.by_host[host_name(i)] = sim.guards.back().get();
  }

  sim.sandboxes.resize(spec.hosts);
  for (size_t i = 0; i < spec.hosts; ++i) {
    for (size_t j = 0; j < spec.sandboxes_per_host; ++j) {
      std::vector<ScopeRule> rules;
      if (spec.adversary == Adversary::ScopeEscalation) {
        if (j % 2 == 0) {
          rules = {ScopeRule{"*:443", Scope({"admin:all"})}};
        } else {
          rules = {ScopeRule{"*:443", Scope({"admin:all", "send:mail"})}};
        }
      } else {
        rules = {ScopeRule{"*:443", Scope({"send:mail"})}};
      }
      auto manifest = make_manifest(host_name(i), sandbox_name(j), std::move(rules));
      if (!manifest) return Status(manifest.error().code, manifest.error().detail);
      auto reg = sim.guards[i]->mediation().register_sandbox(*manifest);
      if (!reg) return Status(reg.error().code, reg.error().detail);
      sim.sandboxes[i].push_back(manifest->identity);
    }
  }

  Verifier::Config vc;
  vc.id = "verifier-0";
  vc.key = verifier_keys.signing;
  vc.policy = std::move(policy);
  vc.attesters = std::move(attesters);
  vc.token_ttl = spec.token_ttl;
  vc.rng_seed = master.next_u64();
  sim.verifier = std::make_unique<Verifier>(std::move(vc));

  if (spec.adversary == Adversary::Replay) {
    sim.mallory_cfg = ChannelConfig::make(HostIdentity{"mallory", sim.mallory_keys.verify},
                                          sim.mallory_keys.signing, anchors, master.next_u64());
  }

  sim.script = DetRng(master.next_u64());
  return Status::ok_status();
}

/// Drives the insider token-replay: fresh channels to the destination guard,
/// a fresh flow and binding, then the captured token presented as the grant.
ErrorCode replay_token_attack(Sim& sim, Guard& dst, const CapturedExchange& captured,
                              const FlowId& fake_flow) {
  auto drain = [&dst] {
    while (dst.poll() > 0) {
    }
  };
  auto tc = std::make_shared<InMemoryTransport>();
  auto ctrl = establish(*sim.mallory_cfg, dst.channel_config(), tc);
  if (!ctrl) return ctrl.error().code;
  dst.adopt_control("mallory", std::move(ctrl->responder));
  auto td = std::make_shared<InMemoryTransport>();
  auto data = establish(*sim.mallory_cfg, dst.channel_config(), td);
  if (!data) return data.error().code;
  dst.adopt_data(std::move(data->responder));

  (void)send_data_frame(data->initiator, make_hello(fake_flow, "mallory"));
  drain();
  Nonce32 nonce = sim.script.array<32>();
  (void)send_ctrl(ctrl->initiator,
                  make_auth_init(fake_flow, nonce, captured.audience, captured.scope));
  drain();
  while (ctrl->initiator.has_pending()) {
    (void)recv_ctrl(ctrl->initiator);  // destination evidence; the attacker skips appraisal
  }
  (void)send_ctrl(ctrl->initiator, make_auth_grant(fake_flow, *captured.token));
  drain();
  ErrorCode reason = ErrorCode::ProtocolError;
  while (ctrl->initiator.has_pending()) {
    auto fr = recv_ctrl(ctrl->initiator);
    if (fr && fr->type == static_cast<uint8_t>(FrameType::AuthDeny)) {
      if (auto r = fr->deny_reason()) reason = *r;
    }
  }
  if (dst.gate_open(fake_flow)) reason = ErrorCode::ProtocolError;
  return reason;
}

void check_expectations(const ScenarioSpec& spec, ScenarioResult& result) {
  auto fail = [&result](std::string msg) { result.failures.push_back(std::move(msg)); };
  auto only_reason = [&](std::initializer_list<ErrorCode> allowed) {
    for (const auto& [code, count] : result.deny_reasons) {
      if (std::find(allowed.begin(), allowed.end(), code) == allowed.end()) {
        fail(std::string("unexpected deny reason ") + error_name(code) + " x" +
             std::to_string(count));
      }
    }
  };
  size_t gate_opens = 0, first_plaintexts = 0, bypass_events = 0;
  for (const auto& ev : result.trace) {
    if (ev.kind == EventKind::GateOpen) ++gate_opens;
    if (ev.kind == EventKind::FirstPlaintext) ++first_plaintexts;
    if (ev.kind == EventKind::BypassAttempt) ++bypass_events;
  }

  switch (spec.adversary) {
    case Adversary::None:
    case Adversary::Bypass:
      if (result.flows_authorized != spec.flows) {
        fail("expected every flow authorized, got " + std::to_string(result.flows_authorized) +
             "/" + std::to_string(spec.flows));
      }
      if (result.flows_denied != 0) fail("honest flows were denied");
      if (result.bytes_delivered != spec.flows * spec.payload_bytes) {
        fail("delivered byte count mismatch: " + std::to_string(result.bytes_delivered));
      }
      if (spec.adversary == Adversary::Bypass) {
        if (result.bypass_attempts != spec.bypass_attempts) {
          fail("bypass attempts not all executed");
        }
        if (result.bypass_blocked != spec.bypass_attempts) {
          fail("bypass attempt was not blocked");
        }
        if (bypass_events != spec.bypass_attempts) {
          fail("bypass attempts missing from trace");
        }
      }
      break;
    case Adversary::Replay:
      if (result.flows_authorized != spec.flows) fail("carrier flows not authorized");
      if (result.attacks_attempted != 2 * spec.flows) fail("replay attacks not all executed");
      only_reason({ErrorCode::ReplayDetected, ErrorCode::BindingMismatch});
      if (result.deny_reasons[ErrorCode::ReplayDetected] != spec.flows) {
        fail("evidence replays not all detected as replays");
      }
      if (result.deny_reasons[ErrorCode::BindingMismatch] != spec.flows) {
        fail("token replays not all rejected on binding");
      }
      if (gate_opens != spec.flows) fail("a replay opened a gate");
      break;
    case Adversary::Relay:
      if (result.flows_denied != spec.flows) fail("relayed flow completed");
      only_reason({ErrorCode::BindingMismatch});
      if (gate_opens != 0) fail("a relayed flow opened a gate");
      break;
    case Adversary::Mitm:
      if (result.flows_denied != spec.flows) fail("intercepted flow completed");
      only_reason({ErrorCode::HandshakeAuthFailure});
      if (gate_opens != 0) fail("an intercepted flow opened a gate");
      break;
    case Adversary::ScopeEscalation:
      if (result.flows_denied != spec.flows) fail("escalated flow completed");
      only_reason({ErrorCode::EmptyGrant, ErrorCode::ScopeViolation});
      if (first_plaintexts != 0) fail("plaintext crossed on an escalated flow");
      break;
    case Adversary::ExpiredToken:
      if (result.flows_denied != spec.flows) fail("stale-grant flow completed");
      only_reason({ErrorCode::Expired});
      if (gate_opens != 0) fail("an expired grant opened a gate");
      break;
  }
}

}  // namespace

const char* adversary_name(Adversary a) {
  switch (a) {
    case Adversary::None: return "none";
    case Adversary::Bypass: return "bypass";
    case Adversary::Replay: return "replay";
    case Adversary::Relay: return "relay";
    case Adversary::Mitm: return "mitm";
    case Adversary::ScopeEscalation: return "scope_escalation";
    case Adversary::ExpiredToken: return "expired_token";
  }
  return "unknown";
}

Status ScenarioSpec::validate() const {
  if (hosts < 2 || hosts > 32) {
    return Status(ErrorCode::ScenarioConfigError, "hosts must be in [2, 32]");
  }
  if (sandboxes_per_host < 1 || sandboxes_per_host > kMaxSandboxesPerHost) {
    return Status(ErrorCode::ScenarioConfigError, "at most 16 sandboxes per host");
  }
  if (flows < 1) return Status(ErrorCode::ScenarioConfigError, "at least one flow");
  if (payload_bytes < 1) {
    return Status(ErrorCode::ScenarioConfigError, "payload must be non-empty");
  }
  if (token_ttl < 1) return Status(ErrorCode::ScenarioConfigError, "token ttl must be positive");
  return Status::ok_status();
}

Result<ScenarioSpec> ScenarioSpec::preset(std::string_view name, uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.name = std::string(name);
  if (name == "honest") {
    spec.adversary = Adversary::None;
    spec.flows = 6;
  } else if (name == "bypass") {
    spec.adversary = Adversary::Bypass;
    spec.hosts = 4;
    spec.flows = 50;
    spec.bypass_attempts = 20;
  } else if (name == "replay") {
    spec.adversary = Adversary::Replay;
    spec.flows = 4;
  } else if (name == "relay") {
    spec.adversary = Adversary::Relay;
    spec.flows = 4;
  } else if (name == "mitm") {
    spec.adversary = Adversary::Mitm;
    spec.flows = 4;
  } else if (name == "scope_escalation") {
    spec.adversary = Adversary::ScopeEscalation;
    spec.flows = 4;
  } else if (name == "expired_token") {
    spec.adversary = Adversary::ExpiredToken;
    spec.flows = 4;
  } else {
    return Error(ErrorCode::ScenarioConfigError, "unknown scenario " + std::string(name));
  }
  return spec;
}

std::vector<std::string> ScenarioSpec::preset_names() {
  return {"honest", "bypass", "replay", "relay", "mitm", "scope_escalation", "expired_token"};
}

TraceCheckResult assert_trace_properties(const std::vector<Event>& trace,
                                         const Scope& policy_max) {
  TraceCheckResult out;
  auto fail = [&out](std::string msg) {
    out.ok = false;
    out.violations.push_back(std::move(msg));
  };
  std::set<FlowId> connected;
  std::set<FlowId> gate_opened;
  std::map<FlowId, std::set<std::string>> validated_cb;
  for (const auto& ev : trace) {
    const std::string at = " at seq=" + std::to_string(ev.seq);
    switch (ev.kind) {
      case EventKind::SandboxConnect:
        connected.insert(ev.flow);
        break;
      case EventKind::TokenValid: {
        auto it = ev.attrs.find("cb_hash");
        if (it != ev.attrs.end()) validated_cb[ev.flow].insert(it->second);
        break;
      }
      case EventKind::GateOpen: {
        auto it = ev.attrs.find("cb_hash");
        if (it == ev.attrs.end()) {
          fail("(b) GATE_OPEN without cb_hash" + at);
        } else if (!validated_cb[ev.flow].count(it->second)) {
          fail("(b) GATE_OPEN without prior TOKEN_VALID for same binding" + at);
        }
        gate_opened.insert(ev.flow);
        break;
      }
      case EventKind::FirstPlaintext:
        if (!gate_opened.count(ev.flow)) {
          fail("(a) FIRST_PLAINTEXT before GATE_OPEN" + at);
        }
        if (!connected.count(ev.flow)) {
          fail("(c) FIRST_PLAINTEXT on a flow that was never intercepted" + at);
        }
        break;
      case EventKind::TokenMinted: {
        auto it = ev.attrs.find("scope");
        if (it == ev.attrs.end()) {
          fail("(d) TOKEN_MINTED without scope" + at);
          break;
        }
        if (it->second == "-") break;
        size_t pos = 0;
        const std::string& joined = it->second;
        while (pos <= joined.size()) {
          size_t comma = joined.find(',', pos);
          if (comma == std::string::npos) comma = joined.size();
          std::string entry = joined.substr(pos, comma - pos);
          if (!entry.empty() && !policy_max.contains(entry)) {
            fail("(d) minted scope '" + entry + "' exceeds policy" + at);
          }
          pos = comma + 1;
        }
        break;
      }
      default:
        break;
    }
  }
  return out;
}

Result<ScenarioResult> run_scenario(const ScenarioSpec& spec) {
  if (auto st = spec.validate(); !st) return st.error();

  Sim sim;
  if (auto st = build_sim(spec, sim); !st) return st.error();

  ScenarioResult result;
  result.spec = spec;

  HonestConnector honest(&sim.by_host, &sim.clock);
  std::unique_ptr<MitmConnector> mitm;
  std::unique_ptr<RelayConnector> relay;
  Connector* connector = &honest;
  if (spec.adversary == Adversary::Mitm) {
    DetRng rogue_rng(spec.seed ^ 0x726f677565ULL);
    auto rogue_keys = crypto::ed25519_keypair(rogue_rng.array<32>());
    std::set<crypto::VerifyKey> rogue_anchors;
    for (const auto& [host, guard] : sim.by_host) {
      rogue_anchors.insert(guard->identity().guard_pubkey);
    }
    mitm = std::make_unique<MitmConnector>(
        ChannelConfig::make(HostIdentity{"interceptor", rogue_keys.verify}, rogue_keys.signing,
                            rogue_anchors, rogue_rng.next_u64()));
    connector = mitm.get();
  } else if (spec.adversary == Adversary::Relay) {
    std::set<crypto::VerifyKey> relay_anchors;
    for (const auto& [host, guard] : sim.by_host) {
      relay_anchors.insert(guard->identity().guard_pubkey);
    }
    DetRng relay_rng(spec.seed ^ 0x72656c6179ULL);
    ChannelConfig masked =
        ChannelConfig::make(HostIdentity{"masked", sim.mallory_keys.verify},
                            sim.mallory_keys.signing, relay_anchors, relay_rng.next_u64());
    ChannelConfig plain =
        ChannelConfig::make(HostIdentity{"relay0", sim.mallory_keys.verify},
                            sim.mallory_keys.signing, relay_anchors, relay_rng.next_u64());
    relay = std::make_unique<RelayConnector>(&sim.by_host, std::move(masked), std::move(plain));
    connector = relay.get();
  }

  auto pump_for = [&](Guard* initiator) -> Pump {
    return [&, initiator] {
      if (spec.adversary == Adversary::ExpiredToken) {
        sim.clock.advance(spec.token_ttl + kDefaultClockSkew + 1);
      }
      bool more = true;
      while (more) {
        more = false;
        if (relay) more = relay->forward() > 0;
        for (auto& g : sim.guards) {
          if (g.get() != initiator) more = g->poll() > 0 || more;
        }
      }
    };
  };

  const size_t iterations = std::max(spec.flows, spec.bypass_attempts);
  for (size_t it = 0; it < iterations; ++it) {
    sim.clock.advance(1);

    if (it < spec.flows) {
      size_t src = sim.script.next_below(spec.hosts);
      size_t dst = (src + 1 + sim.script.next_below(spec.hosts - 1)) % spec.hosts;
      size_t sb = sim.script.next_below(spec.sandboxes_per_host);
      Guard* g = sim.guards[src].get();
      Guard* d = sim.guards[dst].get();
      const auto& ident = sim.sandboxes[src][sb];

      auto flow = g->sandbox_connect(ident, sandbox_ip(src, sb), host_ip(dst), 443,
                                     "svc." + host_name(dst));
      if (!flow) {
        result.failures.push_back("connect failed: " + flow.error().to_string());
        continue;
      }
      ++result.flows_attempted;
      Pump pump = pump_for(g);
      auto st = g->open_flow(flow->flow_id, host_name(dst), *sim.verifier, *connector, pump);
      if (st.ok()) {
        ++result.flows_authorized;
        Bytes payload = sim.script.bytes(spec.payload_bytes);
        if (auto sp = g->send_payload(flow->flow_id, payload, pump); !sp) {
          result.failures.push_back("payload send failed: " + sp.error().to_string());
        }
        result.bytes_delivered += d->delivered_bytes(flow->flow_id);

        if (spec.adversary == Adversary::Replay) {
          const Tap* capture = honest.control_tap(host_name(src), host_name(dst));
          auto exchange =
              capture ? capture_exchange(*capture, flow->flow_id, "tee-" + host_name(src))
                      : std::nullopt;
          if (!exchange) {
            result.failures.push_back("replay capture failed");
          } else {
            // Captured evidence resubmitted to the verifier verbatim.
            Verifier::GrantRequest req;
            req.initiator_evidence = *exchange->initiator_evidence;
            req.responder_evidence = *exchange->responder_evidence;
            req.cb_hash = exchange->initiator_evidence->cb_hash;
            req.nonce = exchange->nonce;
            req.subject = ident.subject();
            req.audience = exchange->audience;
            req.requested_scope = exchange->scope;
            req.now = sim.clock.now();
            auto replayed = sim.verifier->appraise_and_mint(req);
            ++result.attacks_attempted;
            FlowId attack_flow = sim.script.array<16>();
            if (replayed.ok()) {
              result.failures.push_back("evidence replay minted a token");
            } else {
              ++result.flows_denied;
              ++result.deny_reasons[replayed.error().code];
              sim.recorder.record(sim.clock.now(), attack_flow, EventKind::FlowDenied,
                                  {{"attack", "evidence-replay"}}, Decision::Deny,
                                  replayed.error().code);
            }
            // Captured token presented over a fresh channel and flow.
            FlowId fake_flow = sim.script.array<16>();
            ErrorCode reason = replay_token_attack(sim, *d, *exchange, fake_flow);
            ++result.attacks_attempted;
            ++result.flows_denied;
            ++result.deny_reasons[reason];
            sim.recorder.record(sim.clock.now(), fake_flow, EventKind::FlowDenied,
                                {{"attack", "token-replay"}}, Decision::Deny, reason);
          }
        }

        if (auto cl = g->close_flow(flow->flow_id, pump); !cl) {
          result.failures.push_back("close failed: " + cl.error().to_string());
        }
      } else {
        ++result.flows_denied;
        ++result.deny_reasons[st.code()];
      }
    }

    if (it < spec.bypass_attempts) {
      size_t h = sim.script.next_below(spec.hosts);
      size_t sb = sim.script.next_below(spec.sandboxes_per_host);
      size_t target = (h + 1) % spec.hosts;
      auto st = sim.guards[h]->sandbox_direct_egress(sandbox_name(sb), host_ip(target), 25);
      ++result.bypass_attempts;
      if (!st.ok() && st.code() == ErrorCode::BypassBlocked) ++result.bypass_blocked;
    }
  }

  result.trace = sim.recorder.events();
  result.audit = sim.recorder.audit();
  for (const auto& g : sim.guards) {
    result.full_handshakes[g->host_id()] = g->counters().full_handshakes;
  }

  auto audit_check = result.audit.verify();
  if (!audit_check.ok) {
    result.failures.push_back("audit chain broken at record " +
                              std::to_string(audit_check.first_broken));
  }
  if (result.audit.size() != result.trace.size()) {
    result.failures.push_back("audit log and trace disagree on record count");
  }
  auto props = assert_trace_properties(result.trace, sim.policy_max);
  for (auto& v : props.violations) result.failures.push_back(std::move(v));

  check_expectations(spec, result);
  result.pass = result.failures.empty();
  return result;
}

Status write_scenario_outputs(const ScenarioResult& result,
                              const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return Status(ErrorCode::IoError, "cannot create " + dir.string());
  {
    std::ofstream trace(dir / "trace.txt", std::ios::binary | std::ios::trunc);
    if (!trace) return Status(ErrorCode::IoError, "cannot open trace.txt");
    trace << serialize_trace(result.trace);
    if (!trace) return Status(ErrorCode::IoError, "short write to trace.txt");
  }
  {
    std::ofstream audit(dir / "audit.bin", std::ios::binary | std::ios::trunc);
    if (!audit) return Status(ErrorCode::IoError, "cannot open audit.bin");
    Bytes raw = result.audit.serialize();
    audit.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size()));
    if (!audit) return Status(ErrorCode::IoError, "short write to audit.bin");
  }
  return Status::ok_status();
}

}  // namespace grimlock
