// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mutually authenticated guard-to-guard channel. This is a simulation that
// keeps the properties the protocol layer relies on (mutual authentication
// against trust anchors, a per-channel exporter, record integrity, cheap
// resumption) without being a wire-compatible TLS stack. A real TLS 1.3
// backend can replace it behind this interface; the exporter mirrors the
// RFC 8446 shape (secret, label, hashed context, length) to keep that seam
// small.

#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <vector>

#include "grimlock/core.hpp"
#include "grimlock/crypto.hpp"
#include "grimlock/rng.hpp"

namespace grimlock {

enum class Side : uint8_t { A, B };
inline Side other_side(Side s) { return s == Side::A ? Side::B : Side::A; }

struct TapFrame {
  Side from;
  Bytes data;
};

/// Frame pipe between two endpoints. Frames keep a total order per
/// direction; send/recv are safe to call concurrently.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Status send(Side from, const Bytes& frame) = 0;
  virtual Result<Bytes> recv(Side at) = 0;
  virtual bool pending(Side at) const = 0;
  virtual void close() = 0;
  virtual bool closed() const = 0;
};

class InMemoryTransport : public Transport {
 public:
  Status send(Side from, const Bytes& frame) override;
  Result<Bytes> recv(Side at) override;
  bool pending(Side at) const override;
  void close() override;
  bool closed() const override;

 private:
  friend class Tap;
  mutable std::mutex mu_;
  std::deque<Bytes> to_a_;
  std::deque<Bytes> to_b_;
  bool closed_ = false;
  std::shared_ptr<std::vector<TapFrame>> tap_log_;
};

/// Passive capture of every frame crossing a transport, with re-injection of
/// any captured frame toward its original destination.
class Tap {
 public:
  explicit Tap(std::shared_ptr<InMemoryTransport> transport);

  const std::vector<TapFrame>& frames() const { return *log_; }
  size_t size() const { return log_->size(); }

  /// Re-sends captured frame i as if its original sender sent it again.
  Status reinject(size_t index);

 private:
  std::shared_ptr<InMemoryTransport> transport_;
  std::shared_ptr<std::vector<TapFrame>> log_;
};

inline Tap tap(std::shared_ptr<InMemoryTransport> transport) { return Tap(std::move(transport)); }

/// Splices two transports: frames sent into t1 by side A come out of t2
/// toward side B, and vice versa. Used to shuttle frames of one channel onto
/// another; record MACs make such frames detectable at the receiving end.
class Bridge {
 public:
  Bridge(std::shared_ptr<Transport> t1, std::shared_ptr<Transport> t2)
      : t1_(std::move(t1)), t2_(std::move(t2)) {}

  /// Forwards all pending frames both ways; returns frames moved.
  size_t pump();

  size_t forwarded() const { return forwarded_; }

 private:
  std::shared_ptr<Transport> t1_;
  std::shared_ptr<Transport> t2_;
  size_t forwarded_ = 0;
};

inline Bridge bridge(std::shared_ptr<Transport> t1, std::shared_ptr<Transport> t2) {
  return Bridge(std::move(t1), std::move(t2));
}

/// Counts full mutual authentications; resumption must leave it untouched.
struct AuthCounters {
  uint64_t full_handshakes = 0;
};

struct ChannelConfig {
  HostIdentity local_identity;
  crypto::SigningKey signing_key{};
  std::set<crypto::VerifyKey> trust_anchors;
  uint64_t rng_seed = 0;
  AuthCounters* counters = nullptr;

  // Stateful stream so repeated establishments from one config draw fresh
  // randoms. Shared across copies of the config.
  std::shared_ptr<DetRng> rng;

  static ChannelConfig make(HostIdentity identity, crypto::SigningKey signing_key,
                            std::set<crypto::VerifyKey> trust_anchors, uint64_t rng_seed,
                            AuthCounters* counters = nullptr);

  Status validate() const;
};

/// Cached peer authentication material from a completed full handshake.
struct PeerContext {
  HostIdentity peer;
  std::array<uint8_t, 32> resumption_secret{};
  uint64_t created_at = 0;
};

using ChannelId = std::array<uint8_t, 16>;

enum class ChannelRole : uint8_t { Initiator, Responder };

namespace detail {
struct ChannelFactory;
}

struct ChannelPair;

/// One end of an established channel. Holds the exporter secret and record
/// keys privately; confine a handle to one worker at a time.
class ChannelHandle {
 public:
  ChannelHandle() = default;  // null handle; every operation reports NotEstablished
  ChannelHandle(ChannelHandle&&) = default;
  ChannelHandle& operator=(ChannelHandle&&) = default;
  ChannelHandle(const ChannelHandle&) = delete;
  ChannelHandle& operator=(const ChannelHandle&) = delete;

  bool established() const { return state_ == State::Established; }
  const ChannelId& channel_id() const { return channel_id_; }
  ChannelRole role() const { return role_; }
  const HostIdentity& peer() const { return peer_; }
  bool offload() const { return offload_; }
  const Digest& transcript_hash() const { return transcript_hash_; }

  // Handshake-public parameters, kept visible so an external oracle can
  // recompute the exporter derivation from scratch.
  const std::array<uint8_t, 32>& client_random() const { return client_random_; }
  const std::array<uint8_t, 32>& server_random() const { return server_random_; }

  uint64_t records_software() const { return records_software_; }
  uint64_t records_offload() const { return records_offload_; }

  /// Exported keying material: HKDF-Expand(secret, label || SHA-256(context), out_len).
  /// Identical on both ends; out_len must be in [1, 255*32].
  Result<Bytes> exporter(BytesView label, BytesView context, size_t out_len) const;

  /// MAC-protected record write/read. Tampering and replays are rejected on
  /// the receive side before any plaintext is surfaced.
  Status send(const Bytes& plaintext);
  Result<Bytes> recv();
  bool has_pending() const;

  /// Switches record accounting to the simulated kernel-offload path.
  /// Processing is functionally identical in both modes.
  Status enable_offload();

  /// Mints the cacheable peer context for later resumption.
  Result<PeerContext> peer_context(uint64_t now) const;

  void close();

 private:
  friend struct detail::ChannelFactory;

  enum class State : uint8_t { Null, Established, Failed, Closed };

  State state_ = State::Null;
  ChannelRole role_ = ChannelRole::Initiator;
  ChannelId channel_id_{};
  HostIdentity peer_;
  Digest transcript_hash_;
  std::array<uint8_t, 32> client_random_{};
  std::array<uint8_t, 32> server_random_{};
  std::array<uint8_t, 32> exporter_secret_{};
  std::array<uint8_t, 32> resumption_secret_{};
  std::array<uint8_t, 32> mac_send_{};
  std::array<uint8_t, 32> mac_recv_{};
  uint64_t seq_send_ = 0;
  uint64_t seq_recv_ = 0;
  bool offload_ = false;
  uint64_t records_software_ = 0;
  uint64_t records_offload_ = 0;
  std::shared_ptr<Transport> transport_;
  Side side_ = Side::A;
};

struct ChannelPair {
  ChannelHandle initiator;
  ChannelHandle responder;
};

/// Full mutual authentication between two guards over one transport. Both
/// returned handles share channel_id and exporter secret. Increments each
/// side's AuthCounters.
Result<ChannelPair> establish(const ChannelConfig& initiator_cfg, const ChannelConfig& responder_cfg,
                              std::shared_ptr<Transport> transport);

/// Abbreviated re-establishment from cached peer contexts. Fresh channel_id
/// and exporter secret; mutual-auth counters are not touched. Both sides
/// must present contexts from the same prior establishment.
Result<ChannelPair> resume(const ChannelConfig& initiator_cfg, const PeerContext& initiator_ctx,
                           const ChannelConfig& responder_cfg, const PeerContext& responder_ctx,
                           std::shared_ptr<Transport> transport);

}  // namespace grimlock
