// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mock-TEE attestation. A registered software signing key stands in for a
// hardware quote; the evidence carries the same commitments a real quote
// would (measurement, nonce, user-data hash) so the appraisal control flow
// matches a hardware deployment.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "grimlock/core.hpp"
#include "grimlock/crypto.hpp"

namespace grimlock {

inline constexpr uint64_t kDefaultNonceWindow = 120;  // 2 x default token ttl

using Nonce32 = std::array<uint8_t, 32>;

struct Evidence {
  uint8_t version = 1;
  std::string attester_id;
  Digest measurement;
  Nonce32 nonce{};
  Digest cb_hash;
  std::vector<std::pair<std::string, std::string>> claims;
  crypto::Signature signature{};

  /// Canonical bytes covered by the signature (everything but the signature).
  Result<Bytes> signing_bytes() const;
  Result<Bytes> encode() const;
  static Result<Evidence> decode(BytesView data);

  bool operator==(const Evidence&) const = default;
};

/// Attester keys known to a verifier, by attester_id.
using AttesterKeys = std::map<std::string, crypto::VerifyKey>;

Result<Evidence> attest(const crypto::SigningKey& attester_key, std::string attester_id,
                        const Digest& measurement, const Digest& cb_hash, BytesView nonce,
                        std::vector<std::pair<std::string, std::string>> claims = {});

/// Replay window over nonce-derived keys. check_and_store is atomic:
/// exactly one caller wins for a given key within the window.
class NonceCache {
 public:
  explicit NonceCache(uint64_t window_seconds = kDefaultNonceWindow);

  bool check_and_store(BytesView key, uint64_t now);
  size_t size() const;
  uint64_t window() const { return window_; }

 private:
  uint64_t window_;
  mutable std::mutex mu_;
  std::map<Bytes, uint64_t> entries_;
};

struct AppraisalPolicy {
  std::set<Digest> allowed_measurements;
  uint64_t max_evidence_age = kDefaultNonceWindow;
  std::map<Digest, Scope> grantable_scopes;

  /// Line-oriented policy text: `measurement <hex32> allow`,
  /// `grant <hex32> <entry>[,<entry>...]`, `max_age <seconds>`.
  /// '#' starts a comment; blank lines are skipped.
  static Result<AppraisalPolicy> parse(std::string_view text);
  std::string serialize() const;
};

struct AppraisalResult {
  bool accepted = false;
  ErrorCode reason = ErrorCode::AppraisalRejected;  // meaningful when rejected
  Digest measurement;
  Digest cb_hash;
  Scope max_scope;  // non-empty only when accepted
  uint64_t appraised_at = 0;
};

/// Appraises evidence under policy. Checks run in a fixed order and the
/// first failure is reported: signature, nonce match, replay, channel
/// binding, measurement. The replay check consumes the nonce even when a
/// later check fails. The cache key is hash(attester_id || nonce): the two
/// directions of one mutual flow share a nonce but not an attester, so each
/// attester gets one use.
AppraisalResult appraise(const Evidence& ev, const AppraisalPolicy& policy,
                         const Digest& expected_cb_hash, const Nonce32& expected_nonce,
                         NonceCache& cache, const AttesterKeys& anchors, uint64_t now);

}  // namespace grimlock
