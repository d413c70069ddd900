// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scope Tokens: short-lived, channel-bound authorization artifacts. A token
// is minted only from an accepted appraisal, carries request ∩ policy-max as
// its scope, and validates against exactly one channel binding value.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "grimlock/attestation.hpp"
#include "grimlock/core.hpp"
#include "grimlock/crypto.hpp"
#include "grimlock/rng.hpp"

namespace grimlock {

inline constexpr uint64_t kDefaultTokenTtl = 60;
inline constexpr uint64_t kDefaultClockSkew = 30;

struct ScopeToken {
  uint8_t version = 1;
  TokenId token_id{};
  std::string issuer_id;
  std::string subject;   // "host_id/sandbox_id" of the delegating principal
  std::string audience;  // "host_id/guard" of the validating guard
  Scope scope;
  Digest cb_hash;
  std::optional<TokenId> parent_token_id;
  uint64_t iat = 0;
  uint64_t exp = 0;
  crypto::Signature signature{};

  /// Canonical bytes covered by the signature (everything but the signature).
  Result<Bytes> signing_bytes() const;
  Result<Bytes> encode() const;
  static Result<ScopeToken> decode(BytesView data);

  bool operator==(const ScopeToken&) const = default;
};

/// Issuer keys a validating guard accepts, plus its clock tolerance.
struct TrustAnchors {
  std::map<std::string, crypto::VerifyKey> issuer_keys;
  uint64_t clock_skew = kDefaultClockSkew;
};

/// Mints a token from an accepted appraisal. Token scope is
/// requested_scope ∩ appraisal.max_scope; an empty intersection is an error
/// rather than an empty grant.
Result<ScopeToken> mint(const crypto::SigningKey& issuer_key, std::string issuer_id,
                        const AppraisalResult& appraisal, std::string subject,
                        std::string audience, const Scope& requested_scope, const Digest& cb_hash,
                        uint64_t ttl, uint64_t now, DetRng& rng);

/// Receiving-guard validation. Checks run in a fixed order, first failure
/// returned: signature, audience, expiry window, channel binding, scope.
Status validate(const ScopeToken& token, const TrustAnchors& anchors,
                std::string_view expected_audience, const Digest& local_cb_hash,
                const Scope& required_scope, uint64_t now);

/// Issues a child token with child_scope ⊆ parent.scope and
/// exp = min(now + ttl, parent.exp). The child keeps the parent's channel
/// binding; moving to a different channel requires a re-mint through the
/// verifier on that channel's binding.
Result<ScopeToken> delegate(const ScopeToken& parent, const Scope& child_scope,
                            const crypto::SigningKey& issuer_key, const std::string& issuer_id,
                            std::string audience, uint64_t ttl, uint64_t now, DetRng& rng);

}  // namespace grimlock
