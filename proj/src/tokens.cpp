// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/tokens.hpp"

#include <algorithm>

namespace grimlock {

Result<Bytes> ScopeToken::signing_bytes() const {
  ByteWriter w;
  w.u8(version);
  w.raw(BytesView(token_id.data(), token_id.size()));
  if (issuer_id.size() > UINT16_MAX || subject.size() > UINT16_MAX ||
      audience.size() > UINT16_MAX) {
    return Error(ErrorCode::InvalidConfig, "token string field too long");
  }
  w.lp16(issuer_id);
  w.lp16(subject);
  w.lp16(audience);
  auto scope_bytes = scope_canonical_bytes(scope);
  if (!scope_bytes.ok()) return scope_bytes.error();
  w.raw(*scope_bytes);
  w.raw(cb_hash.view());
  w.u8(parent_token_id ? 1 : 0);
  if (parent_token_id) w.raw(BytesView(parent_token_id->data(), parent_token_id->size()));
  w.u64(iat);
  w.u64(exp);
  return w.take();
}

Result<Bytes> ScopeToken::encode() const {
  auto body = signing_bytes();
  if (!body.ok()) return body;
  body->insert(body->end(), signature.begin(), signature.end());
  return body;
}

Result<ScopeToken> ScopeToken::decode(BytesView data) {
  ByteReader r(data);
  ScopeToken t;
  auto version = r.u8();
  if (!version) return Error(ErrorCode::MalformedToken, "truncated token");
  if (*version != 1) return Error(ErrorCode::UnsupportedVersion, "token version");
  t.version = *version;

  auto id = r.raw(16);
  if (!id) return Error(ErrorCode::MalformedToken, "truncated token id");
  std::copy(id->begin(), id->end(), t.token_id.begin());

  auto issuer = r.lp16_string();
  auto subject = r.lp16_string();
  auto audience = r.lp16_string();
  if (!issuer || !subject || !audience) return Error(ErrorCode::MalformedToken, "truncated token");
  t.issuer_id = std::move(*issuer);
  t.subject = std::move(*subject);
  t.audience = std::move(*audience);

  auto scope = scope_from_reader(r);
  if (!scope.ok()) return scope.error();
  t.scope = std::move(*scope);

  auto cb = r.raw(32);
  auto parent_flag = r.u8();
  if (!cb || !parent_flag) return Error(ErrorCode::MalformedToken, "truncated token");
  std::copy(cb->begin(), cb->end(), t.cb_hash.bytes.begin());
  if (*parent_flag == 1) {
    auto parent = r.raw(16);
    if (!parent) return Error(ErrorCode::MalformedToken, "truncated parent id");
    TokenId pid;
    std::copy(parent->begin(), parent->end(), pid.begin());
    t.parent_token_id = pid;
  } else if (*parent_flag != 0) {
    return Error(ErrorCode::MalformedToken, "bad parent flag");
  }

  auto iat = r.u64();
  auto exp = r.u64();
  auto sig = r.raw(64);
  if (!iat || !exp || !sig || !r.done()) return Error(ErrorCode::MalformedToken, "bad token length");
  t.iat = *iat;
  t.exp = *exp;
  if (t.exp <= t.iat) return Error(ErrorCode::MalformedToken, "exp not after iat");
  std::copy(sig->begin(), sig->end(), t.signature.begin());
  return t;
}

namespace {

Result<ScopeToken> sign_token(ScopeToken t, const crypto::SigningKey& issuer_key) {
  auto body = t.signing_bytes();
  if (!body.ok()) return body.error();
  t.signature = crypto::ed25519_sign(issuer_key, *body);
  return t;
}

}  // namespace

Result<ScopeToken> mint(const crypto::SigningKey& issuer_key, std::string issuer_id,
                        const AppraisalResult& appraisal, std::string subject,
                        std::string audience, const Scope& requested_scope, const Digest& cb_hash,
                        uint64_t ttl, uint64_t now, DetRng& rng) {
  if (!appraisal.accepted) {
    return Error(ErrorCode::AppraisalRejected, error_name(appraisal.reason));
  }
  if (appraisal.cb_hash != cb_hash) {
    return Error(ErrorCode::BindingMismatch, "appraisal bound to different channel");
  }
  if (ttl == 0) return Error(ErrorCode::InvalidConfig, "zero ttl");

  Scope granted = requested_scope.intersect(appraisal.max_scope);
  if (granted.empty()) {
    return Error(ErrorCode::EmptyGrant, "request ∩ policy max is empty");
  }

  ScopeToken t;
  rng.fill(t.token_id.data(), t.token_id.size());
  t.issuer_id = std::move(issuer_id);
  t.subject = std::move(subject);
  t.audience = std::move(audience);
  t.scope = std::move(granted);
  t.cb_hash = cb_hash;
  t.iat = now;
  t.exp = now + ttl;
  return sign_token(std::move(t), issuer_key);
}

Status validate(const ScopeToken& token, const TrustAnchors& anchors,
                std::string_view expected_audience, const Digest& local_cb_hash,
                const Scope& required_scope, uint64_t now) {
  auto key = anchors.issuer_keys.find(token.issuer_id);
  auto body = token.signing_bytes();
  if (key == anchors.issuer_keys.end() || !body.ok() ||
      !crypto::ed25519_verify(key->second, *body, token.signature)) {
    return Status(ErrorCode::BadSignature, "token signature");
  }

  if (token.audience != expected_audience) {
    return Status(ErrorCode::AudienceMismatch, token.audience);
  }

  const uint64_t skew = anchors.clock_skew;
  if (now > token.exp + skew) {
    return Status(ErrorCode::Expired, "now past exp + skew");
  }
  if (now + skew < token.iat) {
    return Status(ErrorCode::NotYetValid, "now before iat - skew");
  }

  if (token.cb_hash != local_cb_hash) {
    return Status(ErrorCode::BindingMismatch, "token bound to different channel");
  }

  if (!scope_subset(required_scope, token.scope)) {
    return Status(ErrorCode::ScopeViolation, "required scope exceeds token scope");
  }
  return Status();
}

Result<ScopeToken> delegate(const ScopeToken& parent, const Scope& child_scope,
                            const crypto::SigningKey& issuer_key, const std::string& issuer_id,
                            std::string audience, uint64_t ttl, uint64_t now, DetRng& rng) {
  auto body = parent.signing_bytes();
  if (!body.ok() || parent.issuer_id != issuer_id ||
      !crypto::ed25519_verify(crypto::ed25519_public(issuer_key), *body, parent.signature)) {
    return Error(ErrorCode::BadSignature, "parent token signature");
  }
  if (now >= parent.exp) {
    return Error(ErrorCode::ParentExpired, "parent expired before delegation");
  }
  if (!scope_subset(child_scope, parent.scope)) {
    return Error(ErrorCode::ScopeViolation, "child scope exceeds parent scope");
  }
  if (child_scope.empty()) {
    return Error(ErrorCode::EmptyGrant, "empty child scope");
  }
  if (ttl == 0) return Error(ErrorCode::InvalidConfig, "zero ttl");

  ScopeToken child;
  rng.fill(child.token_id.data(), child.token_id.size());
  child.issuer_id = issuer_id;
  child.subject = parent.subject;
  child.audience = std::move(audience);
  child.scope = child_scope;
  child.cb_hash = parent.cb_hash;
  child.parent_token_id = parent.token_id;
  child.iat = now;
  child.exp = std::min(now + ttl, parent.exp);
  return sign_token(std::move(child), issuer_key);
}

}  // namespace grimlock
