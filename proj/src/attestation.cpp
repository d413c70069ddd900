// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/attestation.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace grimlock {

Result<Bytes> Evidence::signing_bytes() const {
  ByteWriter w;
  w.u8(version);
  if (attester_id.size() > UINT16_MAX) return Error(ErrorCode::InvalidConfig, "attester_id too long");
  w.lp16(attester_id);
  w.raw(measurement.view());
  w.raw(BytesView(nonce.data(), nonce.size()));
  w.raw(cb_hash.view());
  if (claims.size() > UINT16_MAX) return Error(ErrorCode::InvalidConfig, "too many claims");
  w.u16(static_cast<uint16_t>(claims.size()));
  for (const auto& [key, value] : claims) {
    if (key.size() > UINT16_MAX || value.size() > UINT16_MAX) {
      return Error(ErrorCode::InvalidConfig, "claim too long");
    }
    w.lp16(key);
    w.lp16(value);
  }
  return w.take();
}

Result<Bytes> Evidence::encode() const {
  auto body = signing_bytes();
  if (!body.ok()) return body;
  body->insert(body->end(), signature.begin(), signature.end());
  return body;
}

Result<Evidence> Evidence::decode(BytesView data) {
  ByteReader r(data);
  Evidence ev;
  auto version = r.u8();
  if (!version) return Error(ErrorCode::ParseError, "truncated evidence");
  if (*version != 1) return Error(ErrorCode::UnsupportedVersion, "evidence version");
  ev.version = *version;

  auto attester = r.lp16_string();
  auto measurement = r.raw(32);
  auto nonce = r.raw(32);
  auto cb = r.raw(32);
  auto claim_count = measurement && nonce && cb && attester ? r.u16() : std::nullopt;
  if (!claim_count) return Error(ErrorCode::ParseError, "truncated evidence");
  ev.attester_id = std::move(*attester);
  std::copy(measurement->begin(), measurement->end(), ev.measurement.bytes.begin());
  std::copy(nonce->begin(), nonce->end(), ev.nonce.begin());
  std::copy(cb->begin(), cb->end(), ev.cb_hash.bytes.begin());

  for (uint16_t i = 0; i < *claim_count; ++i) {
    auto key = r.lp16_string();
    auto value = r.lp16_string();
    if (!key || !value) return Error(ErrorCode::ParseError, "truncated claim");
    ev.claims.emplace_back(std::move(*key), std::move(*value));
  }
  auto sig = r.raw(64);
  if (!sig || !r.done()) return Error(ErrorCode::ParseError, "bad evidence length");
  std::copy(sig->begin(), sig->end(), ev.signature.begin());
  return ev;
}

Result<Evidence> attest(const crypto::SigningKey& attester_key, std::string attester_id,
                        const Digest& measurement, const Digest& cb_hash, BytesView nonce,
                        std::vector<std::pair<std::string, std::string>> claims) {
  if (nonce.size() != 32) {
    return Error(ErrorCode::BadNonceLength, std::to_string(nonce.size()));
  }
  Evidence ev;
  ev.attester_id = std::move(attester_id);
  ev.measurement = measurement;
  std::copy(nonce.begin(), nonce.end(), ev.nonce.begin());
  ev.cb_hash = cb_hash;
  ev.claims = std::move(claims);
  auto body = ev.signing_bytes();
  if (!body.ok()) return body.error();
  ev.signature = crypto::ed25519_sign(attester_key, *body);
  return ev;
}

NonceCache::NonceCache(uint64_t window_seconds) : window_(window_seconds) {}

bool NonceCache::check_and_store(BytesView key, uint64_t now) {
  std::lock_guard lock(mu_);
  // Lazy purge: anything that fell out of the window no longer blocks reuse.
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second + window_ <= now) {
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  auto [it, inserted] = entries_.emplace(Bytes(key.begin(), key.end()), now);
  (void)it;
  return inserted;
}

size_t NonceCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

Result<AppraisalPolicy> AppraisalPolicy::parse(std::string_view text) {
  AppraisalPolicy policy;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    std::istringstream ls(line);
    std::string verb;
    if (!(ls >> verb)) continue;
    auto fail = [&](const char* what) {
      return Error(ErrorCode::InvalidConfig,
                   std::string(what) + " at line " + std::to_string(line_no));
    };
    if (verb == "measurement") {
      std::string hex, allow;
      if (!(ls >> hex >> allow) || allow != "allow") return fail("bad measurement line");
      auto digest = Digest::parse_hex(hex);
      if (!digest) return fail("bad measurement digest");
      policy.allowed_measurements.insert(*digest);
    } else if (verb == "grant") {
      std::string hex, scopes;
      if (!(ls >> hex >> scopes)) return fail("bad grant line");
      auto digest = Digest::parse_hex(hex);
      if (!digest) return fail("bad grant digest");
      std::vector<std::string> entries;
      std::string entry;
      std::istringstream ss(scopes);
      while (std::getline(ss, entry, ',')) {
        if (!Scope::entry_valid(entry)) return fail("bad scope entry");
        entries.push_back(entry);
      }
      if (entries.empty()) return fail("empty grant");
      policy.grantable_scopes[*digest] = Scope(std::move(entries));
    } else if (verb == "max_age") {
      std::string value;
      if (!(ls >> value)) return fail("bad max_age line");
      uint64_t seconds = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seconds);
      if (ec != std::errc() || ptr != value.data() + value.size()) return fail("bad max_age value");
      policy.max_evidence_age = seconds;
    } else {
      return fail("unknown directive");
    }
    std::string extra;
    if (ls >> extra) return fail("trailing tokens");
  }
  return policy;
}

std::string AppraisalPolicy::serialize() const {
  std::string out;
  out += "max_age " + std::to_string(max_evidence_age) + "\n";
  for (const auto& m : allowed_measurements) {
    out += "measurement " + m.hex() + " allow\n";
  }
  for (const auto& [m, scope] : grantable_scopes) {
    out += "grant " + m.hex() + " ";
    for (size_t i = 0; i < scope.entries().size(); ++i) {
      if (i) out += ",";
      out += scope.entries()[i];
    }
    out += "\n";
  }
  return out;
}

AppraisalResult appraise(const Evidence& ev, const AppraisalPolicy& policy,
                         const Digest& expected_cb_hash, const Nonce32& expected_nonce,
                         NonceCache& cache, const AttesterKeys& anchors, uint64_t now) {
  AppraisalResult result;
  result.measurement = ev.measurement;
  result.cb_hash = ev.cb_hash;
  result.appraised_at = now;
  auto reject = [&](ErrorCode code) {
    result.accepted = false;
    result.reason = code;
    return result;
  };

  auto key = anchors.find(ev.attester_id);
  auto body = ev.signing_bytes();
  if (key == anchors.end() || !body.ok() ||
      !crypto::ed25519_verify(key->second, *body, ev.signature)) {
    return reject(ErrorCode::BadSignature);
  }

  if (!crypto::constant_time_equal(BytesView(ev.nonce.data(), ev.nonce.size()),
                                   BytesView(expected_nonce.data(), expected_nonce.size()))) {
    return reject(ErrorCode::NonceMismatch);
  }

  ByteWriter cache_key;
  cache_key.lp16(ev.attester_id);
  cache_key.raw(BytesView(ev.nonce.data(), ev.nonce.size()));
  if (!cache.check_and_store(hash(cache_key.bytes()).view(), now)) {
    return reject(ErrorCode::ReplayDetected);
  }

  if (ev.cb_hash != expected_cb_hash) {
    return reject(ErrorCode::BindingMismatch);
  }

  if (!policy.allowed_measurements.count(ev.measurement)) {
    return reject(ErrorCode::MeasurementRejected);
  }

  result.accepted = true;
  auto grant = policy.grantable_scopes.find(ev.measurement);
  result.max_scope = grant == policy.grantable_scopes.end() ? Scope{} : grant->second;
  return result;
}

}  // namespace grimlock
