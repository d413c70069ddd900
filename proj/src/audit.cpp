// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/audit.hpp"

#include <algorithm>

#include "grimlock/bytes.hpp"
#include "grimlock/crypto.hpp"

namespace grimlock {

Bytes AuditRecord::canonical_bytes() const {
  ByteWriter w;
  w.u8(version);
  w.u64(seq);
  w.u64(timestamp);
  w.raw(BytesView(flow_id.data(), flow_id.size()));
  w.u8(static_cast<uint8_t>(event));
  w.u8(static_cast<uint8_t>(decision));
  w.u8(token_id ? 1 : 0);
  if (token_id) w.raw(BytesView(token_id->data(), token_id->size()));
  w.u8(reason ? 1 : 0);
  if (reason) w.u16(static_cast<uint16_t>(*reason));
  return w.take();
}

Result<AuditRecord> AuditRecord::decode(BytesView raw) {
  ByteReader r(raw);
  AuditRecord rec;
  auto ver = r.u8();
  if (!ver) return Error(ErrorCode::ParseError, "truncated audit record");
  if (*ver != 1) return Error(ErrorCode::UnsupportedVersion, "audit record version");
  rec.version = *ver;
  auto seq = r.u64();
  auto ts = r.u64();
  auto flow = r.raw(rec.flow_id.size());
  auto kind = r.u8();
  auto decision = r.u8();
  if (!seq || !ts || !flow || !kind || !decision) {
    return Error(ErrorCode::ParseError, "truncated audit record");
  }
  rec.seq = *seq;
  rec.timestamp = *ts;
  std::copy(flow->begin(), flow->end(), rec.flow_id.begin());
  if (*kind < 1 || *kind > 13) {
    return Error(ErrorCode::ParseError, "unknown event kind");
  }
  rec.event = static_cast<EventKind>(*kind);
  if (*decision > 2) return Error(ErrorCode::ParseError, "unknown decision");
  rec.decision = static_cast<Decision>(*decision);
  auto has_token = r.u8();
  if (!has_token || *has_token > 1) {
    return Error(ErrorCode::ParseError, "bad token flag");
  }
  if (*has_token) {
    auto tok = r.raw(16);
    if (!tok) return Error(ErrorCode::ParseError, "truncated token id");
    TokenId id{};
    std::copy(tok->begin(), tok->end(), id.begin());
    rec.token_id = id;
  }
  auto has_reason = r.u8();
  if (!has_reason || *has_reason > 1) {
    return Error(ErrorCode::ParseError, "bad reason flag");
  }
  if (*has_reason) {
    auto code = r.u16();
    if (!code) return Error(ErrorCode::ParseError, "truncated reason");
    rec.reason = static_cast<ErrorCode>(*code);
  }
  if (!r.done()) return Error(ErrorCode::ParseError, "trailing bytes");
  return rec;
}

Digest audit_chain_hash(const std::array<uint8_t, 32>& prev,
                        const AuditRecord& record) {
  Bytes buf(prev.begin(), prev.end());
  Bytes body = record.canonical_bytes();
  buf.insert(buf.end(), body.begin(), body.end());
  return hash(buf);
}

void AuditLog::append(AuditRecord record) {
  const auto& prev = hashes_.empty() ? kAuditGenesis : hashes_.back();
  Digest next = audit_chain_hash(prev, record);
  records_.push_back(std::move(record));
  hashes_.push_back(next.bytes);
}

AuditVerifyResult AuditLog::verify() const {
  std::array<uint8_t, 32> prev = kAuditGenesis;
  for (size_t i = 0; i < records_.size(); ++i) {
    Digest expect = audit_chain_hash(prev, records_[i]);
    if (i >= hashes_.size() || expect.bytes != hashes_[i]) {
      return {false, i};
    }
    prev = hashes_[i];
  }
  if (hashes_.size() != records_.size()) {
    return {false, records_.size()};
  }
  return {true, 0};
}

Bytes AuditLog::serialize() const {
  ByteWriter w;
  for (size_t i = 0; i < records_.size(); ++i) {
    Bytes body = records_[i].canonical_bytes();
    w.u32(static_cast<uint32_t>(body.size()));
    w.raw(body);
    w.raw(BytesView(hashes_[i].data(), hashes_[i].size()));
  }
  return w.take();
}

Result<AuditLog> AuditLog::deserialize(BytesView raw) {
  AuditLog log;
  ByteReader r(raw);
  while (!r.done()) {
    auto len = r.u32();
    if (!len) return Error(ErrorCode::ParseError, "truncated record length");
    auto body = r.raw(*len);
    if (!body) return Error(ErrorCode::ParseError, "record length runs past end");
    auto rec = AuditRecord::decode(*body);
    if (!rec) return rec.error();
    auto h = r.raw(32);
    if (!h) return Error(ErrorCode::ParseError, "truncated chain hash");
    std::array<uint8_t, 32> stored{};
    std::copy(h->begin(), h->end(), stored.begin());
    log.records_.push_back(std::move(*rec));
    log.hashes_.push_back(stored);
  }
  return log;
}

}  // namespace grimlock
