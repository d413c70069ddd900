// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hash-chained audit log. Each record is hashed together with its
// predecessor's chain hash, so flipping any bit of any stored record breaks
// verification at or before the first tampered link.
//
// Record wire layout (canonical bytes, all integers big endian):
//
//   u8  version (=1)
//   u64 seq
//   u64 timestamp
//   flow_id     16 bytes
//   u8  event kind
//   u8  decision
//   u8  has_token  (0|1)   [token_id 16 bytes]
//   u8  has_reason (0|1)   [reason u16]
//
// Chain: rec_hash[0] = H(genesis || rec[0]), rec_hash[i] = H(rec_hash[i-1] ||
// rec[i]) with genesis = 32 zero bytes. File format: for each record,
// u32 length || record bytes || 32-byte chain hash.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grimlock/core.hpp"
#include "grimlock/error.hpp"
#include "grimlock/trace.hpp"

namespace grimlock {

inline constexpr std::array<uint8_t, 32> kAuditGenesis{};

struct AuditRecord {
  uint8_t version = 1;
  uint64_t seq = 0;
  uint64_t timestamp = 0;
  FlowId flow_id{};
  EventKind event = EventKind::SandboxConnect;
  Decision decision = Decision::Info;
  std::optional<TokenId> token_id;
  std::optional<ErrorCode> reason;

  Bytes canonical_bytes() const;
  static Result<AuditRecord> decode(BytesView raw);

  bool operator==(const AuditRecord&) const = default;
};

/// H(prev_hash || record canonical bytes).
Digest audit_chain_hash(const std::array<uint8_t, 32>& prev,
                        const AuditRecord& record);

struct AuditVerifyResult {
  bool ok = false;
  // Index of the first record whose stored hash does not match the
  // recomputed chain, when !ok.
  size_t first_broken = 0;
};

class AuditLog {
 public:
  /// Appends and extends the chain.
  void append(AuditRecord record);

  const std::vector<AuditRecord>& records() const { return records_; }
  const std::vector<std::array<uint8_t, 32>>& hashes() const {
    return hashes_;
  }
  size_t size() const { return records_.size(); }

  /// Recomputes the chain from genesis against the stored hashes.
  AuditVerifyResult verify() const;

  Bytes serialize() const;
  /// Parses a serialized log. Structural damage (truncation, lengths that
  /// run past the end) is a parse error; hash mismatches are reported by
  /// verify(), not here.
  static Result<AuditLog> deserialize(BytesView raw);

 private:
  std::vector<AuditRecord> records_;
  std::vector<std::array<uint8_t, 32>> hashes_;
};

}  // namespace grimlock
