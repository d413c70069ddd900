// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Identities, scopes and digests shared by every other module. The byte
// layouts produced here (scope encoding in particular) are normative inputs
// to all hashing and signing in the repo.

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "grimlock/bytes.hpp"
#include "grimlock/crypto.hpp"
#include "grimlock/error.hpp"

namespace grimlock {

/// 32-byte digest value (SHA-256 output size).
struct Digest {
  std::array<uint8_t, 32> bytes{};

  static Digest from(const crypto::Hash32& h) { return Digest{h}; }
  static std::optional<Digest> parse_hex(std::string_view hex);

  std::string hex() const { return to_hex(bytes); }
  BytesView view() const { return BytesView(bytes.data(), bytes.size()); }

  auto operator<=>(const Digest&) const = default;
};

using FlowId = std::array<uint8_t, 16>;
using TokenId = std::array<uint8_t, 16>;

/// SHA-256 of arbitrary bytes.
Digest hash(BytesView data);
inline Digest hash(const Bytes& data) { return hash(BytesView(data)); }
inline Digest hash(std::string_view data) {
  return hash(BytesView(reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

/// Per-host guard identity. host_id may not contain '/', which is reserved
/// as the separator in audience strings ("host_id/guard").
struct HostIdentity {
  std::string host_id;
  crypto::VerifyKey guard_pubkey{};

  Status validate() const;
  std::string audience() const { return host_id + "/guard"; }

  bool operator==(const HostIdentity&) const = default;
};

struct SandboxIdentity {
  std::string host_id;
  std::string sandbox_id;
  Digest measurement;

  std::string subject() const { return host_id + "/" + sandbox_id; }

  bool operator==(const SandboxIdentity&) const = default;
  auto operator<=>(const SandboxIdentity&) const = default;
};

/// Set of "verb:resource" permission entries. Canonical form is the sorted,
/// deduplicated list; construction canonicalizes.
class Scope {
 public:
  Scope() = default;
  explicit Scope(std::initializer_list<std::string> entries);
  explicit Scope(std::vector<std::string> entries);

  static bool entry_valid(std::string_view entry);

  const std::vector<std::string>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  bool contains(std::string_view entry) const;

  Scope intersect(const Scope& other) const;

  bool operator==(const Scope&) const = default;

 private:
  std::vector<std::string> entries_;  // sorted, unique
};

/// True iff every entry of child is an entry of parent.
bool scope_subset(const Scope& child, const Scope& parent);

/// Canonical encoding: u16 BE entry count, then each entry as u16 BE length
/// followed by UTF-8 bytes, in sorted order. Injective on canonical scopes.
Result<Bytes> scope_canonical_bytes(const Scope& scope);

/// Inverse of scope_canonical_bytes; consumes from the reader.
Result<Scope> scope_from_reader(ByteReader& reader);

}  // namespace grimlock
