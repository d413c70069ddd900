// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/core.hpp"

#include <algorithm>

namespace grimlock {

std::optional<Digest> Digest::parse_hex(std::string_view hex) {
  auto bytes = from_hex(hex);
  if (!bytes || bytes->size() != 32) return std::nullopt;
  Digest d;
  std::copy(bytes->begin(), bytes->end(), d.bytes.begin());
  return d;
}

Digest hash(BytesView data) {
  return Digest::from(crypto::sha256(data));
}

Status HostIdentity::validate() const {
  if (host_id.empty()) {
    return Status(ErrorCode::InvalidConfig, "empty host_id");
  }
  if (host_id.find('/') != std::string::npos) {
    return Status(ErrorCode::InvalidConfig, "host_id contains '/'");
  }
  return Status();
}

namespace {
bool verb_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}
bool resource_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '.' || c == '_' || c == '/' || c == '-';
}

std::vector<std::string> canonicalize(std::vector<std::string> entries) {
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  return entries;
}
}  // namespace

Scope::Scope(std::initializer_list<std::string> entries)
    : entries_(canonicalize(std::vector<std::string>(entries))) {}

Scope::Scope(std::vector<std::string> entries) : entries_(canonicalize(std::move(entries))) {}

// Pattern: [a-z0-9_-]+:[A-Za-z0-9._/-]+
bool Scope::entry_valid(std::string_view entry) {
  size_t colon = entry.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == entry.size()) return false;
  for (char c : entry.substr(0, colon)) {
    if (!verb_char(c)) return false;
  }
  for (char c : entry.substr(colon + 1)) {
    if (!resource_char(c)) return false;
  }
  return true;
}

bool Scope::contains(std::string_view entry) const {
  return std::binary_search(entries_.begin(), entries_.end(), entry);
}

Scope Scope::intersect(const Scope& other) const {
  std::vector<std::string> out;
  std::set_intersection(entries_.begin(), entries_.end(), other.entries_.begin(),
                        other.entries_.end(), std::back_inserter(out));
  return Scope(std::move(out));
}

bool scope_subset(const Scope& child, const Scope& parent) {
  return std::includes(parent.entries().begin(), parent.entries().end(), child.entries().begin(),
                       child.entries().end());
}

Result<Bytes> scope_canonical_bytes(const Scope& scope) {
  if (scope.size() > UINT16_MAX) {
    return Error(ErrorCode::InvalidScopeEntry, "too many scope entries");
  }
  ByteWriter w;
  w.u16(static_cast<uint16_t>(scope.size()));
  for (const std::string& entry : scope.entries()) {
    if (!Scope::entry_valid(entry)) {
      return Error(ErrorCode::InvalidScopeEntry, entry);
    }
    if (entry.size() > UINT16_MAX) {
      return Error(ErrorCode::InvalidScopeEntry, "entry too long");
    }
    w.lp16(entry);
  }
  return w.take();
}

Result<Scope> scope_from_reader(ByteReader& reader) {
  auto count = reader.u16();
  if (!count) return Error(ErrorCode::MalformedToken, "truncated scope count");
  std::vector<std::string> entries;
  entries.reserve(*count);
  for (uint16_t i = 0; i < *count; ++i) {
    auto entry = reader.lp16_string();
    if (!entry) return Error(ErrorCode::MalformedToken, "truncated scope entry");
    if (!Scope::entry_valid(*entry)) {
      return Error(ErrorCode::MalformedToken, "invalid scope entry: " + *entry);
    }
    entries.push_back(std::move(*entry));
  }
  return Scope(std::move(entries));
}

}  // namespace grimlock
