// SPDX-License-Identifier: Apache-2.0
//
// Independent recomputation of derivations and byte layouts used by tests.
// Everything here is implemented against OpenSSL (not libsodium) and against
// the documented wire layouts directly, so agreement with the library is a
// genuine cross-check rather than the same code called twice.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

using Bytes = std::vector<uint8_t>;

Bytes sha256(const Bytes& data);
Bytes hmac_sha256(const Bytes& key, const Bytes& data);

// RFC 5869 via OpenSSL EVP_PKEY_HKDF.
Bytes hkdf_extract(const Bytes& salt, const Bytes& ikm);
Bytes hkdf_expand(const Bytes& prk, const Bytes& info, size_t out_len);

// Exporter as specified: HKDF-Expand(exporter_secret, label || SHA-256(ctx), n).
Bytes exporter(const Bytes& exporter_secret, const std::string& label,
               const Bytes& context, size_t out_len);

// Recompute the channel key schedule from public handshake values.
Bytes exporter_secret_from_handshake(const Bytes& client_random,
                                     const Bytes& server_random,
                                     const Bytes& transcript_hash);

// Canonical scope encoding: u16 count, then (u16 len, utf-8) per entry,
// entries sorted lexicographically.
Bytes scope_bytes(std::vector<std::string> entries);

// Binding context: version byte 0x01, 32-byte nonce, u16-prefixed audience,
// canonical scope bytes.
Bytes context_bytes(const Bytes& nonce, const std::string& audience,
                    const std::vector<std::string>& scope);

// Scope token signing payload and full encoding, built field by field.
struct TokenFields {
  Bytes token_id;  // 16 bytes
  std::string issuer;
  std::string subject;
  std::string audience;
  std::vector<std::string> scope;
  Bytes cb_hash;  // 32 bytes
  bool has_parent = false;
  Bytes parent_id;  // 16 bytes when has_parent
  uint64_t issued_at = 0;
  uint64_t expires_at = 0;
};
Bytes token_signing_bytes(const TokenFields& f);
Bytes token_bytes(const TokenFields& f, const Bytes& sig64);

// Audit record chaining: hash over prev_hash || canonical record bytes.
Bytes audit_chain_hash(const Bytes& prev_hash, const Bytes& record_bytes);

}  // namespace oracle
