// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0
//
// Thin wrappers over libsodium plus an HKDF-SHA256 composed from HMAC.
// Everything here is deterministic for fixed inputs; Ed25519 signing is
// RFC 8032 deterministic, so identical messages sign identically.

#pragma once

#include <array>
#include <cstdint>

#include "grimlock/bytes.hpp"
#include "grimlock/error.hpp"

namespace grimlock::crypto {

using Hash32 = std::array<uint8_t, 32>;
using VerifyKey = std::array<uint8_t, 32>;   // Ed25519 public half
using SigningKey = std::array<uint8_t, 64>;  // Ed25519 secret half (seed || public)
using Signature = std::array<uint8_t, 64>;
using Seed32 = std::array<uint8_t, 32>;

Hash32 sha256(BytesView data);
Hash32 hmac_sha256(BytesView key, BytesView data);

/// RFC 5869 HKDF-SHA256.
Hash32 hkdf_extract(BytesView salt, BytesView ikm);
/// out_len must be in [1, 255*32].
Result<Bytes> hkdf_expand(BytesView prk, BytesView info, size_t out_len);

struct KeyPair {
  SigningKey signing;
  VerifyKey verify;
};

KeyPair ed25519_keypair(const Seed32& seed);
Signature ed25519_sign(const SigningKey& key, BytesView message);
bool ed25519_verify(const VerifyKey& key, BytesView message, const Signature& sig);
VerifyKey ed25519_public(const SigningKey& key);

bool constant_time_equal(BytesView a, BytesView b);

}  // namespace grimlock::crypto
