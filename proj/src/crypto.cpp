// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#include "grimlock/crypto.hpp"

#include <sodium.h>

#include <mutex>

namespace grimlock::crypto {

namespace {
void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) abort();
  });
}
}  // namespace

Hash32 sha256(BytesView data) {
  ensure_sodium();
  Hash32 out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Hash32 hmac_sha256(BytesView key, BytesView data) {
  ensure_sodium();
  Hash32 out;
  crypto_auth_hmacsha256_state state;
  crypto_auth_hmacsha256_init(&state, key.data(), key.size());
  crypto_auth_hmacsha256_update(&state, data.data(), data.size());
  crypto_auth_hmacsha256_final(&state, out.data());
  return out;
}

Hash32 hkdf_extract(BytesView salt, BytesView ikm) {
  return hmac_sha256(salt, ikm);
}

Result<Bytes> hkdf_expand(BytesView prk, BytesView info, size_t out_len) {
  if (out_len == 0 || out_len > 255 * 32) {
    return Error(ErrorCode::InvalidLength, "hkdf output length out of range");
  }
  Bytes out;
  out.reserve(out_len);
  Hash32 block{};
  uint8_t counter = 1;
  size_t block_len = 0;
  while (out.size() < out_len) {
    Bytes input;
    input.insert(input.end(), block.begin(), block.begin() + block_len);
    input.insert(input.end(), info.begin(), info.end());
    input.push_back(counter++);
    block = hmac_sha256(prk, input);
    block_len = block.size();
    size_t take = std::min(block.size(), out_len - out.size());
    out.insert(out.end(), block.begin(), block.begin() + take);
  }
  return out;
}

KeyPair ed25519_keypair(const Seed32& seed) {
  ensure_sodium();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.verify.data(), kp.signing.data(), seed.data());
  return kp;
}

Signature ed25519_sign(const SigningKey& key, BytesView message) {
  ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), key.data());
  return sig;
}

bool ed25519_verify(const VerifyKey& key, BytesView message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) == 0;
}

VerifyKey ed25519_public(const SigningKey& key) {
  VerifyKey out;
  std::copy(key.begin() + 32, key.end(), out.begin());
  return out;
}

bool constant_time_equal(BytesView a, BytesView b) {
  ensure_sodium();
  if (a.size() != b.size()) return false;
  return sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace grimlock::crypto
