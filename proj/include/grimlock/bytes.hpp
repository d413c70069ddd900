// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace grimlock {

using Bytes = std::vector<uint8_t>;
using BytesView = std::span<const uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

std::string to_hex(BytesView data);
std::optional<Bytes> from_hex(std::string_view hex);

/// Big-endian serializer for the fixed wire layouts.
class ByteWriter {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void raw(BytesView data) { out_.insert(out_.end(), data.begin(), data.end()); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  /// u16 length prefix followed by the bytes; caller must keep data under 64 KiB.
  void lp16(BytesView data);
  void lp16(std::string_view s) { lp16(BytesView(reinterpret_cast<const uint8_t*>(s.data()), s.size())); }

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }
  size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

/// Bounds-checked big-endian reader; every accessor reports truncation.
class ByteReader {
 public:
  explicit ByteReader(BytesView data) : data_(data) {}

  std::optional<uint8_t> u8();
  std::optional<uint16_t> u16();
  std::optional<uint32_t> u32();
  std::optional<uint64_t> u64();
  std::optional<Bytes> raw(size_t n);
  std::optional<std::string> lp16_string();
  std::optional<Bytes> lp16_bytes();

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  BytesView data_;
  size_t pos_ = 0;
};

}  // namespace grimlock
