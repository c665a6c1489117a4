// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gta/tensor.hpp"

// Binary container plumbing shared by checkpoints and datasets: little-endian
// fixed-width integers, IEEE-754 doubles, length-prefixed UTF-8 strings,
// row-major tensors, and a trailing CRC-32 over every preceding byte
// (including the magic). Writes land atomically via a temp file + rename.

namespace gta {

using KvPairs = std::vector<std::pair<std::string, std::string>>;

std::uint32_t crc32_bytes(const unsigned char* p, std::size_t n);

// "key=value" lines; keys must be unique and contain no '=' or newline.
std::string encode_kv(const KvPairs& kv);
KvPairs decode_kv(const std::string& text);
// Lookup helpers throwing FormatError when a key is missing or malformed.
const std::string& kv_get(const KvPairs& kv, const std::string& key);
std::uint64_t kv_get_u64(const KvPairs& kv, const std::string& key);

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n);
  void magic(const char (&m)[9]);  // eight characters + terminator
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);     // u32 length + bytes
  void tensor(const Tensor& t);       // u32 rank, u64 extents, f64 values

  // Appends the CRC-32 of everything written so far. Call exactly once,
  // last.
  void seal();

  const std::vector<unsigned char>& bytes() const { return buf_; }
  void save(const std::string& path) const;

 private:
  std::vector<unsigned char> buf_;
  bool sealed_ = false;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string origin);
  static ByteReader from_file(const std::string& path);

  void magic(const char (&m)[9]);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Tensor tensor();

  // True when the cursor sits at the CRC trailer.
  bool at_payload_end() const;
  // Verifies the trailing CRC-32 against all preceding bytes and that the
  // payload was consumed exactly; IntegrityError on checksum mismatch.
  void seal();

  std::size_t offset() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const;  // FormatError

 private:
  void need(std::size_t n);

  std::vector<unsigned char> buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes);

}  // namespace gta
