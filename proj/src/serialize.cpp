// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/serialize.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "gta/error.hpp"

namespace gta {

std::uint32_t crc32_bytes(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

std::string encode_kv(const KvPairs& kv) {
  std::string out;
  for (const auto& [key, value] : kv) {
    if (key.empty() || key.find('=') != std::string::npos ||
        key.find('\n') != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw ContractError("encode_kv: malformed entry for key '" + key + "'");
    }
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

KvPairs decode_kv(const std::string& text) {
  KvPairs kv;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      throw FormatError("key=value block: missing final newline");
    }
    const std::string line = text.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("key=value block: malformed line '" + line + "'");
    }
    kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    start = end + 1;
  }
  return kv;
}

const std::string& kv_get(const KvPairs& kv, const std::string& key) {
  for (const auto& [k, v] : kv) {
    if (k == key) return v;
  }
  throw FormatError("key=value block: missing key '" + key + "'");
}

std::uint64_t kv_get_u64(const KvPairs& kv, const std::string& key) {
  const std::string& s = kv_get(kv, key);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("key=value block: key '" + key + "' is not an unsigned integer: '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw FormatError("key=value block: key '" + key + "' overflows: '" + s + "'");
  }
}

void ByteWriter::raw(const void* p, std::size_t n) {
  if (sealed_) throw ContractError("ByteWriter: write after seal");
  const unsigned char* b = static_cast<const unsigned char*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::magic(const char (&m)[9]) { raw(m, 8); }

void ByteWriter::u32(std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  raw(b, 4);
}

void ByteWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  raw(b, 8);
}

void ByteWriter::f64(double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}

void ByteWriter::str(const std::string& s) {
  if (s.size() > 0xffffffffu) throw ContractError("ByteWriter: string too long");
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void ByteWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (const std::size_t e : t.shape()) u64(e);
  for (std::size_t i = 0; i < t.size(); ++i) f64(t.data()[i]);
}

void ByteWriter::seal() {
  const std::uint32_t crc = crc32_bytes(buf_.data(), buf_.size());
  u32(crc);
  sealed_ = true;
}

void ByteWriter::save(const std::string& path) const {
  if (!sealed_) throw ContractError("ByteWriter: save before seal");
  write_file_atomic(path, buf_);
}

ByteReader::ByteReader(std::vector<unsigned char> bytes, std::string origin)
    : buf_(std::move(bytes)), origin_(std::move(origin)) {}

ByteReader ByteReader::from_file(const std::string& path) {
  return ByteReader(read_file_bytes(path), path);
}

void ByteReader::fail(const std::string& what) const {
  throw FormatError(origin_ + ": " + what + " at offset " + std::to_string(pos_));
}

void ByteReader::need(std::size_t n) {
  if (buf_.size() < 4 || pos_ + n > buf_.size() - 4) {
    fail("truncated: need " + std::to_string(n) + " more bytes");
  }
}

void ByteReader::magic(const char (&m)[9]) {
  need(8);
  if (std::memcmp(buf_.data() + pos_, m, 8) != 0) {
    fail(std::string("bad magic, expected '") + m + "'");
  }
  pos_ += 8;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

Tensor ByteReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank > 16) fail("implausible tensor rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t e = u64();
    if (e == 0 || total > (1ull << 32) / (e ? e : 1)) fail("implausible tensor extent");
    shape[i] = static_cast<std::size_t>(e);
    total *= shape[i];
  }
  std::vector<double> values(total);
  for (std::size_t i = 0; i < total; ++i) values[i] = f64();
  return Tensor(std::move(shape), std::move(values));
}

bool ByteReader::at_payload_end() const {
  return buf_.size() >= 4 && pos_ == buf_.size() - 4;
}

void ByteReader::seal() {
  if (buf_.size() < 4) fail("truncated: no checksum trailer");
  if (pos_ != buf_.size() - 4) fail("trailing bytes after payload");
  const std::size_t n = buf_.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf_[n + i]) << (8 * i);
  const std::uint32_t actual = crc32_bytes(buf_.data(), n);
  if (stored != actual) {
    throw IntegrityError(origin_ + ": checksum mismatch (stored " +
                         std::to_string(stored) + ", computed " +
                         std::to_string(actual) + ")");
  }
  pos_ = buf_.size();
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

void write_file_atomic(const std::string& path,
                       const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failure on '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move '" + tmp + "' into place at '" + path + "'");
  }
}

}  // namespace gta
