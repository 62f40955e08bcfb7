#include "nlinv/binary_io.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nlinv/error.hpp"

namespace nlinv {

Sha256Digest sha256(std::span<const std::uint8_t> data) {
  Sha256Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (auto b : data) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

void ByteWriter::raw(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::raw(std::string_view bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> values) {
  buf_.reserve(buf_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  if (n > remaining()) {
    fail(ErrorKind::Format, context_ + ": truncated stream (need " + std::to_string(n) +
                                " bytes at offset " + std::to_string(pos_) + ", have " +
                                std::to_string(remaining()) + ")");
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::expect_magic(std::string_view magic) {
  const bool ok = remaining() >= magic.size() &&
                  std::equal(magic.begin(), magic.end(), data_.begin() + pos_,
                             [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; });
  if (!ok) {
    std::string printable;
    for (char c : magic) printable += (c == '\0') ? std::string("\\0") : std::string(1, c);
    fail(ErrorKind::Format, context_ + ": bad magic, expected \"" + printable + "\"");
  }
  pos_ += magic.size();
}

std::uint8_t ByteReader::u8() { return raw(1)[0]; }

std::uint32_t ByteReader::u32() {
  auto b = raw(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::f64s(std::span<double> out) {
  for (double& v : out) v = f64();
}

std::span<const std::uint8_t> verify_sha256_trailer(std::span<const std::uint8_t> data,
                                                    const std::string& context) {
  require(data.size() >= 32, ErrorKind::Format, context + ": truncated stream (no checksum)");
  auto payload = data.first(data.size() - 32);
  const auto expected = sha256(payload);
  require(std::equal(expected.begin(), expected.end(), data.end() - 32), ErrorKind::Format,
          context + ": SHA-256 checksum mismatch");
  return payload;
}

void append_sha256_trailer(Bytes& data) {
  const auto digest = sha256(data);
  data.insert(data.end(), digest.begin(), digest.end());
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace nlinv
