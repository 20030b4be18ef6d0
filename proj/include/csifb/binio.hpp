// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>
#include <stdexcept>

namespace csifb {

// All file formats in this project are little-endian with fixed-width fields.
// These helpers keep the byte layout independent of host conventions.

namespace detail {
template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  // x86/arm little-endian hosts: memcpy order is already LE. Guarded so a
  // big-endian port fails loudly instead of writing scrambled files.
  static_assert(sizeof(int) == 4);
  out.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw std::runtime_error("file truncated while reading fixed-width field");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace detail

class byte_writer {
 public:
  void u8(std::uint8_t v) { detail::put_le(buf_, v); }
  void u32(std::uint32_t v) { detail::put_le(buf_, v); }
  void u64(std::uint64_t v) { detail::put_le(buf_, v); }
  void i32(std::int32_t v) { detail::put_le(buf_, v); }
  void f32(float v) { detail::put_le(buf_, v); }
  void f64(double v) { detail::put_le(buf_, v); }
  void magic(const char (&m)[5]) { buf_.append(m, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void f32_array(const float* p, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n * sizeof(float));
  }
  void f64_array(const double* p, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n * sizeof(double));
  }
  void u32_array(const std::uint32_t* p, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n * sizeof(std::uint32_t));
  }
  void u8_array(const std::uint8_t* p, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(p), n);
  }
  const std::string& bytes() const { return buf_; }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw std::runtime_error("short write: " + path);
  }

 private:
  std::string buf_;
};

class byte_reader {
 public:
  explicit byte_reader(std::string bytes) : buf_(std::move(bytes)) {}

  static byte_reader from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::string s((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
    return byte_reader(std::move(s));
  }

  std::uint8_t u8() { return detail::get_le<std::uint8_t>(buf_, pos_); }
  std::uint32_t u32() { return detail::get_le<std::uint32_t>(buf_, pos_); }
  std::uint64_t u64() { return detail::get_le<std::uint64_t>(buf_, pos_); }
  std::int32_t i32() { return detail::get_le<std::int32_t>(buf_, pos_); }
  float f32() { return detail::get_le<float>(buf_, pos_); }
  double f64() { return detail::get_le<double>(buf_, pos_); }

  void expect_magic(const char (&m)[5], const std::string& what) {
    if (pos_ + 4 > buf_.size() || std::memcmp(buf_.data() + pos_, m, 4) != 0)
      throw std::runtime_error("not a " + what + " file: bad magic");
    pos_ += 4;
  }
  std::string str() {
    const auto n = u32();
    if (pos_ + n > buf_.size()) throw std::runtime_error("file truncated in string");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f32_array(float* p, std::size_t n) { raw(p, n * sizeof(float)); }
  void f64_array(double* p, std::size_t n) { raw(p, n * sizeof(double)); }
  void u32_array(std::uint32_t* p, std::size_t n) { raw(p, n * sizeof(std::uint32_t)); }
  void u8_array(std::uint8_t* p, std::size_t n) { raw(p, n); }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void raw(void* p, std::size_t bytes) {
    if (pos_ + bytes > buf_.size()) throw std::runtime_error("file truncated in array");
    std::memcpy(p, buf_.data() + pos_, bytes);
    pos_ += bytes;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

// FNV-1a, 64-bit. Used for config fingerprints in manifests and cache keys.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = d[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace csifb
