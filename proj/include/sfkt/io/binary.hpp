#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sfkt/core/errors.hpp"

namespace sfkt::io {

/// Little-endian scalar and length-prefixed writers over iostreams. Every
/// reader validates what it consumes and throws InputError on truncation,
/// so corrupt files fail loudly instead of producing garbage datasets.

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* p, std::size_t n,
                       const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw InputError(std::string("truncated file while reading ") + what);
  }
}

template <typename T>
void write_scalar(std::ostream& out, T v) {
  static_assert(std::is_arithmetic_v<T>);
  write_bytes(out, &v, sizeof(v));
}

template <typename T>
T read_scalar(std::istream& in, const char* what) {
  static_assert(std::is_arithmetic_v<T>);
  T v{};
  read_bytes(in, &v, sizeof(v), what);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_scalar<std::uint64_t>(out, s.size());
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in, const char* what,
                               std::uint64_t max_len = 1ull << 32) {
  const auto n = read_scalar<std::uint64_t>(in, what);
  if (n > max_len) {
    throw InputError(std::string("implausible string length for ") + what);
  }
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, what);
  return s;
}

/// FNV-1a over a byte stream, used for content and vocabulary hashes.
class Fnv1a {
 public:
  void feed(const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void feed(const std::string& s) { feed(s.data(), s.size()); }
  template <typename T>
  void feed_scalar(T v) {
    static_assert(std::is_arithmetic_v<T>);
    feed(&v, sizeof(v));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace sfkt::io
