#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmt {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind { Config, Usage, Data, Io, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void cat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  detail::cat_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail_config(const Args&... args) {
  throw Error(ErrorKind::Config, cat(args...));
}
template <typename... Args>
[[noreturn]] void fail_usage(const Args&... args) {
  throw Error(ErrorKind::Usage, cat(args...));
}
template <typename... Args>
[[noreturn]] void fail_data(const Args&... args) {
  throw Error(ErrorKind::Data, cat(args...));
}
template <typename... Args>
[[noreturn]] void fail_io(const Args&... args) {
  throw Error(ErrorKind::Io, cat(args...));
}

// ---------------------------------------------------------------------------
// Deterministic counter-based RNG.
//
// Every draw is a pure function of (seed, stream, counter), so any consumer
// can be replayed independently of call order elsewhere in the program.

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream = 0) : key_(mix64(seed) ^ mix64(mix64(stream))) {}
  Rng(uint64_t seed, std::string_view stream) : Rng(seed, hash_str(stream)) {}

  uint64_t next_u64() { return mix64(key_ + 0x632be59bd9b4e019ull * ++counter_); }

  // [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased-enough bounded draw (Lemire multiply-shift).
  uint64_t next_below(uint64_t n) {
    return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform in [lo, hi]
  int64_t next_range(int64_t lo, int64_t hi) {
    return lo + int64_t(next_below(uint64_t(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Small string/file helpers

inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t b = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(b, i - b));
      b = i + 1;
    }
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Validates that `s` is well-formed UTF-8.
bool valid_utf8(std::string_view s);

// Splits UTF-8 text into code-point strings. Throws Error(Data) on bad bytes.
std::vector<std::string> utf8_chars(std::string_view s);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace mmt
