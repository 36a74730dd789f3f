#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spotgcn {

inline constexpr double kPi = 3.14159265358979323846;

// Error taxonomy shared by the whole library. The CLI maps these to
// process exit codes (usage 2, data/io 3, numeric 4).
enum class Errc {
  invalid_argument,
  data,
  io,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

// Process-wide worker cap, settable from the CLI (--threads).
inline int& max_threads() {
  static int n = static_cast<int>(std::thread::hardware_concurrency() ? std::thread::hardware_concurrency() : 1);
  return n;
}

// Index-partitioned parallel loop. Work item i is always executed exactly
// once and results must be written by index, which keeps every caller
// deterministic regardless of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = max_threads();
  std::size_t t = static_cast<std::size_t>(threads);
  if (t > n) t = n;
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t j = 0; j < t; ++j) {
    std::size_t lo = n * j / t, hi = n * (j + 1) / t;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Little-endian scalar IO for the binary file formats.
inline void write_u32le(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) raise(Errc::io, "short write");
}

inline bool read_u32le(std::FILE* f, std::uint32_t& v) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void write_f32le(std::FILE* f, float x) {
  std::uint32_t v;
  static_assert(sizeof(v) == sizeof(x));
  __builtin_memcpy(&v, &x, 4);
  write_u32le(f, v);
}

inline bool read_f32le(std::FILE* f, float& x) {
  std::uint32_t v;
  if (!read_u32le(f, v)) return false;
  __builtin_memcpy(&x, &v, 4);
  return true;
}

// Bulk f32 payload IO. Fast path on little-endian hosts.
inline void write_f32_block(std::FILE* f, const float* p, std::size_t n) {
  if (std::fwrite(p, sizeof(float), n, f) != n) raise(Errc::io, "short write");
}

inline bool read_f32_block(std::FILE* f, float* p, std::size_t n) {
  return std::fread(p, sizeof(float), n, f) == n;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  return f;
}

}  // namespace spotgcn
