#pragma once

// Helpers shared by the test binaries. Oracles live next to the tests that
// use them; nothing here calls into the code under test except for
// building inputs.

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "protox/dataset.hpp"
#include "protox/tensor.hpp"

namespace testing {

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double std = 1.0) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <typename T>
protox::Tensor<T> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double std = 1.0) {
  const auto v = normal_vector(rng, rows * cols, std);
  return protox::Tensor<T>::matrix(rows, cols, std::vector<T>(v.begin(), v.end()));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("protox_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Little-endian writer with its own FNV-1a, independent of the library's
/// serialization code.
class RawWriter {
 public:
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) {
    std::uint32_t bits = 0;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, 4);
    put(bits, 4);
  }
  void text(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
  void hash() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    u64(h);
  }

  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
};

}  // namespace testing
