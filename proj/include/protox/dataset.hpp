#pragma once

// Per-class embedding storage and the PFE1 container.
//
// PFE1 layout, little-endian, no padding:
//   "PFE1" | u32 version=1 | u32 dim | u32 class_count |
//   class_count x ( u16 name_len | name bytes | u32 sample_count |
//                   sample_count*dim binary32 values, row-major ) |
//   u64 FNV-1a of every preceding byte

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace protox {

inline constexpr std::uint32_t kPfe1Version = 1;

struct EmbeddingClass {
  std::string name;
  std::size_t count = 0;
  std::vector<float> values;  // count * dim, row-major

  std::span<const float> sample(std::size_t i, std::size_t dim) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

/// Immutable once constructed; the constructor enforces the invariants
/// (shared dim, non-empty classes, unique names, finite values).
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  EmbeddingDataset(std::size_t dim, std::vector<EmbeddingClass> classes);

  std::size_t dim() const { return dim_; }
  std::size_t class_count() const { return classes_.size(); }
  const EmbeddingClass& at(std::size_t c) const { return classes_[c]; }
  const std::vector<EmbeddingClass>& classes() const { return classes_; }
  std::size_t total_samples() const;

  /// FNV-1a of the PFE1 encoding (the file's trailing hash).
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingClass> classes_;
  std::uint64_t fingerprint_ = 0;
};

std::vector<std::uint8_t> encode_pfe1(const EmbeddingDataset& ds);
EmbeddingDataset decode_pfe1(std::span<const std::uint8_t> bytes);

EmbeddingDataset load_pfe1(const std::string& path);
void save_pfe1(const EmbeddingDataset& ds, const std::string& path);

struct Pfe1Summary {
  std::uint32_t version = 0;
  std::uint32_t dim = 0;
  std::vector<std::pair<std::string, std::uint32_t>> classes;
  std::uint64_t stored_hash = 0;
  std::uint64_t computed_hash = 0;
  std::uint64_t file_size = 0;
  std::uint64_t nonfinite_values = 0;
  bool hash_ok() const { return stored_hash == computed_hash; }
};

/// Streams the file in fixed-size chunks; sample rows are hashed but never
/// held in memory. Structural problems raise FormatError; a hash mismatch is
/// reported through hash_ok().
Pfe1Summary inspect_pfe1(const std::string& path);

}  // namespace protox
