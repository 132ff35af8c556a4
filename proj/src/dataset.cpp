#include "protox/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "protox/binary_io.hpp"

namespace protox {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'E', '1'};

void check_header(std::string_view magic, std::uint32_t version) {
  if (magic != std::string_view(kMagic, 4)) throw FormatError("not a PFE1 file: bad magic");
  if (version != kPfe1Version) {
    throw FormatError("unsupported PFE1 version " + std::to_string(version) + " (expected " +
                      std::to_string(kPfe1Version) + ")");
  }
}

}  // namespace

EmbeddingDataset::EmbeddingDataset(std::size_t dim, std::vector<EmbeddingClass> classes)
    : dim_(dim), classes_(std::move(classes)) {
  if (dim_ == 0) throw DataError("embedding dim must be positive");
  std::set<std::string> names;
  for (const auto& c : classes_) {
    if (c.count == 0) throw DataError("class '" + c.name + "' has no samples");
    if (c.values.size() != c.count * dim_) {
      throw DataError("class '" + c.name + "' holds " + std::to_string(c.values.size()) +
                      " values, expected " + std::to_string(c.count * dim_));
    }
    if (c.name.size() > UINT16_MAX) throw DataError("class name longer than 65535 bytes");
    if (!names.insert(c.name).second) throw DataError("duplicate class name '" + c.name + "'");
    for (float v : c.values) {
      if (!std::isfinite(v)) throw DataError("class '" + c.name + "' contains a non-finite value");
    }
  }
  const auto bytes = encode_pfe1(*this);
  fingerprint_ = fnv1a64(std::span(bytes).first(bytes.size() - 8));
}

std::size_t EmbeddingDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.count;
  return n;
}

std::vector<std::uint8_t> encode_pfe1(const EmbeddingDataset& ds) {
  ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kPfe1Version);
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.u32(static_cast<std::uint32_t>(ds.class_count()));
  for (const auto& c : ds.classes()) {
    w.u16(static_cast<std::uint16_t>(c.name.size()));
    w.bytes(c.name);
    w.u32(static_cast<std::uint32_t>(c.count));
    for (float v : c.values) w.f32(v);
  }
  w.seal();
  return w.take();
}

EmbeddingDataset decode_pfe1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.str(4);
  const auto version = r.u32();
  check_header(magic, version);
  const std::size_t dim = r.u32();
  const std::size_t class_count = r.u32();
  if (dim == 0) throw FormatError("PFE1 dim is zero");

  std::vector<EmbeddingClass> classes;
  for (std::size_t c = 0; c < class_count; ++c) {
    EmbeddingClass ec;
    ec.name = r.str(r.u16());
    ec.count = r.u32();
    if (ec.count > r.remaining() / 4 / dim) {
      throw FormatError("truncated input at byte offset " + std::to_string(r.offset()) + ": class '" +
                        ec.name + "' declares " + std::to_string(ec.count) + " samples");
    }
    ec.values.resize(ec.count * dim);
    r.read_f32s(ec.values);
    for (float v : ec.values) {
      if (!std::isfinite(v)) throw DataError("class '" + ec.name + "' contains a non-finite value");
    }
    classes.push_back(std::move(ec));
  }
  const std::size_t body = r.offset();
  const auto stored = r.u64();
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after PFE1 hash at byte offset " + std::to_string(r.offset()));
  }
  const auto computed = fnv1a64(bytes.first(body));
  if (stored != computed) throw FormatError("PFE1 hash mismatch: file is corrupt");
  return EmbeddingDataset(dim, std::move(classes));
}

EmbeddingDataset load_pfe1(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pfe1(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_pfe1(const EmbeddingDataset& ds, const std::string& path) {
  write_file(path, encode_pfe1(ds));
}

namespace {

/// Sequential file reader that hashes everything it consumes.
class HashingStream {
 public:
  explicit HashingStream(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open file: " + path);
  }

  void read(std::span<std::uint8_t> out, bool hash = true) {
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != out.size()) {
      throw FormatError("truncated input at byte offset " + std::to_string(offset_ + got));
    }
    if (hash) hash_.update(out);
    offset_ += out.size();
  }

  std::uint64_t le(int n, bool hash = true) {
    std::uint8_t buf[8];
    read(std::span(buf, static_cast<std::size_t>(n)), hash);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
    return v;
  }

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const { return offset_; }
  std::uint64_t digest() const { return hash_.digest(); }

 private:
  std::ifstream in_;
  Fnv1a64 hash_;
  std::uint64_t offset_ = 0;
};

}  // namespace

Pfe1Summary inspect_pfe1(const std::string& path) {
  HashingStream s(path);
  Pfe1Summary out;
  std::uint8_t magic[4];
  s.read(magic);
  out.version = static_cast<std::uint32_t>(s.le(4));
  check_header(std::string_view(reinterpret_cast<const char*>(magic), 4), out.version);
  out.dim = static_cast<std::uint32_t>(s.le(4));
  const auto class_count = static_cast<std::uint32_t>(s.le(4));
  if (out.dim == 0) throw FormatError("PFE1 dim is zero");

  std::vector<std::uint8_t> chunk;
  for (std::uint32_t c = 0; c < class_count; ++c) {
    std::string name(s.le(2), '\0');
    s.read(std::span(reinterpret_cast<std::uint8_t*>(name.data()), name.size()));
    const auto count = static_cast<std::uint32_t>(s.le(4));
    std::uint64_t remaining = std::uint64_t{count} * out.dim * 4;
    while (remaining > 0) {
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, 1 << 16));
      chunk.resize(n);
      s.read(chunk);
      for (std::size_t i = 0; i + 4 <= n; i += 4) {
        float v;
        std::memcpy(&v, chunk.data() + i, 4);
        if (!std::isfinite(v)) ++out.nonfinite_values;
      }
      remaining -= n;
    }
    out.classes.emplace_back(std::move(name), count);
  }
  out.computed_hash = s.digest();
  out.stored_hash = s.le(8, false);
  if (!s.at_eof()) {
    throw FormatError("trailing bytes after PFE1 hash at byte offset " + std::to_string(s.offset()));
  }
  out.file_size = s.offset();
  return out;
}

}  // namespace protox
