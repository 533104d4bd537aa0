#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctcbench/core/error.hpp"

namespace ctcbench::nn {

/// Named-tensor container.
///
/// Layout (all integers little-endian):
///   bytes 0..7   magic "CTCWARCH"
///   u32          format version (1)
///   u64          length L of the JSON index
///   L bytes      UTF-8 JSON index:
///                  {"format_version":1,
///                   "tensors":[{"name","dtype":"f32"|"f64","shape":[..],
///                               "offset","nbytes"}, ...],
///                   "metadata":{...}}
///   data         tensor payloads, little-endian IEEE-754, offsets relative
///                to the start of this section
struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // widened; dtype says how it is stored
  std::string dtype = "f32";

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

struct WeightArchive {
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr char kMagic[8] = {'C', 'T', 'C', 'W', 'A', 'R', 'C', 'H'};

  std::uint32_t format_version = kFormatVersion;
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace archive_detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace archive_detail

inline void write_archive(const std::filesystem::path& path, const WeightArchive& archive) {
  using namespace archive_detail;
  nlohmann::ordered_json index;
  index["format_version"] = archive.format_version;
  auto list = nlohmann::ordered_json::array();
  std::vector<std::uint8_t> data;
  for (const auto& t : archive.tensors) {
    if (t.values.size() != t.numel())
      throw ValidationError("archive: tensor '" + t.name + "' size does not match its shape");
    nlohmann::ordered_json e;
    e["name"] = t.name;
    e["dtype"] = t.dtype;
    e["shape"] = t.shape;
    e["offset"] = data.size();
    for (double v : t.values) {
      if (t.dtype == "f32")
        put_le(data, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else if (t.dtype == "f64")
        put_le(data, std::bit_cast<std::uint64_t>(v));
      else
        throw ValidationError("archive: unsupported dtype '" + t.dtype + "'");
    }
    e["nbytes"] = data.size() - e["offset"].get<std::size_t>();
    list.push_back(std::move(e));
  }
  index["tensors"] = std::move(list);
  index["metadata"] = archive.metadata;
  const std::string text = index.dump();

  std::vector<std::uint8_t> header(std::begin(WeightArchive::kMagic), std::end(WeightArchive::kMagic));
  put_le(header, archive.format_version);
  put_le(header, static_cast<std::uint64_t>(text.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write archive '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to archive '" + path.string() + "'");
}

inline WeightArchive read_archive(const std::filesystem::path& path) {
  using namespace archive_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("archive not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || std::memcmp(bytes.data(), WeightArchive::kMagic, 8) != 0)
    throw ValidationError("archive '" + path.string() + "': bad magic");
  WeightArchive a;
  a.format_version = get_le<std::uint32_t>(bytes.data() + 8);
  if (a.format_version != WeightArchive::kFormatVersion)
    throw ValidationError("archive '" + path.string() + "': unsupported format version " +
                          std::to_string(a.format_version));
  const auto len = get_le<std::uint64_t>(bytes.data() + 12);
  if (20 + len > bytes.size()) throw ValidationError("archive '" + path.string() + "': truncated index");
  const auto index = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
  const std::uint8_t* data = bytes.data() + 20 + len;
  const std::size_t data_size = bytes.size() - 20 - len;
  for (const auto& e : index.at("tensors")) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    t.dtype = e.at("dtype").get<std::string>();
    t.shape = e.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto nbytes = e.at("nbytes").get<std::size_t>();
    const std::size_t width = t.dtype == "f32" ? 4 : t.dtype == "f64" ? 8 : 0;
    if (width == 0) throw ValidationError("archive: tensor '" + t.name + "' has unsupported dtype");
    if (offset + nbytes > data_size || nbytes != t.numel() * width)
      throw ValidationError("archive: tensor '" + t.name + "' payload out of range");
    t.values.resize(t.numel());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const std::uint8_t* p = data + offset + i * width;
      t.values[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)))
                               : std::bit_cast<double>(get_le<std::uint64_t>(p));
    }
    a.tensors.push_back(std::move(t));
  }
  if (index.contains("metadata")) a.metadata = index["metadata"];
  return a;
}

}  // namespace ctcbench::nn
