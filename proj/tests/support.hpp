#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ctcbench/core/rng.hpp"
#include "ctcbench/data.hpp"
#include "ctcbench/image.hpp"
#include "ctcbench/image_source.hpp"

namespace ctcbench::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ctcbench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

/// Image-free manifest with the given group sizes; every record has a DAPI path.
inline Manifest group_manifest(std::size_t spiked, std::size_t patient, std::size_t leuko,
                               std::size_t patient_leuko = 0) {
  Manifest m;
  auto add = [&](const std::string& prefix, std::size_t n, Label l, Provenance p) {
    for (std::size_t i = 0; i < n; ++i) {
      CellRecord r;
      r.cell_id = prefix + std::to_string(i);
      r.label = l;
      r.provenance = p;
      r.bf_path = "images/" + r.cell_id + "_BF.png";
      r.dapi_path = "images/" + r.cell_id + "_DAPI.png";
      m.records.push_back(std::move(r));
    }
  };
  add("S", spiked, Label::CTC, Provenance::SPIKED);
  add("P", patient, Label::CTC, Provenance::PATIENT);
  add("H", leuko, Label::LEUKO, Provenance::HEALTHY);
  add("Q", patient_leuko, Label::LEUKO, Provenance::PATIENT);
  return m;
}

/// Deterministic pseudo-random images keyed by (cell_id, channel); no disk access.
class MemorySource final : public ImageSource {
public:
  explicit MemorySource(int size = 16) : size_(size) {}
  Image load(const CellRecord& r, Channel c, Stage) override {
    if (!r.has(c)) throw ValidationError("cell '" + r.cell_id + "' has no image for that channel");
    Rng rng(fnv1a(r.cell_id + "/" + std::string(to_string(c))));
    Image img(size_, size_);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    return img;
  }

private:
  int size_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace ctcbench::testing
