#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctcbench/core/error.hpp"
#include "ctcbench/image.hpp"

namespace ctcbench {

enum class Label { CTC, LEUKO };
enum class Provenance { SPIKED, PATIENT, HEALTHY };
enum class Channel { BF, DAPI };

inline constexpr std::string_view to_string(Label l) noexcept {
  return l == Label::CTC ? "CTC" : "LEUKO";
}

inline constexpr std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::SPIKED: return "SPIKED";
    case Provenance::PATIENT: return "PATIENT";
    case Provenance::HEALTHY: return "HEALTHY";
  }
  return "?";
}

inline constexpr std::string_view to_string(Channel c) noexcept {
  return c == Channel::BF ? "BF" : "DAPI";
}

inline Label parse_label(std::string_view s) {
  if (s == "CTC") return Label::CTC;
  if (s == "LEUKO") return Label::LEUKO;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "SPIKED") return Provenance::SPIKED;
  if (s == "PATIENT") return Provenance::PATIENT;
  if (s == "HEALTHY") return Provenance::HEALTHY;
  throw ValidationError("unknown provenance '" + std::string(s) + "'");
}

inline Channel parse_channel(std::string_view s) {
  if (s == "BF") return Channel::BF;
  if (s == "DAPI") return Channel::DAPI;
  throw ValidationError("unknown channel '" + std::string(s) + "'");
}

inline constexpr Channel other(Channel c) noexcept {
  return c == Channel::BF ? Channel::DAPI : Channel::BF;
}

/// Integer class index used by the classifier: CTC is the positive class (1).
inline constexpr int class_index(Label l) noexcept { return l == Label::CTC ? 1 : 0; }
inline constexpr Label label_of_index(int i) noexcept { return i == 1 ? Label::CTC : Label::LEUKO; }

inline bool provenance_allowed(Label l, Provenance p) noexcept {
  if (l == Label::CTC) return p == Provenance::SPIKED || p == Provenance::PATIENT;
  return p == Provenance::PATIENT || p == Provenance::HEALTHY;
}

struct CellRecord {
  std::string cell_id;
  Label label = Label::CTC;
  Provenance provenance = Provenance::SPIKED;
  std::string bf_path;
  std::optional<std::string> dapi_path;
  std::string source_tag;

  bool has(Channel c) const noexcept { return c == Channel::BF || dapi_path.has_value(); }
  const std::string& path(Channel c) const {
    if (c == Channel::BF) return bf_path;
    if (!dapi_path) throw ValidationError("cell '" + cell_id + "' has no DAPI image");
    return *dapi_path;
  }

  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

struct Manifest {
  static constexpr int kSchemaVersion = 1;

  std::vector<CellRecord> records;
  std::filesystem::path image_root;
  int schema_version = kSchemaVersion;

  const CellRecord* find(std::string_view id) const {
    for (const auto& r : records)
      if (r.cell_id == id) return &r;
    return nullptr;
  }

  std::filesystem::path resolve(const CellRecord& r, Channel c) const {
    return image_root / r.path(c);
  }
};

inline constexpr std::string_view kManifestHeader =
    "cell_id,label,provenance,bf_path,dapi_path,source_tag";

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Checks record-level invariants and cell_id uniqueness.
inline void validate_records(const std::vector<CellRecord>& records) {
  std::unordered_set<std::string_view> seen;
  for (const auto& r : records) {
    if (r.cell_id.empty()) throw ValidationError("record with empty cell_id");
    if (!seen.insert(r.cell_id).second)
      throw ValidationError("duplicate cell_id '" + r.cell_id + "'");
    if (!provenance_allowed(r.label, r.provenance))
      throw ValidationError("cell '" + r.cell_id + "': label " + std::string(to_string(r.label)) +
                            " cannot have provenance " + std::string(to_string(r.provenance)));
    if (r.bf_path.empty()) throw ValidationError("cell '" + r.cell_id + "': empty bf_path");
  }
}

struct LoadOptions {
  /// Decode every referenced PNG header; disable for pure schema checks.
  bool verify_images = true;
  /// Defaults to the manifest's directory.
  std::optional<std::filesystem::path> image_root;
};

inline Manifest parse_manifest(std::istream& in, const std::string& origin,
                               std::filesystem::path image_root) {
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(origin + ": missing header row");
  if (detail::trim_cr(line) != kManifestHeader)
    throw ValidationError(origin + ": bad header, expected '" + std::string(kManifestHeader) + "'");

  Manifest m;
  m.image_root = std::move(image_root);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto text = detail::trim_cr(line);
    if (text.empty()) continue;
    auto fields = detail::split_csv_line(text);
    auto where = [&] { return origin + " row " + std::to_string(row) + ": "; };
    if (fields.size() != 6)
      throw ValidationError(where() + "expected 6 fields, got " + std::to_string(fields.size()));
    CellRecord r;
    try {
      r.cell_id = fields[0];
      r.label = parse_label(fields[1]);
      r.provenance = parse_provenance(fields[2]);
    } catch (const ValidationError& e) {
      throw ValidationError(where() + e.what());
    }
    r.bf_path = fields[3];
    if (!fields[4].empty()) r.dapi_path = fields[4];
    r.source_tag = fields[5];
    if (r.cell_id.empty()) throw ValidationError(where() + "empty cell_id");
    if (r.bf_path.empty()) throw ValidationError(where() + "empty bf_path");
    m.records.push_back(std::move(r));
  }
  validate_records(m.records);
  return m;
}

/// Loads and validates a manifest CSV.
inline Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest not found: " + path.string());
  auto root = opts.image_root.value_or(path.parent_path());
  Manifest m = parse_manifest(in, path.string(), root);
  if (opts.verify_images) {
    for (const auto& r : m.records) {
      for (Channel c : {Channel::BF, Channel::DAPI}) {
        if (!r.has(c)) continue;
        const auto p = m.resolve(r, c);
        if (!std::filesystem::exists(p))
          throw IoError("cell '" + r.cell_id + "': unresolvable " + std::string(to_string(c)) +
                        " image '" + p.string() + "'");
        if (!png_readable(p))
          throw IoError("cell '" + r.cell_id + "': undecodable image '" + p.string() + "'");
      }
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<CellRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    out << detail::csv_field(r.cell_id) << ',' << to_string(r.label) << ','
        << to_string(r.provenance) << ',' << detail::csv_field(r.bf_path) << ','
        << detail::csv_field(r.dapi_path.value_or("")) << ',' << detail::csv_field(r.source_tag)
        << '\n';
  }
}

}  // namespace ctcbench
