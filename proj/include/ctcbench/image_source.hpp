#pragma once

#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "ctcbench/data.hpp"
#include "ctcbench/image.hpp"

namespace ctcbench {

enum class Stage { TRAIN, VAL, TEST };

inline constexpr std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::TRAIN: return "TRAIN";
    case Stage::VAL: return "VAL";
    case Stage::TEST: return "TEST";
  }
  return "?";
}

/// Image access used by the pipeline. `stage` says which phase asks for it.
class ImageSource {
public:
  virtual ~ImageSource() = default;
  virtual Image load(const CellRecord& record, Channel channel, Stage stage) = 0;
};

/// Reads PNGs relative to a manifest's image root.
class DiskImageSource final : public ImageSource {
public:
  explicit DiskImageSource(std::filesystem::path root) : root_(std::move(root)) {}
  explicit DiskImageSource(const Manifest& m) : root_(m.image_root) {}

  Image load(const CellRecord& record, Channel channel, Stage) override {
    if (!record.has(channel))
      throw ValidationError("cell '" + record.cell_id + "' has no " +
                            std::string(to_string(channel)) + " image");
    return read_png(root_ / record.path(channel));
  }

private:
  std::filesystem::path root_;
};

/// Decorator recording every access; thread-safe.
class LoggingImageSource final : public ImageSource {
public:
  struct Access {
    std::string cell_id;
    Channel channel;
    Stage stage;
  };

  explicit LoggingImageSource(ImageSource& inner) : inner_(inner) {}

  Image load(const CellRecord& record, Channel channel, Stage stage) override {
    {
      std::lock_guard lock(mutex_);
      log_.push_back({record.cell_id, channel, stage});
    }
    return inner_.load(record, channel, stage);
  }

  std::vector<Access> log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

private:
  ImageSource& inner_;
  mutable std::mutex mutex_;
  std::vector<Access> log_;
};

}  // namespace ctcbench
