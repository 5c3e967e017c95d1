#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

namespace jigsaw {

using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Planar image. In-pipeline values are in [0, 1] until normalization.
struct Image {
  std::vector<Plane> planes;

  Image() = default;
  Image(int height, int width, int channels);

  int height() const { return planes.empty() ? 0 : static_cast<int>(planes.front().rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes.front().cols()); }
  int channels() const { return static_cast<int>(planes.size()); }

  /// Sub-window copy. Throws if the window leaves the image.
  Image crop(int top, int left, int height, int width) const;

  friend bool operator==(const Image& a, const Image& b);
};

/// Reads binary PPM (P6), PGM (P5) or PNG. 8-bit samples map to [0, 1].
Image read_image(const std::filesystem::path& path);

/// Writes P6 (3 channels) or P5 (1 channel), values clamped to [0, 1].
void write_pnm(const Image& img, const std::filesystem::path& path);

}  // namespace jigsaw
