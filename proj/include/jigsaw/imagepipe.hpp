#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "jigsaw/image.hpp"
#include "jigsaw/permset.hpp"
#include "jigsaw/rng.hpp"
#include "jigsaw/tensor.hpp"

namespace jigsaw {

/// Geometry of puzzle sampling. Defaults reproduce the 256/225/75/64 layout.
struct PuzzleConfig {
  int resize_target = 256;
  int crop = 225;
  int grid = 3;
  int cell = 75;
  int tile = 64;
  std::vector<float> mean{0.0f, 0.0f, 0.0f};
  std::vector<float> stddev{1.0f, 1.0f, 1.0f};

  /// Throws std::invalid_argument on inconsistent geometry.
  void validate() const;
  int tiles_per_puzzle() const { return grid * grid; }

  /// 112 -> 108 crop, 36 px cells, 32 px tiles.
  static PuzzleConfig toy();
};

struct TileOffset {
  int dy = 0;
  int dx = 0;
};

struct TileExtraction {
  std::vector<Image> tiles;         // raster order
  std::vector<TileOffset> offsets;  // offset of each tile inside its cell
};

struct PuzzleSample {
  std::vector<Tensor<float>> tiles;  // [C, tile, tile] each, already permuted and normalized
  int label = 0;
  std::string source_id;
  std::uint64_t rng_trace = 0;  // seed the sample was drawn from
};

/// Bilinear resize so the shorter side equals `target`; the longer side is
/// rounded half-up. Same-size input is returned unchanged.
Image resize_shorter_side(const Image& img, int target);

/// Centered square crop; odd margins leave the extra pixel at the bottom/right.
Image center_crop_to_square(const Image& img, int side);

/// Uniform side x side window. Draws the row offset, then the column offset.
Image random_crop(const Image& img, int side, Rng& rng);

/// Cuts the crop into grid x grid cells and takes a tile x tile window from
/// each at an offset uniform on {0..cell-tile}, per axis and per cell
/// (row offset drawn before column offset, cells in raster order).
TileExtraction extract_tiles(const Image& img, const PuzzleConfig& cfg, Rng& rng);

/// Horizontal then vertical gaps between adjacent tiles, in pixels.
std::vector<int> adjacent_gaps(const std::vector<TileOffset>& offsets, const PuzzleConfig& cfg);

/// Per-channel (x - mean) / std into a [C, H, W] tensor.
Tensor<float> normalize(const Image& tile, const PuzzleConfig& cfg);

/// resize -> label draw -> random_crop -> extract_tiles -> apply_permutation -> normalize,
/// all driven by Rng(seed).
PuzzleSample make_puzzle(const Image& img, const PermutationSet& set, const PuzzleConfig& cfg, std::uint64_t seed,
                         std::string source_id = {});

/// Puzzle from a fixed label (evaluation and tests).
PuzzleSample make_puzzle_with_label(const Image& img, const PermutationSet& set, const PuzzleConfig& cfg,
                                    std::uint64_t seed, int label, std::string source_id = {});

Vector<float> one_hot(int label, int num_classes);

/// The label make_puzzle() draws for `seed`: the first draw of Rng(seed).
int draw_puzzle_label(std::uint64_t seed, std::size_t set_size);

/// Seed of the puzzle built from `record` during `epoch`.
inline std::uint64_t sample_seed(std::uint64_t master, std::uint64_t epoch, std::uint64_t record) {
  return derive_seed(master, {epoch, record});
}

/// In-memory image collection. Images are stored already resized to the
/// shorter-side target so repeated sampling does not re-run the resize.
struct Dataset {
  std::vector<Image> images;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
  void add(Image img, std::string id) {
    images.push_back(std::move(img));
    ids.push_back(std::move(id));
  }
};

/// Manifest: one image path per line, relative to the manifest's directory.
/// Blank lines and lines starting with '#' are skipped.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<std::string>& relative_paths);
Dataset load_dataset(const std::filesystem::path& manifest, int resize_target);

struct Normalization {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Dataset-level per-channel mean and standard deviation.
Normalization compute_normalization(const Dataset& data);
void save_normalization(const Normalization& n, const std::filesystem::path& path);
Normalization load_normalization(const std::filesystem::path& path);

}  // namespace jigsaw
