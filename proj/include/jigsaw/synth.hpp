#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "jigsaw/imagepipe.hpp"

namespace jigsaw {

/// Synthetic images whose grid cells carry position-specific gratings.
///
/// Cell (r, c) of a grid x grid layout shows a sinusoidal grating whose
/// orientation and period are fixed by the cell position. Each image draws
/// its own base colour, grating colour direction, contrast and per-cell phase,
/// plus pixel noise, so colour statistics shared across tiles carry no
/// position information.
struct SynthConfig {
  int size = 112;
  int grid = 3;
  double noise = 0.03;
  double contrast_lo = 0.12;
  double contrast_hi = 0.3;
};

/// Orientation (radians) and period (pixels) of the grating family `family`.
struct Grating {
  double orientation;
  double period;
};
Grating grating_family(int family, int families);

Image synth_image(const SynthConfig& cfg, std::uint64_t seed);
Dataset synth_dataset(std::size_t count, const SynthConfig& cfg, std::uint64_t seed);

/// Single-patch classification data: label = grating family, patch drawn with
/// the same nuisance model as synth_image.
struct LabeledTiles {
  std::vector<Tensor<float>> tiles;  // normalized [C, tile, tile]
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

LabeledTiles synth_transfer_set(std::size_t count, const SynthConfig& cfg, const PuzzleConfig& puzzle,
                                std::uint64_t seed);

/// Writes `count` PPM images, manifest.txt and norm.txt into `dir`.
void write_synth_dataset(const std::filesystem::path& dir, std::size_t count, const SynthConfig& cfg,
                         std::uint64_t seed);

}  // namespace jigsaw
