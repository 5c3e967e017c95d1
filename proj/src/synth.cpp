#include "jigsaw/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace jigsaw {

Grating grating_family(int family, int families) {
  // Families differ in orientation (in steps of 180/3 degrees) and period.
  const int orientations = 3;
  const int o = family % orientations;
  const int f = (family / orientations) % std::max(1, (families + orientations - 1) / orientations);
  static constexpr double periods[] = {5.0, 9.0, 15.0, 22.0};
  return {std::numbers::pi * o / orientations + 0.2, periods[f % 4]};
}

namespace {

struct Nuisance {
  double base[3];
  double direction[3];
  double contrast;
};

Nuisance draw_nuisance(const SynthConfig& cfg, Rng& rng) {
  Nuisance n{};
  double norm = 0.0;
  for (int c = 0; c < 3; ++c) {
    n.base[c] = rng.uniform(0.3, 0.7);
    n.direction[c] = rng.uniform(-1.0, 1.0);
    norm += n.direction[c] * n.direction[c];
  }
  norm = std::sqrt(std::max(norm, 1e-6));
  for (double& d : n.direction) d /= norm;
  n.contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  return n;
}

void paint(Image& img, int top, int left, int h, int w, const Grating& g, double phase, const Nuisance& n,
           double noise, Rng& rng) {
  const double kx = std::cos(g.orientation) * 2.0 * std::numbers::pi / g.period;
  const double ky = std::sin(g.orientation) * 2.0 * std::numbers::pi / g.period;
  for (int y = top; y < top + h; ++y)
    for (int x = left; x < left + w; ++x) {
      const double s = std::sin(kx * x + ky * y + phase);
      for (int c = 0; c < img.channels(); ++c) {
        const double v = n.base[c] + n.contrast * n.direction[c] * s + noise * rng.normal();
        img.planes[static_cast<std::size_t>(c)](y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
}

}  // namespace

Image synth_image(const SynthConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Image img(cfg.size, cfg.size, 3);
  const Nuisance n = draw_nuisance(cfg, rng);
  const int families = cfg.grid * cfg.grid;
  for (int r = 0; r < cfg.grid; ++r)
    for (int c = 0; c < cfg.grid; ++c) {
      const int top = r * cfg.size / cfg.grid, bottom = (r + 1) * cfg.size / cfg.grid;
      const int left = c * cfg.size / cfg.grid, right = (c + 1) * cfg.size / cfg.grid;
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      paint(img, top, left, bottom - top, right - left, grating_family(r * cfg.grid + c, families), phase, n,
            cfg.noise, rng);
    }
  return img;
}

Dataset synth_dataset(std::size_t count, const SynthConfig& cfg, std::uint64_t seed) {
  Dataset d;
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", i);
    d.add(synth_image(cfg, derive_seed(seed, {i})), id);
  }
  return d;
}

LabeledTiles synth_transfer_set(std::size_t count, const SynthConfig& cfg, const PuzzleConfig& puzzle,
                                std::uint64_t seed) {
  LabeledTiles out;
  const int families = cfg.grid * cfg.grid;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {i}));
    const int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(families)));
    const Nuisance n = draw_nuisance(cfg, rng);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Image tile(puzzle.tile, puzzle.tile, 3);
    paint(tile, 0, 0, puzzle.tile, puzzle.tile, grating_family(label, families), phase, n, cfg.noise, rng);
    out.tiles.push_back(normalize(tile, puzzle));
    out.labels.push_back(label);
  }
  return out;
}

void write_synth_dataset(const std::filesystem::path& dir, std::size_t count, const SynthConfig& cfg,
                         std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const Dataset d = synth_dataset(count, cfg, seed);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d.size(); ++i) {
    names.push_back(d.ids[i] + ".ppm");
    write_pnm(d.images[i], dir / names.back());
  }
  write_manifest(dir / "manifest.txt", names);
  save_normalization(compute_normalization(d), dir / "norm.txt");
}

}  // namespace jigsaw
