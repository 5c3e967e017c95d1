#include <gtest/gtest.h>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "jigsaw/imagepipe.hpp"
#include "test_util.hpp"

using namespace jigsaw;

namespace {

// Single-channel image whose pixel (r, c) stores (r * w + c) / (h * w), so any
// pixel value identifies its source coordinates.
Image coordinate_image(int h, int w) {
  Image img(h, w, 1);
  const float total = static_cast<float>(h) * static_cast<float>(w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.planes[0](r, c) = static_cast<float>(r * w + c) / total;
  return img;
}

std::pair<int, int> decode(float v, int h, int w) {
  const long idx = std::lround(static_cast<double>(v) * h * w);
  return {static_cast<int>(idx / w), static_cast<int>(idx % w)};
}

Image constant_image(int h, int w, int channels, float v) {
  Image img(h, w, channels);
  for (auto& p : img.planes) p.setConstant(v);
  return img;
}

double chi_square(const std::vector<int>& counts, double expected) {
  double chi2 = 0.0;
  for (const int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  return chi2;
}

// No-resize geometry on a 225 px crop with the default 75/64 cells.
PuzzleConfig unscaled_defaults() {
  PuzzleConfig cfg;
  cfg.resize_target = 225;
  return cfg;
}

}  // namespace

TEST(PuzzleConfig, Validation) {
  EXPECT_NO_THROW(PuzzleConfig{}.validate());
  EXPECT_NO_THROW(PuzzleConfig::toy().validate());
  PuzzleConfig bad;
  bad.tile = 80;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PuzzleConfig{};
  bad.cell = 74;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PuzzleConfig{};
  bad.resize_target = 200;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Resize, Examples) {
  const Image square = coordinate_image(256, 256);
  EXPECT_EQ(resize_shorter_side(square, 256), square);

  const Image tall = resize_shorter_side(constant_image(1024, 512, 3, 0.2f), 256);
  EXPECT_EQ(tall.height(), 512);
  EXPECT_EQ(tall.width(), 256);

  const Image wide = resize_shorter_side(constant_image(300, 400, 1, 0.2f), 256);
  EXPECT_EQ(wide.height(), 256);
  EXPECT_EQ(wide.width(), 341);

  EXPECT_THROW(resize_shorter_side(Image{}, 256), std::invalid_argument);
}

TEST(Resize, ConstantImageStaysConstant) {
  const Image out = resize_shorter_side(constant_image(97, 131, 3, 0.375f), 64);
  for (const auto& p : out.planes) EXPECT_TRUE((p == 0.375f).all());
}

TEST(Resize, StaysWithinInputRange) {
  const Image out = resize_shorter_side(coordinate_image(40, 60), 97);
  EXPECT_GE(out.planes[0].minCoeff(), 0.0f);
  EXPECT_LE(out.planes[0].maxCoeff(), 1.0f);
}

TEST(CenterCrop, Examples) {
  const Image square = coordinate_image(256, 256);
  EXPECT_EQ(center_crop_to_square(square, 256), square);

  const Image wide = coordinate_image(256, 512);
  const Image out = center_crop_to_square(wide, 256);
  ASSERT_EQ(out.width(), 256);
  EXPECT_EQ(decode(out.planes[0](0, 0), 256, 512), std::make_pair(0, 128));
  EXPECT_EQ(decode(out.planes[0](255, 255), 256, 512), std::make_pair(255, 383));

  EXPECT_THROW(center_crop_to_square(coordinate_image(255, 256), 256), std::invalid_argument);
}

TEST(RandomCrop, SinglePlacementIsIdentity) {
  Rng rng(1);
  const Image img = coordinate_image(225, 225);
  EXPECT_EQ(random_crop(img, 225, rng), img);
}

TEST(RandomCrop, OffsetsUniform) {
  const Image img = coordinate_image(256, 256);
  Rng rng(2024);
  std::vector<int> rows(32, 0), cols(32, 0);
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const Image c = random_crop(img, 225, rng);
    const auto [r0, c0] = decode(c.planes[0](0, 0), 256, 256);
    ASSERT_GE(r0, 0);
    ASSERT_LE(r0, 31);
    ASSERT_GE(c0, 0);
    ASSERT_LE(c0, 31);
    ++rows[static_cast<std::size_t>(r0)];
    ++cols[static_cast<std::size_t>(c0)];
  }
  EXPECT_LT(chi_square(rows, kDraws / 32.0), 52.19);  // 31 dof, 1%
  EXPECT_LT(chi_square(cols, kDraws / 32.0), 52.19);
}

TEST(RandomCrop, DeterministicPerSeed) {
  const Image img = coordinate_image(256, 300);
  Rng a(77), b(77);
  EXPECT_EQ(random_crop(img, 225, a), random_crop(img, 225, b));
  EXPECT_THROW(random_crop(coordinate_image(200, 300), 225, a), std::invalid_argument);
}

TEST(ExtractTiles, TileEqualsCellGivesZeroGaps) {
  PuzzleConfig cfg = unscaled_defaults();
  cfg.tile = 75;
  Rng rng(3);
  const auto ex = extract_tiles(coordinate_image(225, 225), cfg, rng);
  for (const int g : adjacent_gaps(ex.offsets, cfg)) EXPECT_EQ(g, 0);
}

TEST(ExtractTiles, TilesAreSubWindowsOfTheirCell) {
  const PuzzleConfig cfg = unscaled_defaults();
  const Image img = coordinate_image(225, 225);
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ex = extract_tiles(img, cfg, rng);
    ASSERT_EQ(ex.tiles.size(), 9u);
    for (int k = 0; k < 9; ++k) {
      const Image& t = ex.tiles[static_cast<std::size_t>(k)];
      ASSERT_EQ(t.height(), 64);
      ASSERT_EQ(t.width(), 64);
      const auto [r0, c0] = decode(t.planes[0](0, 0), 225, 225);
      const int cell_r = (k / 3) * 75, cell_c = (k % 3) * 75;
      EXPECT_GE(r0, cell_r);
      EXPECT_GE(c0, cell_c);
      EXPECT_LE(r0 + 64, cell_r + 75);
      EXPECT_LE(c0 + 64, cell_c + 75);
      for (int i = 0; i < 64; i += 9)
        for (int j = 0; j < 64; j += 7) EXPECT_EQ(decode(t.planes[0](i, j), 225, 225), std::make_pair(r0 + i, c0 + j));
    }
  }
}

TEST(ExtractTiles, GapStatistics) {
  const PuzzleConfig cfg = unscaled_defaults();
  const Image img = constant_image(225, 225, 1, 0.5f);
  Rng rng(17);
  int lo = 1000, hi = -1000;
  double sum = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 10000; ++i) {
    for (const int g : adjacent_gaps(extract_tiles(img, cfg, rng).offsets, cfg)) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
      sum += g;
      ++n;
    }
  }
  EXPECT_EQ(lo, 0);
  EXPECT_EQ(hi, 22);
  EXPECT_NEAR(sum / static_cast<double>(n), 11.0, 0.5);
}

TEST(ExtractTiles, RejectsWrongCropSize) {
  Rng rng(0);
  EXPECT_THROW(extract_tiles(coordinate_image(224, 225), unscaled_defaults(), rng), std::invalid_argument);
}

TEST(ExtractTiles, ReassemblyWithFullCells) {
  PuzzleConfig cfg = unscaled_defaults();
  cfg.tile = 75;
  const Image img = coordinate_image(225, 225);
  Rng rng(4);
  const auto ex = extract_tiles(img, cfg, rng);
  Image whole(225, 225, 1);
  for (int k = 0; k < 9; ++k)
    whole.planes[0].block((k / 3) * 75, (k % 3) * 75, 75, 75) = ex.tiles[static_cast<std::size_t>(k)].planes[0];
  EXPECT_EQ(whole, img);
}

TEST(Normalize, Examples) {
  PuzzleConfig cfg;
  const Image tile = coordinate_image(8, 8);
  const auto same = normalize(tile, cfg);
  EXPECT_TRUE(same.values().isApprox(Eigen::Map<const Eigen::VectorXf>(tile.planes[0].data(), 64)));

  cfg.mean = {0.5f, 0.5f, 0.5f};
  EXPECT_TRUE(normalize(constant_image(4, 4, 3, 0.5f), cfg).values().isZero());

  cfg.stddev = {0.25f, 0.25f, 0.25f};
  const auto two = normalize(constant_image(2, 2, 3, 1.0f), cfg);
  for (Index i = 0; i < two.size(); ++i) EXPECT_FLOAT_EQ(two[i], 2.0f);

  cfg.stddev = {0.25f, 0.0f, 0.25f};
  EXPECT_THROW(normalize(constant_image(2, 2, 3, 1.0f), cfg), std::invalid_argument);
}

TEST(OneHot, Example) {
  const auto v = one_hot(63, 100);
  ASSERT_EQ(v.size(), 100);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(v[i], i == 63 ? 1.0f : 0.0f);
  EXPECT_THROW(one_hot(100, 100), std::invalid_argument);
}

namespace {

// Tile k of an unscaled puzzle over coordinate_image(225, 225) -> source cell index.
int source_cell(const Tensor<float>& tile) {
  const auto [r, c] = decode(tile[0], 225, 225);
  return (r / 75) * 3 + c / 75;
}

}  // namespace

TEST(MakePuzzle, IdentityPermutationKeepsRasterOrder) {
  const PermutationSet set({Permutation::identity(9), Permutation({2, 1, 3, 4, 5, 6, 7, 8, 9})}, 3, Objective::max, 0);
  const Image img = coordinate_image(225, 225);
  const auto s = make_puzzle_with_label(img, set, unscaled_defaults(), 12, 0);
  for (int k = 0; k < 9; ++k) EXPECT_EQ(source_cell(s.tiles[static_cast<std::size_t>(k)]), k);
}

TEST(MakePuzzle, InverseRestoresOrder) {
  const auto set = generate_permutation_set(20, 3, Objective::max, 5);
  const Image img = coordinate_image(225, 225);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = make_puzzle(img, set, unscaled_defaults(), seed, "x");
    ASSERT_EQ(s.tiles.size(), 9u);
    for (const auto& t : s.tiles) EXPECT_EQ(t.shape(), (Shape{1, 64, 64}));
    ASSERT_GE(s.label, 0);
    ASSERT_LT(s.label, 20);
    const auto& p = set[static_cast<std::size_t>(s.label)];
    for (int i = 0; i < 9; ++i) EXPECT_EQ(source_cell(s.tiles[static_cast<std::size_t>(i)]), p[i] - 1);
    const auto restored = apply_permutation(invert(p), s.tiles);
    for (int k = 0; k < 9; ++k) EXPECT_EQ(source_cell(restored[static_cast<std::size_t>(k)]), k);
  }
}

TEST(MakePuzzle, ReplayIsBitIdentical) {
  const auto set = generate_permutation_set(8, 3, Objective::max, 1);
  const Image img = coordinate_image(300, 260);
  const auto a = make_puzzle(img, set, PuzzleConfig{}, 99, "img");
  const auto b = make_puzzle(img, set, PuzzleConfig{}, 99, "img");
  EXPECT_EQ(a.label, b.label);
  EXPECT_EQ(a.tiles, b.tiles);
  EXPECT_EQ(a.rng_trace, 99u);
  EXPECT_EQ(a.source_id, "img");
}

TEST(MakePuzzle, LabelIsFirstDraw) {
  const auto set = generate_permutation_set(100, 3, Objective::max, 1);
  const Image img = constant_image(120, 120, 3, 0.5f);
  for (std::uint64_t seed = 0; seed < 30; ++seed)
    EXPECT_EQ(make_puzzle(img, set, PuzzleConfig::toy(), seed).label, draw_puzzle_label(seed, 100));
}

TEST(MakePuzzle, LabelsUniform) {
  std::vector<int> counts(100, 0);
  for (std::uint64_t i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(draw_puzzle_label(sample_seed(3, 0, i), 100))];
  EXPECT_LT(chi_square(counts, 1000.0), 134.64);  // 99 dof, 1%
}

TEST(MakePuzzle, GridMismatchRejected) {
  const auto set = generate_permutation_set(4, 2, Objective::max, 1);
  EXPECT_THROW(make_puzzle(coordinate_image(256, 256), set, PuzzleConfig{}, 1), std::invalid_argument);
}

TEST(Dataset, ManifestRoundTripPnmAndPng) {
  TempDir dir("imagepipe");
  Image rgb(20, 30, 3);
  for (int c = 0; c < 3; ++c) rgb.planes[static_cast<std::size_t>(c)].setConstant(static_cast<float>(c * 100) / 255.0f);
  write_pnm(rgb, dir / "a.ppm");
  write_pnm(coordinate_image(16, 16), dir / "b.pgm");

  std::vector<unsigned char> pixels(12 * 10 * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned char>(i % 251);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = 10;
  png.height = 12;
  png.format = PNG_FORMAT_RGB;
  ASSERT_TRUE(png_image_write_to_file(&png, (dir / "c.png").c_str(), 0, pixels.data(), 0, nullptr));

  write_manifest(dir / "manifest.txt", {"a.ppm", "# comment", "", "b.pgm", "c.png"});
  const auto paths = read_manifest(dir / "manifest.txt");
  ASSERT_EQ(paths.size(), 3u);

  const Image a = read_image(paths[0]);
  ASSERT_EQ(a.channels(), 3);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_LT((a.planes[c] - rgb.planes[c]).abs().maxCoeff(), 1e-6f);
  const Image c = read_image(paths[2]);
  ASSERT_EQ(c.channels(), 3);
  EXPECT_EQ(c.height(), 12);
  EXPECT_NEAR(c.planes[1](0, 0), 1.0 / 255.0, 1e-7);
  EXPECT_NEAR(c.planes[0](1, 0), 30.0 / 255.0, 1e-7);

  const Dataset d = load_dataset(dir / "manifest.txt", 8);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.ids[0], "a.ppm");
  EXPECT_EQ(d.images[0].height(), 8);
  EXPECT_EQ(d.images[0].width(), 12);

  EXPECT_THROW(load_dataset(dir / "missing.txt", 8), std::runtime_error);
}

TEST(Normalization, ComputeAndRoundTrip) {
  Dataset d;
  Image img(2, 2, 3);
  img.planes[0] << 0.0f, 1.0f, 0.0f, 1.0f;
  img.planes[1].setConstant(0.25f);
  img.planes[2] << 0.2f, 0.2f, 0.6f, 0.6f;
  d.add(img, "x");
  const auto n = compute_normalization(d);
  EXPECT_NEAR(n.mean[0], 0.5, 1e-6);
  EXPECT_NEAR(n.stddev[0], 0.5, 1e-6);
  EXPECT_NEAR(n.mean[1], 0.25, 1e-6);
  EXPECT_NEAR(n.mean[2], 0.4, 1e-6);
  EXPECT_NEAR(n.stddev[2], 0.2, 1e-6);

  TempDir dir("norm");
  save_normalization(n, dir / "norm.txt");
  const auto back = load_normalization(dir / "norm.txt");
  EXPECT_EQ(back.mean, n.mean);
  EXPECT_EQ(back.stddev, n.stddev);
  EXPECT_THROW(compute_normalization(Dataset{}), std::invalid_argument);
}
