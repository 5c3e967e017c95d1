#include "jigsaw/imagepipe.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace jigsaw {

void PuzzleConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("PuzzleConfig: " + what); };
  if (grid < 2) fail("grid must be >= 2");
  if (cell < 1 || tile < 1) fail("cell and tile must be positive");
  if (grid * cell != crop) fail("grid * cell must equal crop");
  if (tile > cell) fail("tile must not exceed cell");
  if (resize_target < crop) fail("resize_target must be >= crop");
  if (mean.empty() || mean.size() != stddev.size()) fail("mean/std must be non-empty and equal length");
  for (const float s : stddev)
    if (!(s > 0.0f)) fail("std must be positive");
}

PuzzleConfig PuzzleConfig::toy() {
  PuzzleConfig c;
  c.resize_target = 112;
  c.crop = 108;
  c.grid = 3;
  c.cell = 36;
  c.tile = 32;
  return c;
}

Image resize_shorter_side(const Image& img, int target) {
  const int h = img.height(), w = img.width();
  if (h < 1 || w < 1) throw std::invalid_argument("resize_shorter_side: zero-area image");
  if (target < 1) throw std::invalid_argument("resize_shorter_side: target must be positive");
  const std::int64_t shorter = std::min(h, w), longer = std::max(h, w);
  // round half up of longer * target / shorter
  const auto scaled = static_cast<int>((2 * longer * target + shorter) / (2 * shorter));
  const int nh = h <= w ? target : scaled;
  const int nw = h <= w ? scaled : target;
  if (nh == h && nw == w) return img;

  // Half-pixel-centre bilinear sampling with edge clamping.
  auto taps = [](int out, int in) {
    std::vector<std::pair<int, float>> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int i0 = std::min(static_cast<int>(src), in - 1);
      t[static_cast<std::size_t>(i)] = {i0, static_cast<float>(src - i0)};
    }
    return t;
  };
  const auto ty = taps(nh, h), tx = taps(nw, w);
  Image out(nh, nw, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const Plane& src = img.planes[static_cast<std::size_t>(c)];
    Plane& dst = out.planes[static_cast<std::size_t>(c)];
    for (int y = 0; y < nh; ++y) {
      const auto [y0, fy] = ty[static_cast<std::size_t>(y)];
      const int y1 = std::min(y0 + 1, h - 1);
      for (int x = 0; x < nw; ++x) {
        const auto [x0, fx] = tx[static_cast<std::size_t>(x)];
        const int x1 = std::min(x0 + 1, w - 1);
        const float top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
        const float bot = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
        dst(y, x) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

Image center_crop_to_square(const Image& img, int side) {
  if (img.height() < side || img.width() < side)
    throw std::invalid_argument("center_crop_to_square: image smaller than " + std::to_string(side));
  return img.crop((img.height() - side) / 2, (img.width() - side) / 2, side, side);
}

Image random_crop(const Image& img, int side, Rng& rng) {
  if (img.height() < side || img.width() < side)
    throw std::invalid_argument("random_crop: image smaller than " + std::to_string(side));
  const auto top = static_cast<int>(rng.uniform_int(0, img.height() - side));
  const auto left = static_cast<int>(rng.uniform_int(0, img.width() - side));
  return img.crop(top, left, side, side);
}

TileExtraction extract_tiles(const Image& img, const PuzzleConfig& cfg, Rng& rng) {
  if (img.height() != cfg.crop || img.width() != cfg.crop)
    throw std::invalid_argument("extract_tiles: expected a " + std::to_string(cfg.crop) + "x" +
                                std::to_string(cfg.crop) + " crop");
  TileExtraction out;
  const int slack = cfg.cell - cfg.tile;
  for (int r = 0; r < cfg.grid; ++r)
    for (int c = 0; c < cfg.grid; ++c) {
      TileOffset off;
      off.dy = static_cast<int>(rng.uniform_int(0, slack));
      off.dx = static_cast<int>(rng.uniform_int(0, slack));
      out.tiles.push_back(img.crop(r * cfg.cell + off.dy, c * cfg.cell + off.dx, cfg.tile, cfg.tile));
      out.offsets.push_back(off);
    }
  return out;
}

std::vector<int> adjacent_gaps(const std::vector<TileOffset>& offsets, const PuzzleConfig& cfg) {
  const int g = cfg.grid;
  if (static_cast<int>(offsets.size()) != g * g) throw std::invalid_argument("adjacent_gaps: wrong offset count");
  std::vector<int> gaps;
  auto at = [&](int r, int c) { return offsets[static_cast<std::size_t>(r * g + c)]; };
  for (int r = 0; r < g; ++r)
    for (int c = 0; c + 1 < g; ++c) gaps.push_back(cfg.cell + at(r, c + 1).dx - at(r, c).dx - cfg.tile);
  for (int r = 0; r + 1 < g; ++r)
    for (int c = 0; c < g; ++c) gaps.push_back(cfg.cell + at(r + 1, c).dy - at(r, c).dy - cfg.tile);
  return gaps;
}

Tensor<float> normalize(const Image& tile, const PuzzleConfig& cfg) {
  const int ch = tile.channels();
  if (static_cast<int>(cfg.mean.size()) < ch || static_cast<int>(cfg.stddev.size()) < ch)
    throw std::invalid_argument("normalize: config has fewer mean/std entries than channels");
  const Index h = tile.height(), w = tile.width();
  Tensor<float> t({ch, h, w});
  auto m = t.matrix(ch);
  for (int c = 0; c < ch; ++c) {
    const float sd = cfg.stddev[static_cast<std::size_t>(c)];
    if (!(sd != 0.0f)) throw std::invalid_argument("normalize: std is zero");
    const Plane& p = tile.planes[static_cast<std::size_t>(c)];
    m.row(c) = (Eigen::Map<const Eigen::RowVectorXf>(p.data(), h * w).array() - cfg.mean[static_cast<std::size_t>(c)]) / sd;
  }
  return t;
}

PuzzleSample make_puzzle_with_label(const Image& img, const PermutationSet& set, const PuzzleConfig& cfg,
                                    std::uint64_t seed, int label, std::string source_id) {
  if (set.grid() != cfg.grid) throw std::invalid_argument("make_puzzle: permutation set grid does not match config");
  if (label < 0 || static_cast<std::size_t>(label) >= set.size())
    throw std::invalid_argument("make_puzzle: label out of range");
  Rng rng(seed);
  (void)rng.uniform_index(set.size());  // keeps the stream aligned with make_puzzle
  const Image resized = resize_shorter_side(img, cfg.resize_target);
  const Image window = random_crop(resized, cfg.crop, rng);
  const TileExtraction ex = extract_tiles(window, cfg, rng);
  const auto shuffled = apply_permutation(set[static_cast<std::size_t>(label)], ex.tiles);
  PuzzleSample s;
  s.tiles.reserve(shuffled.size());
  for (const auto& t : shuffled) s.tiles.push_back(normalize(t, cfg));
  s.label = label;
  s.source_id = std::move(source_id);
  s.rng_trace = seed;
  return s;
}

PuzzleSample make_puzzle(const Image& img, const PermutationSet& set, const PuzzleConfig& cfg, std::uint64_t seed,
                         std::string source_id) {
  return make_puzzle_with_label(img, set, cfg, seed, draw_puzzle_label(seed, set.size()), std::move(source_id));
}

int draw_puzzle_label(std::uint64_t seed, std::size_t set_size) {
  Rng rng(seed);
  return static_cast<int>(rng.uniform_index(set_size));
}

Vector<float> one_hot(int label, int num_classes) {
  if (label < 0 || label >= num_classes) throw std::invalid_argument("one_hot: label out of range");
  Vector<float> v = Vector<float>::Zero(num_classes);
  v[label] = 1.0f;
  return v;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(base / line);
  }
  return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<std::string>& relative_paths) {
  std::ofstream os(manifest);
  if (!os) throw std::runtime_error("cannot open " + manifest.string() + " for writing");
  for (const auto& p : relative_paths) os << p << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest, int resize_target) {
  Dataset d;
  for (const auto& p : read_manifest(manifest)) d.add(resize_shorter_side(read_image(p), resize_target), p.filename().string());
  if (d.size() == 0) throw std::runtime_error("manifest " + manifest.string() + " lists no images");
  return d;
}

Normalization compute_normalization(const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("compute_normalization: empty dataset");
  const int ch = data.images.front().channels();
  std::vector<double> sum(static_cast<std::size_t>(ch), 0.0), sq(static_cast<std::size_t>(ch), 0.0);
  double count = 0.0;
  for (const auto& img : data.images) {
    if (img.channels() != ch) throw std::invalid_argument("compute_normalization: mixed channel counts");
    for (int c = 0; c < ch; ++c) {
      const auto& p = img.planes[static_cast<std::size_t>(c)];
      sum[static_cast<std::size_t>(c)] += p.cast<double>().sum();
      sq[static_cast<std::size_t>(c)] += p.cast<double>().square().sum();
    }
    count += static_cast<double>(img.height()) * img.width();
  }
  Normalization n;
  for (int c = 0; c < ch; ++c) {
    const double mu = sum[static_cast<std::size_t>(c)] / count;
    const double var = std::max(sq[static_cast<std::size_t>(c)] / count - mu * mu, 0.0);
    n.mean.push_back(static_cast<float>(mu));
    n.stddev.push_back(static_cast<float>(std::max(std::sqrt(var), 1e-6)));
  }
  return n;
}

void save_normalization(const Normalization& n, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(9);
  os << "mean";
  for (const float v : n.mean) os << ' ' << v;
  os << "\nstd";
  for (const float v : n.stddev) os << ' ' << v;
  os << '\n';
}

Normalization load_normalization(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open normalization file " + path.string());
  Normalization n;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<float>* dst = key == "mean" ? &n.mean : key == "std" ? &n.stddev : nullptr;
    if (!dst) throw std::runtime_error(path.string() + ": unknown key '" + key + "'");
    float v;
    while (ls >> v) dst->push_back(v);
  }
  if (n.mean.empty() || n.mean.size() != n.stddev.size())
    throw std::runtime_error(path.string() + ": expected 'mean' and 'std' lines of equal length");
  return n;
}

}  // namespace jigsaw
