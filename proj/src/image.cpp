#include "jigsaw/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace jigsaw {

Image::Image(int height, int width, int channels) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3))
    throw std::invalid_argument("Image: bad dimensions " + std::to_string(height) + "x" + std::to_string(width) +
                                "x" + std::to_string(channels));
  planes.assign(static_cast<std::size_t>(channels), Plane::Zero(height, width));
}

Image Image::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > height() || left + w > width())
    throw std::invalid_argument("Image::crop: window outside image");
  Image out;
  out.planes.reserve(planes.size());
  for (const auto& p : planes) out.planes.emplace_back(p.block(top, left, h, w));
  return out;
}

bool operator==(const Image& a, const Image& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) return false;
  for (std::size_t c = 0; c < a.planes.size(); ++c)
    if (!(a.planes[c] == b.planes[c]).all()) return false;
  return true;
}

namespace {

int read_pnm_int(std::istream& is) {
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = is.get();
  }
  if (c == EOF || !std::isdigit(c)) throw std::runtime_error("PNM: malformed header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = is.get();
  }
  return v;  // the single whitespace after the value has been consumed
}

Image from_interleaved(const unsigned char* data, int h, int w, int channels, float scale) {
  Image img(h, w, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[static_cast<std::size_t>(c)](y, x) =
            static_cast<float>(data[(static_cast<std::size_t>(y) * w + x) * channels + c]) * scale;
  return img;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[2];
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw std::runtime_error(path.string() + ": not a binary PPM/PGM");
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_pnm_int(is);
  const int h = read_pnm_int(is);
  const int maxval = read_pnm_int(is);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw std::runtime_error(path.string() + ": unsupported PNM dimensions or maxval");
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * channels);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!is) throw std::runtime_error(path.string() + ": truncated pixel data");
  return from_interleaved(data.data(), h, w, channels, 1.0f / static_cast<float>(maxval));
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error(path.string() + ": " + png.message);
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> data(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, data.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error(path.string() + ": " + png.message);
  }
  return from_interleaved(data.data(), static_cast<int>(png.height), static_cast<int>(png.width), gray ? 1 : 3,
                          1.0f / 255.0f);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  return read_pnm(path);
}

void write_pnm(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) throw std::invalid_argument("write_pnm: need 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << (img.channels() == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const float v = std::clamp(img.planes[static_cast<std::size_t>(c)](y, x), 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * img.channels() + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace jigsaw
