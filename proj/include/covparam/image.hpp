#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "covparam/common.hpp"

namespace covparam {

/// Grayscale image, row-major. Loaders scale intensities to [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

inline Image make_image(int width, int height, double value = 0.0) {
  require(width > 0 && height > 0, "image dimensions must be positive");
  Image im;
  im.width = width;
  im.height = height;
  im.pixels.assign(static_cast<std::size_t>(width) * height, value);
  return im;
}

namespace detail {

// Reads the next header token of a PNM file, skipping whitespace and
// '#' comments.
inline std::string pnm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  require(!tok.empty(), "truncated PGM header: " + path);
  return tok;
}

inline int pnm_int(std::istream& is, const std::string& path) {
  const std::string tok = pnm_token(is, path);
  for (char ch : tok) require(std::isdigit(static_cast<unsigned char>(ch)), "bad PGM header token '" + tok + "': " + path);
  return std::stoi(tok);
}

}  // namespace detail

/// Loads a P2 (ASCII) or P5 (binary) portable graymap; values scaled by maxval.
inline Image load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), "cannot open: " + path);
  const std::string magic = detail::pnm_token(f, path);
  require(magic == "P2" || magic == "P5", "not a P2/P5 PGM file: " + path);
  const int w = detail::pnm_int(f, path);
  const int h = detail::pnm_int(f, path);
  const int maxval = detail::pnm_int(f, path);
  require(w > 0 && h > 0, "bad PGM dimensions: " + path);
  require(maxval > 0 && maxval < 65536, "bad PGM maxval: " + path);

  Image im = make_image(w, h);
  const std::size_t n = im.pixels.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const int v = detail::pnm_int(f, path);
      require(v <= maxval, "PGM sample exceeds maxval: " + path);
      im.pixels[i] = static_cast<double>(v) / maxval;
    }
  } else {
    // single whitespace byte separates maxval from raster data
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(n * bytes);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(f.gcount() == static_cast<std::streamsize>(raw.size()), "truncated PGM raster: " + path);
    for (std::size_t i = 0; i < n; ++i) {
      const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
      require(v <= maxval, "PGM sample exceeds maxval: " + path);
      im.pixels[i] = static_cast<double>(v) / maxval;
    }
  }
  return im;
}

/// Writes a binary (P5) 8-bit PGM; intensities clamped to [0,1].
inline void save_pgm(const std::string& path, const Image& im) {
  require(im.width > 0 && im.height > 0, "cannot save empty image");
  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open for writing: " + path);
  f << "P5\n" << im.width << " " << im.height << "\n255\n";
  std::vector<unsigned char> raw(im.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(im.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(bool(f), "write failed: " + path);
}

/// Loads a PNG as 8-bit grayscale via libpng's simplified API.
inline Image load_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw error("cannot read PNG: " + path + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw error("cannot decode PNG: " + path + ": " + msg);
  }
  Image im = make_image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = raw[i] / 255.0;
  return im;
}

/// Writes an 8-bit grayscale PNG; intensities clamped to [0,1].
inline void save_png(const std::string& path, const Image& im) {
  require(im.width > 0 && im.height > 0, "cannot save empty image");
  std::vector<unsigned char> raw(im.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(im.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(im.width);
  png.height = static_cast<png_uint_32>(im.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, raw.data(), 0, nullptr)) {
    throw error("cannot write PNG: " + path + ": " + png.message);
  }
}

/// Dispatches on file extension (.pgm / .png, case-insensitive).
inline Image load_image(const std::string& path) {
  std::string ext;
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
  }
  if (ext == "pgm") return load_pgm(path);
  if (ext == "png") return load_png(path);
  throw error("unsupported image format (expect .pgm or .png): " + path);
}

inline Image resize_bilinear(const Image& im, int new_w, int new_h) {
  require(im.width > 0 && im.height > 0, "cannot resize empty image");
  require(new_w > 0 && new_h > 0, "resize target must be positive");
  Image out = make_image(new_w, new_h);
  const double sx = static_cast<double>(im.width) / new_w;
  const double sy = static_cast<double>(im.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(im.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, im.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(im.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, im.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * im.at(x0, y0) + wx * im.at(x1, y0);
      const double bot = (1.0 - wx) * im.at(x0, y1) + wx * im.at(x1, y1);
      out.at(x, y) = (1.0 - wy) * top + wy * bot;
    }
  }
  return out;
}

}  // namespace covparam
