#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evifuse/errors.hpp"

// 2D grayscale raster in [0,1] plus binary PGM (P5) / PPM (P6) IO. Color
// input collapses to the green channel, where vessel contrast is maximal.

namespace evifuse {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;  // row-major, values in [0,1]

  double at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
  double& at(std::size_t x, std::size_t y) { return data[y * width + x]; }

  void validate() const {
    if (width == 0 || height == 0 || data.size() != width * height) {
      throw std::invalid_argument("image: dimensions do not match data length");
    }
    for (const double v : data) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::invalid_argument("image: values must be finite and in [0,1]");
      }
    }
  }
};

inline GrayImage make_image(std::size_t width, std::size_t height, double fill = 0.0) {
  return GrayImage{width, height, std::vector<double>(width * height, fill)};
}

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string next_pnm_token(std::istream& in, const std::string& path) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c == '#') in.unget();
  if (token.empty()) {
    throw IoError(path + ": truncated header");
  }
  return token;
}

inline std::size_t parse_pnm_number(std::istream& in, const std::string& path,
                                    const std::string& what) {
  const std::string token = next_pnm_token(in, path);
  try {
    const long long value = std::stoll(token);
    if (value <= 0) throw std::invalid_argument("non-positive");
    return static_cast<std::size_t>(value);
  } catch (const std::exception&) {
    throw IoError(path + ": invalid " + what + " '" + token + "'");
  }
}

}  // namespace detail

/// Reads an 8-bit binary PGM (P5) or PPM (P6); PPM collapses to the green
/// channel. Values map linearly from [0,255] to [0,1].
inline GrayImage read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  const std::string magic = detail::next_pnm_token(in, path);
  if (magic != "P5" && magic != "P6") {
    throw IoError(path + ": unsupported format '" + magic + "' (need binary PGM/PPM)");
  }
  const std::size_t width = detail::parse_pnm_number(in, path, "width");
  const std::size_t height = detail::parse_pnm_number(in, path, "height");
  const std::size_t maxval = detail::parse_pnm_number(in, path, "maxval");
  if (maxval != 255) {
    throw IoError(path + ": only 8-bit images supported (maxval 255)");
  }
  // exactly one whitespace byte separates the header from the raster
  const std::size_t channels = magic == "P5" ? 1 : 3;
  std::vector<unsigned char> raw(width * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw IoError(path + ": truncated pixel data");
  }
  GrayImage img = make_image(width, height);
  const std::size_t offset = channels == 3 ? 1 : 0;  // green channel of RGB triples
  for (std::size_t i = 0; i < width * height; ++i) {
    img.data[i] = static_cast<double>(raw[i * channels + offset]) / 255.0;
  }
  return img;
}

/// Writes an 8-bit binary PGM with round-half-up quantization.
inline void write_pgm(const GrayImage& img, const std::string& path) {
  img.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double q = std::floor(img.data[i] * 255.0 + 0.5);
    raw[i] = static_cast<unsigned char>(q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace evifuse
