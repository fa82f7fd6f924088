#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sample/vocab.hpp"  // DataError

namespace sample {

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, one byte per pixel
};

// Binary PGM ("P5", maxval 255). Round-trips are byte-exact.

inline void write_pgm(const std::string& path, const ImageGray& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("pgm: cannot open " + path + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("pgm: write failed for " + path);
}

namespace detail {

// Next whitespace-delimited header token, skipping '#' comment lines.
inline std::string pgm_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      if (!token.empty()) break;
    } else if (std::isspace(c)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return token;
}

}  // namespace detail

inline ImageGray read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pgm: cannot open " + path);
  if (detail::pgm_token(in) != "P5") throw DataError("pgm: " + path + " is not binary P5");
  ImageGray img;
  try {
    img.width = std::stoi(detail::pgm_token(in));
    img.height = std::stoi(detail::pgm_token(in));
    const int maxval = std::stoi(detail::pgm_token(in));
    if (maxval != 255) throw DataError("pgm: " + path + " maxval must be 255");
  } catch (const std::invalid_argument&) {
    throw DataError("pgm: malformed header in " + path);
  }
  if (img.width <= 0 || img.height <= 0) {
    throw DataError("pgm: bad dimensions in " + path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError("pgm: truncated pixel data in " + path);
  }
  return img;
}

}  // namespace sample
