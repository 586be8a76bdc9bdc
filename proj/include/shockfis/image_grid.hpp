#pragma once

// Grayscale raster type, PGM I/O and min-max normalization.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/text_io.hpp"

namespace shockfis {

/// Row-major grayscale raster with every intensity in [0,1].
///
/// Immutable once built; the constructor validates the size and the value
/// range, so any ImageGrid in hand is known to be well formed.
class ImageGrid {
 public:
  ImageGrid() = default;

  ImageGrid(std::size_t width, std::size_t height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width_ == 0 || height_ == 0) throw DataError("ImageGrid: zero dimension");
    if (data_.size() != width_ * height_) {
      throw DataError("ImageGrid: data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(width_) + "x" + std::to_string(height_));
    }
    for (double v : data_) {
      // Negated comparison also rejects NaN.
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError("ImageGrid: intensity outside [0,1]: " + std::to_string(v));
      }
    }
  }

  static ImageGrid filled(std::size_t width, std::size_t height, double value) {
    return ImageGrid(width, height, std::vector<double>(width * height, value));
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double at(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const ImageGrid& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DataError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) +
                    "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()) + ")");
  }
}

// ---------------------------------------------------------------------------
// Normalization

/// Linear map of the values onto [0,1]. A constant input maps to all zeros.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw DataError("minmax_normalize: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw DataError("minmax_normalize: non-finite input");
  std::vector<double> out(values.size(), 0.0);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out[i] = std::clamp((values[i] - lo) / range, 0.0, 1.0);
    }
  }
  return out;
}

inline ImageGrid minmax_normalize(const ImageGrid& img) {
  return ImageGrid(img.width(), img.height(), minmax_normalize(img.values()));
}

// ---------------------------------------------------------------------------
// PGM

class PgmError : public DataError {
 public:
  enum class Kind { Io, BadMagic, BadHeader, BadMaxval, Truncated };

  PgmError(Kind kind, const std::string& message) : DataError(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

// Reads the next whitespace-delimited header token, skipping '#' comments.
inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n' && c != '\r') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return tok;
}

inline std::size_t pgm_header_number(std::istream& in, const char* field, const std::string& path) {
  const std::string tok = pgm_token(in);
  if (tok.empty()) {
    throw PgmError(PgmError::Kind::BadHeader, "PGM '" + path + "': missing " + field);
  }
  for (char ch : tok) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) {
      throw PgmError(PgmError::Kind::BadHeader,
                     "PGM '" + path + "': bad " + field + " '" + tok + "'");
    }
  }
  if (tok.size() > 9) {
    throw PgmError(PgmError::Kind::BadHeader, "PGM '" + path + "': " + field + " too large");
  }
  return static_cast<std::size_t>(std::stoul(tok));
}

}  // namespace detail

/// Parses a P5 (binary) or P2 (ASCII) PGM from a stream. Sample v maps to v/maxval.
inline ImageGrid read_pgm(std::istream& in, const std::string& name = "<stream>") {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2')) {
    throw PgmError(PgmError::Kind::BadMagic,
                   "PGM '" + name + "': unsupported format (expected magic P5 or P2)");
  }
  const bool binary = magic[1] == '5';
  const std::size_t width = detail::pgm_header_number(in, "width", name);
  const std::size_t height = detail::pgm_header_number(in, "height", name);
  const std::size_t maxval = detail::pgm_header_number(in, "maxval", name);
  if (width == 0 || height == 0) {
    throw PgmError(PgmError::Kind::BadHeader, "PGM '" + name + "': zero dimension");
  }
  if (maxval < 1 || maxval > 255) {
    throw PgmError(PgmError::Kind::BadMaxval,
                   "PGM '" + name + "': maxval " + std::to_string(maxval) + " outside [1,255]");
  }
  const std::size_t count = width * height;
  const double scale = static_cast<double>(maxval);
  std::vector<double> data(count);
  if (binary) {
    // pgm_token consumed exactly one whitespace byte after maxval.
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
      throw PgmError(PgmError::Kind::Truncated,
                     "PGM '" + name + "': truncated pixel payload (" + std::to_string(in.gcount()) +
                         " of " + std::to_string(count) + " bytes)");
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (bytes[i] > maxval) {
        throw PgmError(PgmError::Kind::BadHeader, "PGM '" + name + "': sample exceeds maxval");
      }
      data[i] = bytes[i] / scale;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string tok = detail::pgm_token(in);
      if (tok.empty()) {
        throw PgmError(PgmError::Kind::Truncated,
                       "PGM '" + name + "': truncated pixel payload (" + std::to_string(i) +
                           " of " + std::to_string(count) + " samples)");
      }
      const auto v = parse_int<unsigned>(tok, "PGM sample");
      if (v > maxval) {
        throw PgmError(PgmError::Kind::BadHeader, "PGM '" + name + "': sample exceeds maxval");
      }
      data[i] = v / scale;
    }
  }
  return ImageGrid(width, height, std::move(data));
}

inline ImageGrid load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError(PgmError::Kind::Io, "cannot open '" + path + "'");
  return read_pgm(in, path);
}

/// Intensity t -> byte floor(t*255 + 0.5).
inline std::uint8_t quantize_byte(double t) noexcept {
  return static_cast<std::uint8_t>(std::floor(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5));
}

inline std::string encode_pgm(const ImageGrid& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[header + i] = static_cast<char>(quantize_byte(img[i]));
  }
  return out;
}

inline void save_pgm(const ImageGrid& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PgmError(PgmError::Kind::Io, "cannot open '" + path + "' for writing");
  const std::string bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PgmError(PgmError::Kind::Io, "write failed: '" + path + "'");
}

// ---------------------------------------------------------------------------
// Full-precision raster dump
//
//   RASTER v1 <width> <height>
//   <width values>          (one line per row, shortest round-trip decimals)

inline std::string encode_raster_text(const ImageGrid& img) {
  std::string out = "RASTER v1 " + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n";
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      if (x) out += ' ';
      out += format_exact(img.at(x, y));
    }
    out += '\n';
  }
  return out;
}

inline ImageGrid decode_raster_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version;
  std::size_t width = 0, height = 0;
  if (!(in >> magic >> version >> width >> height) || magic != "RASTER" || version != "v1") {
    throw DataError("raster dump: bad header");
  }
  std::vector<double> data;
  data.reserve(width * height);
  std::string tok;
  while (in >> tok) data.push_back(parse_double(tok, "raster dump"));
  return ImageGrid(width, height, std::move(data));
}

inline void save_raster_text(const ImageGrid& img, const std::string& path) {
  write_text_file(path, encode_raster_text(img));
}

inline ImageGrid load_raster_text(const std::string& path) {
  return decode_raster_text(read_text_file(path));
}

}  // namespace shockfis
