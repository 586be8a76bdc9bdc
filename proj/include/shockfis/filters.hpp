#pragma once

// Raster filtering primitives on plain row-major double buffers.
//
// Borders use half-sample symmetric reflection: (d c b a | a b c d | d c b a),
// the edge sample is repeated. Windows wider than the raster keep folding.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "shockfis/error.hpp"

namespace shockfis {

inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

/// Plain 2-D correlation with reflect padding. `kernel` is ksize x ksize, row-major.
inline std::vector<double> correlate2d(std::span<const double> src, std::size_t width,
                                       std::size_t height, std::span<const double> kernel,
                                       std::size_t ksize) {
  const auto half = static_cast<std::ptrdiff_t>(ksize / 2);
  std::vector<double> out(width * height, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t ky = 0; ky < ksize; ++ky) {
        const std::size_t sy =
            reflect_index(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(ky) - half, height);
        for (std::size_t kx = 0; kx < ksize; ++kx) {
          const std::size_t sx =
              reflect_index(static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(kx) - half, width);
          acc += kernel[ky * ksize + kx] * src[sy * width + sx];
        }
      }
      out[y * width + x] = acc;
    }
  }
  return out;
}

/// Separable correlation: rows with `kx`, then columns with `ky` (both odd length).
inline std::vector<double> separable_filter(std::span<const double> src, std::size_t width,
                                            std::size_t height, std::span<const double> kx,
                                            std::span<const double> ky) {
  const auto hx = static_cast<std::ptrdiff_t>(kx.size() / 2);
  const auto hy = static_cast<std::ptrdiff_t>(ky.size() / 2);
  std::vector<double> tmp(width * height, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    const double* row = src.data() + y * width;
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kx.size(); ++k) {
        acc += kx[k] * row[reflect_index(static_cast<std::ptrdiff_t>(x + k) - hx, width)];
      }
      tmp[y * width + x] = acc;
    }
  }
  std::vector<double> out(width * height, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ky.size(); ++k) {
        acc += ky[k] * tmp[reflect_index(static_cast<std::ptrdiff_t>(y + k) - hy, height) * width + x];
      }
      out[y * width + x] = acc;
    }
  }
  return out;
}

/// Mean over a size x size window (size odd), reflect padding.
inline std::vector<double> uniform_filter(std::span<const double> src, std::size_t width,
                                          std::size_t height, std::size_t size) {
  if (size == 0 || size % 2 == 0) throw UsageError("uniform_filter: kernel size must be odd and >= 1");
  const std::vector<double> k(size, 1.0 / static_cast<double>(size));
  return separable_filter(src, width, height, k, k);
}

/// Normalized 1-D Gaussian taps of the given odd length.
inline std::vector<double> gaussian_kernel_1d(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw UsageError("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw UsageError("gaussian sigma must be > 0");
  std::vector<double> k(size);
  const double c = static_cast<double>(size / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace shockfis
