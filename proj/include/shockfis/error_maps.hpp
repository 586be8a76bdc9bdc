#pragma once

// Reconstruction error maps fed to the fuzzy classifier.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/filters.hpp"
#include "shockfis/image_grid.hpp"

namespace shockfis {

enum class PixelNorm {
  PerPixel,  // |x - r| / max(x(p), r(p), eps)
  Global,    // |x - r| / max(max(x), max(r), eps)
};

inline PixelNorm parse_pixel_norm(const std::string& name) {
  if (name == "pixel" || name == "per-pixel") return PixelNorm::PerPixel;
  if (name == "global") return PixelNorm::Global;
  throw UsageError("unknown pixel-norm mode '" + name + "' (expected pixel|global)");
}

inline const char* to_string(PixelNorm mode) noexcept {
  return mode == PixelNorm::Global ? "global" : "pixel";
}

struct ErrorMaps {
  ImageGrid pixel_err;
  ImageGrid neigh_err;
};

inline ImageGrid pixel_error(const ImageGrid& original, const ImageGrid& recon, double eps = 1e-6,
                             PixelNorm mode = PixelNorm::PerPixel) {
  require_same_shape(original, recon, "pixel_error");
  if (!(eps > 0.0)) throw UsageError("pixel_error: eps must be > 0");
  double global = eps;
  if (mode == PixelNorm::Global) {
    for (std::size_t i = 0; i < original.size(); ++i) {
      global = std::max({global, original[i], recon[i]});
    }
  }
  std::vector<double> out(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double a = original[i];
    const double b = recon[i];
    const double denom = mode == PixelNorm::Global ? global : std::max({a, b, eps});
    out[i] = std::min(std::abs(a - b) / denom, 1.0);
  }
  return ImageGrid(original.width(), original.height(), std::move(out));
}

/// Min-max normalize the pixel errors over the raster, then average over a
/// kernel_size x kernel_size window (reflect padding).
inline ImageGrid neighborhood_error(const ImageGrid& pixel_err, std::size_t kernel_size = 5) {
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw UsageError("neighborhood_error: kernel_size must be odd and >= 1");
  }
  const std::vector<double> normalized = minmax_normalize(pixel_err.values());
  std::vector<double> out = uniform_filter(normalized, pixel_err.width(), pixel_err.height(), kernel_size);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return ImageGrid(pixel_err.width(), pixel_err.height(), std::move(out));
}

inline ErrorMaps compute_error_maps(const ImageGrid& original, const ImageGrid& recon,
                                    std::size_t kernel_size = 5,
                                    PixelNorm mode = PixelNorm::PerPixel, double eps = 1e-6) {
  ImageGrid pe = pixel_error(original, recon, eps, mode);
  ImageGrid ne = neighborhood_error(pe, kernel_size);
  return ErrorMaps{std::move(pe), std::move(ne)};
}

}  // namespace shockfis
