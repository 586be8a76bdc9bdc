#pragma once

// Synthetic shadowgraph generator.
//
// A vertical shock-cell band pattern 0.5 + A*sin(2*pi*x/P), darkened inside a
// few elliptical "disruption" blobs and overlaid with Gaussian noise. The
// blob masks are the ground truth for localization checks.
//
// Draw order from Rng(seed), fixed so output is reproducible:
//   for each blob: up to kPlacementAttempts x (cx, cy, aspect) uniform draws,
//                  accepted at the first placement that clears earlier blobs;
//   then one normal() per pixel in row-major order when noise_sigma > 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/rng.hpp"

namespace shockfis {

struct SynthSpec {
  std::size_t width = 128;
  std::size_t height = 128;
  double band_period = 16.0;     // pixels per band cycle
  double band_amplitude = 0.2;   // [0, 0.5]
  std::size_t disruption_count = 3;
  double disruption_radius = 6.0;   // equivalent circle radius, pixels
  double disruption_depth = 0.3;    // intensity drop inside a blob, <= 0.5 - band_amplitude
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;
};

struct Blob {
  double cx, cy;
  double semi_x, semi_y;  // semi_x * semi_y == radius^2

  bool contains(double x, double y) const noexcept {
    const double dx = (x - cx) / semi_x;
    const double dy = (y - cy) / semi_y;
    return dx * dx + dy * dy <= 1.0;
  }
};

struct SynthSample {
  ImageGrid image;
  ImageGrid mask;  // 1 inside a disruption, 0 elsewhere
  std::vector<Blob> blobs;
};

inline void validate(const SynthSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw UsageError("synth: zero width/height");
  if (!(spec.band_period >= 2.0)) throw UsageError("synth: band_period must be >= 2");
  if (!(spec.band_amplitude >= 0.0 && spec.band_amplitude <= 0.5)) {
    throw UsageError("synth: band_amplitude must lie in [0, 0.5]");
  }
  if (spec.disruption_count > 0 && !(spec.disruption_radius > 0.0)) {
    throw UsageError("synth: disruption_radius must be > 0");
  }
  if (spec.disruption_count > 0 && !(spec.disruption_depth >= 0.0 && spec.disruption_depth <= 0.5 - spec.band_amplitude + 1e-12)) {
    throw UsageError("synth: disruption_depth must lie in [0, 0.5 - band_amplitude]");
  }
  if (!(spec.noise_sigma >= 0.0)) throw UsageError("synth: noise_sigma must be >= 0");
}

/// Clean band value at column x (no blobs, no noise).
inline double band_value(const SynthSpec& spec, std::size_t x) noexcept {
  return 0.5 + spec.band_amplitude *
                   std::sin(2.0 * std::numbers::pi * static_cast<double>(x) / spec.band_period);
}

namespace detail {

inline constexpr int kPlacementAttempts = 64;

inline std::vector<Blob> place_blobs(const SynthSpec& spec, Rng& rng) {
  std::vector<Blob> blobs;
  const double r = spec.disruption_radius;
  const double w = static_cast<double>(spec.width);
  const double h = static_cast<double>(spec.height);
  for (std::size_t n = 0; n < spec.disruption_count; ++n) {
    Blob candidate{};
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const double aspect = rng.uniform(1.0, 1.5);
      const double sx = r * aspect;
      const double sy = r / aspect;
      // Keep the blob inside the frame when the frame allows it.
      const double x_lo = std::min(sx, w / 2.0), x_hi = std::max(w - 1.0 - sx, w / 2.0);
      const double y_lo = std::min(sy, h / 2.0), y_hi = std::max(h - 1.0 - sy, h / 2.0);
      candidate = Blob{rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), sx, sy};
      const bool clear = std::none_of(blobs.begin(), blobs.end(), [&](const Blob& b) {
        const double reach = std::max(b.semi_x, b.semi_y) + std::max(sx, sy) + 1.0;
        return std::hypot(b.cx - candidate.cx, b.cy - candidate.cy) < reach;
      });
      if (clear) break;
    }
    blobs.push_back(candidate);
  }
  return blobs;
}

}  // namespace detail

inline SynthSample generate_sample(const SynthSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const auto blobs = detail::place_blobs(spec, rng);
  const std::size_t n = spec.width * spec.height;
  std::vector<double> pixels(n);
  std::vector<double> mask(n, 0.0);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      double v = band_value(spec, x);
      const bool inside = std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) {
        return b.contains(static_cast<double>(x), static_cast<double>(y));
      });
      if (inside) {
        v -= spec.disruption_depth;
        mask[y * spec.width + x] = 1.0;
      }
      pixels[y * spec.width + x] = v;
    }
  }
  if (spec.noise_sigma > 0.0) {
    for (double& v : pixels) v += spec.noise_sigma * rng.normal();
  }
  for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
  return SynthSample{ImageGrid(spec.width, spec.height, std::move(pixels)),
                     ImageGrid(spec.width, spec.height, std::move(mask)), blobs};
}

inline ImageGrid generate_shadowgraph(const SynthSpec& spec) { return generate_sample(spec).image; }

/// `count` samples with seeds seed+0 ... seed+count-1.
inline std::vector<SynthSample> generate_dataset(const SynthSpec& spec, std::size_t count) {
  if (count < 1) throw UsageError("synth: count must be >= 1");
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s = spec;
    s.seed = spec.seed + i;
    out.push_back(generate_sample(s));
  }
  return out;
}

}  // namespace shockfis
