#pragma once

// Classical comparison maps: Sobel gradient magnitude, Canny edges and a
// per-pixel Isolation Forest score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/filters.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/rng.hpp"

namespace shockfis {

// ---------------------------------------------------------------------------
// Sobel

struct Gradients {
  std::vector<double> gx;
  std::vector<double> gy;
};

inline constexpr std::array<double, 9> kSobelX = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
inline constexpr std::array<double, 9> kSobelY = {-1, -2, -1, 0, 0, 0, 1, 2, 1};

/// Largest possible |(Gx, Gy)| for intensities in [0,1].
inline const double kSobelMaxMagnitude = 4.0 * std::numbers::sqrt2;

// Written as differences of mirrored taps so a constant patch gives exactly 0.
inline Gradients sobel_gradients(std::span<const double> src, std::size_t width, std::size_t height) {
  Gradients g{std::vector<double>(width * height), std::vector<double>(width * height)};
  const auto at = [&](std::size_t x, std::ptrdiff_t dx, std::size_t y, std::ptrdiff_t dy) {
    return src[reflect_index(static_cast<std::ptrdiff_t>(y) + dy, height) * width +
               reflect_index(static_cast<std::ptrdiff_t>(x) + dx, width)];
  };
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      g.gx[y * width + x] = (at(x, 1, y, -1) - at(x, -1, y, -1)) + 2.0 * (at(x, 1, y, 0) - at(x, -1, y, 0)) +
                            (at(x, 1, y, 1) - at(x, -1, y, 1));
      g.gy[y * width + x] = (at(x, -1, y, 1) - at(x, -1, y, -1)) + 2.0 * (at(x, 0, y, 1) - at(x, 0, y, -1)) +
                            (at(x, 1, y, 1) - at(x, 1, y, -1));
    }
  }
  return g;
}

/// sqrt(Gx^2 + Gy^2) / (4*sqrt(2)), reflect padding.
inline ImageGrid sobel_magnitude(const ImageGrid& img) {
  if (img.width() < 3 || img.height() < 3) throw DataError("sobel_magnitude: image smaller than 3x3");
  const auto g = sobel_gradients(img.values(), img.width(), img.height());
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(std::hypot(g.gx[i], g.gy[i]) / kSobelMaxMagnitude, 1.0);
  }
  return ImageGrid(img.width(), img.height(), std::move(out));
}

// ---------------------------------------------------------------------------
// Canny

struct CannyParams {
  double sigma = 1.0;
  double low = 0.1;
  double high = 0.2;
};

/// Binary edge map {0,1}: 5x5 Gaussian, Sobel, 4-bin non-maximum suppression,
/// double threshold on the normalized magnitude, 8-connected hysteresis.
inline ImageGrid canny(const ImageGrid& img, const CannyParams& params = {}) {
  if (!(params.low > 0.0 && params.low < params.high && params.high <= 1.0)) {
    throw UsageError("canny: thresholds must satisfy 0 < low < high <= 1");
  }
  if (!(params.sigma > 0.0)) throw UsageError("canny: sigma must be > 0");
  if (img.width() < 3 || img.height() < 3) throw DataError("canny: image smaller than 3x3");
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const auto k = gaussian_kernel_1d(5, params.sigma);
  const auto smooth = separable_filter(img.values(), w, h, k, k);
  const auto g = sobel_gradients(smooth, w, h);

  std::vector<double> mag(w * h);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(g.gx[i], g.gy[i]) / kSobelMaxMagnitude;

  const auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> double {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(w) || y >= static_cast<std::ptrdiff_t>(h)) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };

  // Thinned magnitude. A pixel survives if it is strictly above its neighbour
  // behind and at least its neighbour ahead along the gradient, so a plateau
  // two pixels wide keeps exactly one.
  std::vector<double> thin(w * h, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double m = mag[i];
      if (m <= 0.0) continue;
      double angle = std::atan2(g.gy[i], g.gx[i]) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      int dx = 1, dy = 0;  // 0 degrees: compare left/right
      if (angle >= 22.5 && angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle >= 67.5 && angle < 112.5) {
        dx = 0, dy = 1;
      } else if (angle >= 112.5 && angle < 157.5) {
        dx = -1, dy = 1;
      }
      const auto sx = static_cast<std::ptrdiff_t>(x);
      const auto sy = static_cast<std::ptrdiff_t>(y);
      const double behind = at(sx - dx, sy - dy);
      const double ahead = at(sx + dx, sy + dy);
      if (m > behind && m >= ahead) thin[i] = m;
    }
  }

  std::vector<double> edges(w * h, 0.0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] >= params.high) {
      edges[i] = 1.0;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const auto x = static_cast<std::ptrdiff_t>(i % w);
    const auto y = static_cast<std::ptrdiff_t>(i / w);
    for (std::ptrdiff_t ny = y - 1; ny <= y + 1; ++ny) {
      for (std::ptrdiff_t nx = x - 1; nx <= x + 1; ++nx) {
        if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) || ny >= static_cast<std::ptrdiff_t>(h)) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (edges[j] == 0.0 && thin[j] >= params.low) {
          edges[j] = 1.0;
          queue.push_back(j);
        }
      }
    }
  }
  return ImageGrid(w, h, std::move(edges));
}

// ---------------------------------------------------------------------------
// Pixel features

inline constexpr std::size_t kFeatureCount = 4;
using FeatureVector = std::array<double, kFeatureCount>;

/// Per pixel: [intensity, 5x5 mean, 5x5 std / max std, sobel magnitude].
inline std::vector<FeatureVector> pixel_features(const ImageGrid& img) {
  if (img.width() < 5 || img.height() < 5) throw DataError("pixel_features: image smaller than 5x5");
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const auto mean = uniform_filter(img.values(), w, h, 5);
  std::vector<double> sq(img.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = img[i] * img[i];
  const auto mean_sq = uniform_filter(sq, w, h, 5);
  std::vector<double> sd(img.size());
  double sd_max = 0.0;
  for (std::size_t i = 0; i < sd.size(); ++i) {
    sd[i] = std::sqrt(std::max(0.0, mean_sq[i] - mean[i] * mean[i]));
    sd_max = std::max(sd_max, sd[i]);
  }
  const ImageGrid sobel = sobel_magnitude(img);
  std::vector<FeatureVector> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {img[i], std::clamp(mean[i], 0.0, 1.0), sd_max > 0.0 ? std::min(sd[i] / sd_max, 1.0) : 0.0, sobel[i]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Isolation Forest

/// Average unsuccessful-search path length in a BST of n points:
/// c(n) = 2 H(n-1) - 2 (n-1)/n with H(i) = ln(i) + Euler-Mascheroni; c(n <= 1) = 0.
inline double average_path_length(std::size_t n) noexcept {
  if (n <= 1) return 0.0;
  const double m = static_cast<double>(n);
  return 2.0 * (std::log(m - 1.0) + 0.5772156649) - 2.0 * (m - 1.0) / m;
}

struct IsoNode {
  // Leaf when feature < 0.
  int feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t size = 0;   // points routed here during fitting
  std::uint32_t depth = 0;
  double range_lo = 0.0;  // split feature range over the routed points
  double range_hi = 0.0;
};

struct IsoTree {
  std::vector<IsoNode> nodes;  // nodes[0] is the root
};

struct IsoForestParams {
  std::size_t tree_count = 100;
  std::size_t subsample_size = 256;
  std::uint64_t seed = 7;
};

struct IsoForestModel {
  std::vector<IsoTree> trees;
  std::size_t subsample_size = 0;  // effective psi
  std::size_t height_limit = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint32_t grow_iso_tree(IsoTree& tree, std::span<const FeatureVector> data, std::vector<std::size_t>& idx,
                                   std::size_t begin, std::size_t end, std::size_t depth, std::size_t limit, Rng& rng) {
  const auto id = static_cast<std::uint32_t>(tree.nodes.size());
  IsoNode leaf;
  leaf.size = static_cast<std::uint32_t>(end - begin);
  leaf.depth = static_cast<std::uint32_t>(depth);
  tree.nodes.push_back(leaf);
  if (depth >= limit || end - begin <= 1) return id;
  std::array<double, kFeatureCount> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t k = begin; k < end; ++k) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      lo[f] = std::min(lo[f], data[idx[k]][f]);
      hi[f] = std::max(hi[f], data[idx[k]][f]);
    }
  }
  std::array<std::size_t, kFeatureCount> splittable{};
  std::size_t n_split = 0;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (hi[f] > lo[f]) splittable[n_split++] = f;
  }
  if (n_split == 0) return id;
  const std::size_t f = splittable[rng.below(n_split)];
  double threshold = rng.uniform(lo[f], hi[f]);
  if (threshold <= lo[f]) threshold = std::nextafter(lo[f], hi[f]);
  // Partition: feature < threshold goes left. Both sides are non-empty.
  const auto mid_it = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                     idx.begin() + static_cast<std::ptrdiff_t>(end),
                                     [&](std::size_t p) { return data[p][f] < threshold; });
  const auto mid = static_cast<std::size_t>(mid_it - idx.begin());
  tree.nodes[id].feature = static_cast<int>(f);
  tree.nodes[id].threshold = threshold;
  tree.nodes[id].range_lo = lo[f];
  tree.nodes[id].range_hi = hi[f];
  const auto l = grow_iso_tree(tree, data, idx, begin, mid, depth + 1, limit, rng);
  const auto r = grow_iso_tree(tree, data, idx, mid, end, depth + 1, limit, rng);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

}  // namespace detail

/// Each tree: a seeded subsample of min(psi, n) points without replacement,
/// random splittable feature, threshold uniform in (min, max), depth limit
/// ceil(log2 psi). Tree t draws from Rng(derive_seed(seed, "iso.tree.<t>")).
inline IsoForestModel isoforest_fit(std::span<const FeatureVector> features, const IsoForestParams& params = {}) {
  if (features.empty()) throw DataError("isoforest_fit: no feature vectors");
  if (params.tree_count < 1) throw UsageError("isoforest_fit: tree_count must be >= 1");
  if (params.subsample_size < 2) throw UsageError("isoforest_fit: subsample_size must be >= 2");
  IsoForestModel model;
  model.seed = params.seed;
  model.subsample_size = std::min(params.subsample_size, features.size());
  model.height_limit = model.subsample_size <= 1
                           ? 0
                           : static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(model.subsample_size))));
  model.trees.resize(params.tree_count);
  std::vector<std::size_t> all(features.size());
  for (std::size_t t = 0; t < params.tree_count; ++t) {
    Rng rng(derive_seed(params.seed, "iso.tree." + std::to_string(t)));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    // Partial Fisher-Yates: the first psi slots become the subsample.
    for (std::size_t i = 0; i < model.subsample_size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(all.size() - i));
      std::swap(all[i], all[j]);
    }
    std::vector<std::size_t> idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(model.subsample_size));
    detail::grow_iso_tree(model.trees[t], features, idx, 0, idx.size(), 0, model.height_limit, rng);
  }
  return model;
}

inline double path_length(const IsoTree& tree, const FeatureVector& x) noexcept {
  const IsoNode* node = &tree.nodes[0];
  while (node->feature >= 0) {
    node = &tree.nodes[x[static_cast<std::size_t>(node->feature)] < node->threshold ? node->left : node->right];
  }
  return static_cast<double>(node->depth) + average_path_length(node->size);
}

/// s = 2^(-E[h(x)] / c(psi)); higher means easier to isolate.
inline double isoforest_score(const IsoForestModel& model, const FeatureVector& x) noexcept {
  double total = 0.0;
  for (const auto& tree : model.trees) total += path_length(tree, x);
  const double mean = total / static_cast<double>(model.trees.size());
  const double c = average_path_length(model.subsample_size);
  return std::pow(2.0, -mean / c);
}

struct IsoMapParams {
  IsoForestParams forest;
  bool binary = false;  // threshold the score at 0.5
};

/// Fits a forest on the image's own pixel features and scores every pixel.
inline ImageGrid isoforest_map(const ImageGrid& img, const IsoMapParams& params = {}) {
  const auto features = pixel_features(img);
  const auto model = isoforest_fit(features, params.forest);
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = std::clamp(isoforest_score(model, features[i]), 0.0, 1.0);
    out[i] = params.binary ? (s >= 0.5 ? 1.0 : 0.0) : s;
  }
  return ImageGrid(img.width(), img.height(), std::move(out));
}

}  // namespace shockfis
