#pragma once

// Image quality metrics and the per-method report table.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/filters.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/text_io.hpp"

namespace shockfis {

inline double mse(const ImageGrid& a, const ImageGrid& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over every window position fully inside the image (no padding).
inline double ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params = {}) {
  require_same_shape(a, b, "ssim");
  const std::size_t win = params.window;
  if (a.width() < win || a.height() < win) {
    throw DataError("ssim: images must be at least " + std::to_string(win) + "x" + std::to_string(win));
  }
  const auto g = gaussian_kernel_1d(win, params.sigma);
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  const std::size_t w = a.width();
  const std::size_t out_w = w - win + 1;
  const std::size_t out_h = a.height() - win + 1;
  double total = 0.0;
  for (std::size_t y0 = 0; y0 < out_h; ++y0) {
    for (std::size_t x0 = 0; x0 < out_w; ++x0) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (std::size_t ky = 0; ky < win; ++ky) {
        for (std::size_t kx = 0; kx < win; ++kx) {
          const double wt = g[ky] * g[kx];
          const double va = a.at(x0 + kx, y0 + ky);
          const double vb = b.at(x0 + kx, y0 + ky);
          mu_a += wt * va;
          mu_b += wt * vb;
          aa += wt * va * va;
          bb += wt * vb * vb;
          ab += wt * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return std::clamp(total / static_cast<double>(out_w * out_h), -1.0, 1.0);
}

/// Histogram entropy in bits over `bins` equal-width bins on [0,1].
inline double shannon_entropy(std::span<const double> values, std::size_t bins = 4096) {
  if (values.empty()) throw DataError("shannon_entropy: empty raster");
  if (bins < 2) throw UsageError("shannon_entropy: bins must be >= 2");
  std::vector<std::size_t> hist(bins, 0);
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    hist[std::min(static_cast<std::size_t>(c * static_cast<double>(bins)), bins - 1)]++;
  }
  const double n = static_cast<double>(values.size());
  double h = 0.0;
  for (std::size_t count : hist) {
    if (count == 0) continue;
    const double p = static_cast<double>(count) / n;
    h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

inline double shannon_entropy(const ImageGrid& map, std::size_t bins = 4096) {
  return shannon_entropy(map.values(), bins);
}

// ---------------------------------------------------------------------------
// Report

struct MetricsRow {
  std::string method;
  double mse = 0.0;
  double ssim = 0.0;
  double entropy_bits = 0.0;
};

/// MSE and SSIM of `output_map` against the original; entropy of
/// `entropy_map` (defaults to the output map itself).
inline MetricsRow evaluate_method(const ImageGrid& original, const ImageGrid& output_map, const std::string& method,
                                  const ImageGrid* entropy_map = nullptr, std::size_t bins = 4096) {
  return {method, mse(original, output_map), ssim(original, output_map),
          shannon_entropy(entropy_map ? *entropy_map : output_map, bins)};
}

struct MetricsReport {
  std::vector<MetricsRow> rows;
  std::string config_fingerprint;

  void add(MetricsRow row) {
    if (std::any_of(rows.begin(), rows.end(), [&](const MetricsRow& r) { return r.method == row.method; })) {
      throw UsageError("metrics report: duplicate method '" + row.method + "'");
    }
    rows.push_back(std::move(row));
  }
};

inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string encode_csv(const MetricsReport& report) {
  std::string out = "method,mse,ssim,entropy_bits\n";
  for (const auto& r : report.rows) {
    if (r.method.find_first_of(",\"\n") != std::string::npos) {
      throw UsageError("metrics report: method name '" + r.method + "' needs CSV quoting");
    }
    out += r.method + "," + format_metric(r.mse) + "," + format_metric(r.ssim) + "," + format_metric(r.entropy_bits) + "\n";
  }
  return out;
}

inline MetricsReport decode_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "method,mse,ssim,entropy_bits") throw DataError("metrics csv: bad header");
  MetricsReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      fields.push_back(line.substr(start, pos - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 4) throw DataError("metrics csv: expected 4 fields in '" + line + "'");
    report.add({fields[0], parse_double(fields[1], "mse"), parse_double(fields[2], "ssim"),
                parse_double(fields[3], "entropy")});
  }
  return report;
}

}  // namespace shockfis
