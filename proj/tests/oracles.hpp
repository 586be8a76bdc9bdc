#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "shockfis/autoencoder.hpp"
#include "shockfis/fuzzy.hpp"

namespace shockfis::oracle {

// Triangle membership written as the min of the two ramps. Shoulders are the
// limit of a vanishing ramp (value 1 on the flat side inside the support).
inline double triangle(double x, double a, double b, double c) {
  if (x < a || x > c) return 0.0;
  const double rise = b > a ? (x - a) / (b - a) : 1.0;
  const double fall = c > b ? (c - x) / (c - b) : 1.0;
  return std::max(0.0, std::min(rise, fall));
}

inline double term_degree(const FuzzyVariable& var, const std::string& label, double x) {
  for (const auto& t : var.terms) {
    if (t.label == label) return triangle(x, t.mf.a, t.mf.b, t.mf.c);
  }
  return 0.0;
}

/// Literal Mamdani: per grid point, max over rules of min(strength, consequent).
/// Grid x_i = i / steps, i = 0..steps. Empty when no rule fires.
inline std::optional<double> mamdani(const FisSpec& spec, double pixel, double neigh, std::size_t steps = 100000) {
  struct Active {
    double strength;
    TriangularMF mf;
  };
  std::vector<Active> active;
  for (const auto& r : spec.rules) {
    const double s = std::min(term_degree(spec.pixel_err, r.pixel_term, pixel), term_degree(spec.neigh_err, r.neigh_term, neigh));
    if (s > 0.0) active.push_back({s, spec.anomaly.term(r.output_term).mf});
  }
  if (active.empty()) return std::nullopt;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(steps);
    double mu = 0.0;
    for (const auto& a : active) mu = std::max(mu, std::min(a.strength, triangle(x, a.mf.a, a.mf.b, a.mf.c)));
    num += x * mu;
    den += mu;
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

/// Continuous centroid of a full triangle: (a + b + c) / 3.
inline double triangle_centroid(const TriangularMF& mf) { return (mf.a + mf.b + mf.c) / 3.0; }

/// Central-difference gradient of the batch loss with respect to every parameter.
inline std::vector<double> finite_difference_gradients(AutoencoderModel model, std::span<const TrainingPair> batch,
                                                       std::span<const std::vector<double>> eps, double h = 1e-5) {
  auto p = model.params();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = loss_and_gradients(model, batch, eps).loss;
    p[i] = saved - h;
    const double down = loss_and_gradients(model, batch, eps).loss;
    p[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// Mean filter by explicit mirrored padding and direct window sums.
inline std::vector<double> mean_filter(const std::vector<double>& src, std::size_t w, std::size_t h, std::size_t k) {
  const std::size_t r = k / 2;
  const std::size_t pw = w + 2 * r, ph = h + 2 * r;
  std::vector<double> padded(pw * ph);
  const auto mirror = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return static_cast<std::size_t>(i);
  };
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) {
      padded[y * pw + x] = src[mirror(static_cast<long>(y) - static_cast<long>(r), static_cast<long>(h)) * w +
                               mirror(static_cast<long>(x) - static_cast<long>(r), static_cast<long>(w))];
    }
  }
  std::vector<double> out(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::size_t dy = 0; dy < k; ++dy) {
        for (std::size_t dx = 0; dx < k; ++dx) s += padded[(y + dy) * pw + x + dx];
      }
      out[y * w + x] = s / static_cast<double>(k * k);
    }
  }
  return out;
}

inline double relative_deviation(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

}  // namespace shockfis::oracle
