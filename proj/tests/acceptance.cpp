// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "shockfis/shockfis.hpp"

using namespace shockfis;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ImageGrid random_grid(std::size_t w, std::size_t h, Rng& rng) {
  std::vector<double> v(w * h);
  for (double& x : v) x = rng.uniform();
  return ImageGrid(w, h, std::move(v));
}

// Models shared by the training and localization checks.
struct TrainedModels {
  TrainResult dae;
  TrainResult bvae;
  double seconds = 0.0;
};

std::vector<ImageGrid> band_dataset() {
  SynthSpec spec;
  spec.disruption_count = 0;
  spec.seed = 1000;
  std::vector<ImageGrid> out;
  for (const auto& s : generate_dataset(spec, 20)) out.push_back(s.image);
  return out;
}

const TrainedModels& trained_models() {
  static const TrainedModels models = [] {
    const auto data = band_dataset();
    TrainConfig cfg;
    cfg.seed = 4242;
    const auto t0 = Clock::now();
    TrainedModels m{train(data, ModelKind::DAE, cfg), train(data, ModelKind::BVAE, cfg), 0.0};
    m.seconds = seconds_since(t0);
    return m;
  }();
  return models;
}

SynthSample disrupted_sample() {
  SynthSpec spec;
  spec.disruption_count = 4;
  spec.disruption_radius = 8.0;
  spec.seed = 77;
  return generate_sample(spec);
}

Outcome fis_oracle() {
  const auto t0 = Clock::now();
  const FisSpec spec = default_spec();
  const FuzzyEngine engine(spec);
  double worst = 0.0;
  std::size_t mismatched_flags = 0;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double p = i / 100.0, n = j / 100.0;
      const auto got = engine.infer(p, n);
      const auto want = oracle::mamdani(spec, p, n);
      if (got.no_rule_fired != !want.has_value()) ++mismatched_flags;
      const double expected = want.value_or(spec.fallback_output);
      worst = std::max(worst, std::abs(got.value - expected));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && mismatched_flags == 0 && secs < 30.0,
          "max |engine - oracle| = " + fmt("%.3g", worst) + ", flag mismatches " + std::to_string(mismatched_flags) +
              ", " + fmt("%.1f s", secs)};
}

Outcome fis_anchors() {
  const FuzzyEngine engine(default_spec());
  const std::vector<std::array<double, 3>> anchors = {{1, 1, 0.5}, {0, 0, 0.1}, {0.5, 0.5, 0.9}, {0.25, 0.25, 0.5}};
  bool ok = true;
  std::string detail;
  for (const auto& [p, n, want] : anchors) {
    const auto r = engine.infer(p, n);
    ok &= !r.no_rule_fired && std::abs(r.value - want) <= 0.005;
    detail += fmt("(%g,", p) + fmt("%g)=", n) + fmt("%.4f ", r.value);
  }
  const auto fb = engine.infer(0.5, 0.05);
  ok &= fb.no_rule_fired && fb.value == default_spec().fallback_output;
  detail += "(0.5,0.05) fallback=" + std::string(fb.no_rule_fired ? "yes" : "no");
  return {ok, detail};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(3);
  std::vector<TrainingPair> batch(4);
  for (auto& pair : batch) {
    pair.target.resize(16);
    pair.input.resize(16);
    for (std::size_t i = 0; i < 16; ++i) {
      pair.target[i] = rng.uniform();
      pair.input[i] = std::clamp(pair.target[i] + 0.1 * rng.normal(), 0.0, 1.0);
    }
  }
  std::vector<std::vector<double>> eps(4, std::vector<double>(4));
  for (auto& e : eps) {
    for (double& v : e) v = rng.normal();
  }
  double worst_dae = 0.0, worst_vae = 0.0;
  const auto check = [&](const AutoencoderModel& m, const std::vector<std::vector<double>>& e, double& worst) {
    const auto analytic = loss_and_gradients(m, batch, e).gradients;
    const auto numeric = oracle::finite_difference_gradients(m, batch, e, 1e-5);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      worst = std::max(worst, oracle::relative_deviation(analytic[i], numeric[i]));
    }
  };
  check(init_params(21, ModelKind::DAE, {16, 4, 16}), {}, worst_dae);
  check(init_params(22, ModelKind::BVAE, {16, 4, 16}, 1.0), eps, worst_vae);
  const double secs = seconds_since(t0);
  return {worst_dae < 1e-4 && worst_vae < 1e-4 && secs < 10.0,
          "max rel dev DAE " + fmt("%.2e", worst_dae) + ", BVAE " + fmt("%.2e", worst_vae) + ", " + fmt("%.2f s", secs)};
}

Outcome training_efficacy() {
  const TrainedModels& m = trained_models();
  const auto& h = m.dae.history;
  const double e0 = h.front().eval_mse, e10 = h.back().eval_mse;
  bool kl_ok = true;
  for (const auto& s : m.bvae.history) kl_ok &= std::isfinite(s.train_kl) && s.train_kl >= 0.0;
  return {h.size() == 11 && e10 <= 0.5 * e0 && kl_ok && m.seconds < 300.0,
          "DAE eval MSE " + fmt("%.4g", e0) + " -> " + fmt("%.4g", e10) + " (ratio " + fmt("%.3f", e10 / e0) +
              "), BVAE KL finite and >= 0: " + (kl_ok ? "yes" : "no") + ", both models trained in " +
              fmt("%.1f s", m.seconds)};
}

Outcome localization() {
  const TrainedModels& m = trained_models();
  const SynthSample s = disrupted_sample();
  const FuzzyLut lut = compile_lut(default_spec(), 8);
  std::string detail;
  bool ok = true;
  for (const auto* model : {&m.bvae.model, &m.dae.model}) {
    const ImageGrid recon = reconstruct_image(*model, s.image);
    const AnomalyMap a = classify_map(lut, compute_error_maps(s.image, recon));
    std::vector<double> in, out;
    for (std::size_t i = 0; i < a.anomaly.size(); ++i) (s.mask[i] > 0.5 ? in : out).push_back(a.anomaly[i]);
    const double mi = median(in), mo = median(out);
    ok &= mi > mo;
    detail += std::string(to_string(model->kind())) + "+FIS median mask " + fmt("%.4f", mi) + " vs background " +
              fmt("%.4f", mo) + "; ";
  }
  return {ok, detail};
}

Outcome error_map_formulas() {
  const double pe = pixel_error(ImageGrid::filled(1, 1, 0.8), ImageGrid::filled(1, 1, 0.4))[0];
  std::vector<double> v(11 * 11, 0.0);
  v[5 * 11 + 5] = 1.0;
  const ImageGrid ne = neighborhood_error(ImageGrid(11, 11, v), 5);
  double worst_in = 0.0, worst_out = 0.0;
  for (std::size_t y = 0; y < 11; ++y) {
    for (std::size_t x = 0; x < 11; ++x) {
      const bool in = x >= 3 && x <= 7 && y >= 3 && y <= 7;
      double& worst = in ? worst_in : worst_out;
      worst = std::max(worst, std::abs(ne.at(x, y) - (in ? 0.04 : 0.0)));
    }
  }
  const ImageGrid flat = neighborhood_error(ImageGrid::filled(9, 9, 0.6), 5);
  const bool zeros = std::all_of(flat.values().begin(), flat.values().end(), [](double x) { return x == 0.0; });
  return {pe == 0.5 && worst_in < 1e-15 && worst_out == 0.0 && zeros,
          "pixel_error(0.8,0.4) = " + fmt("%.17g", pe) + ", spike window dev " + fmt("%.1e", worst_in) +
              ", constant input zeros: " + (zeros ? "yes" : "no")};
}

Outcome metric_identities() {
  Rng rng(7);
  const ImageGrid x = random_grid(64, 64, rng);
  bool ok = mse(x, x) == 0.0;
  const double s = ssim(x, x);
  ok &= std::abs(s - 1.0) < 1e-12;
  double asym = 0.0;
  for (int i = 0; i < 50; ++i) {
    const ImageGrid a = random_grid(32, 32, rng), b = random_grid(32, 32, rng);
    asym = std::max(asym, std::abs(ssim(a, b) - ssim(b, a)));
  }
  ok &= asym < 1e-12;
  const double h0 = shannon_entropy(ImageGrid::filled(16, 16, 0.3));
  std::vector<double> half(256, 0.0);
  std::fill(half.begin() + 128, half.end(), 1.0);
  const double h1 = shannon_entropy(ImageGrid(16, 16, half));
  double hmax = 0.0;
  for (int i = 0; i < 5; ++i) hmax = std::max(hmax, shannon_entropy(random_grid(512, 512, rng)));
  ok &= h0 == 0.0 && std::abs(h1 - 1.0) < 1e-12 && hmax <= 12.0;
  return {ok, "ssim(x,x) = " + fmt("%.15f", s) + ", max ssim asymmetry " + fmt("%.1e", asym) + ", H(const) = " +
                  fmt("%g", h0) + ", H(half/half) = " + fmt("%g", h1) + ", max H(random) = " + fmt("%.4f", hmax)};
}

Outcome baseline_sanity() {
  const ImageGrid sob = sobel_magnitude(ImageGrid::filled(32, 32, 0.4));
  const bool sobel_zero = std::all_of(sob.values().begin(), sob.values().end(), [](double v) { return v == 0.0; });

  std::vector<double> step(40 * 24);
  for (std::size_t y = 0; y < 24; ++y) {
    for (std::size_t x = 0; x < 40; ++x) step[y * 40 + x] = x < 20 ? 0.2 : 0.8;
  }
  const ImageGrid edges = canny(ImageGrid(40, 24, step));
  bool binary = true, thin = true;
  for (std::size_t y = 0; y < 24; ++y) {
    std::size_t count = 0;
    for (std::size_t x = 0; x < 40; ++x) {
      const double v = edges.at(x, y);
      binary &= v == 0.0 || v == 1.0;
      count += v == 1.0;
    }
    thin &= count == 1;
  }

  Rng rng(11);
  std::vector<FeatureVector> data(1000);
  for (auto& f : data) {
    for (double& v : f) v = 0.5 + 0.05 * rng.normal();
  }
  const FeatureVector outlier{0.95, 0.05, 0.95, 0.9};
  data.push_back(outlier);
  const auto forest = isoforest_fit(data, {100, 256, 7});
  std::vector<double> inliers;
  for (std::size_t i = 0; i + 1 < data.size(); ++i) inliers.push_back(isoforest_score(forest, data[i]));
  std::sort(inliers.begin(), inliers.end());
  const double p90 = inliers[inliers.size() * 9 / 10];
  const double so = isoforest_score(forest, outlier);
  const double c2 = average_path_length(2);
  return {sobel_zero && binary && thin && so > p90 && std::abs(c2 - 0.15443) < 1e-5,
          std::string("sobel(const) zero: ") + (sobel_zero ? "yes" : "no") + ", canny binary: " + (binary ? "yes" : "no") +
              ", one pixel per row: " + (thin ? "yes" : "no") + ", outlier score " + fmt("%.4f", so) + " vs p90 " +
              fmt("%.4f", p90) + ", c(2) = " + fmt("%.6f", c2)};
}

Outcome lut_fidelity() {
  const FuzzyEngine engine(default_spec());
  const TrainedModels& m = trained_models();
  const SynthSample s = disrupted_sample();
  const ErrorMaps maps = compute_error_maps(s.image, reconstruct_image(m.dae.model, s.image));
  const AnomalyMap direct = classify_map(engine, maps);
  const AnomalyMap via10 = classify_map(FuzzyLut(engine, 10), maps);
  double worst10 = 0.0;
  std::size_t over10 = 0;
  for (std::size_t i = 0; i < direct.anomaly.size(); ++i) {
    const double d = std::abs(direct.anomaly[i] - via10.anomaly[i]);
    worst10 = std::max(worst10, d);
    over10 += d >= 0.01;
  }

  const FuzzyLut lut8(engine, 8);
  Rng rng(2024);
  double worst8 = 0.0;
  std::size_t over8 = 0;
  for (int k = 0; k < 10000; ++k) {
    const double p = rng.uniform(), n = rng.uniform();
    const double d = std::abs(engine.infer(p, n).value - lut8.lookup(p, n).value);
    worst8 = std::max(worst8, d);
    over8 += d >= 0.02;
  }
  return {worst10 < 0.01 && worst8 < 0.02,
          "bits=10 on 128x128 map: max dev " + fmt("%.4g", worst10) + " (" + std::to_string(over10) +
              " pixels >= 0.01); bits=8 on 10000 pairs: max dev " + fmt("%.4g", worst8) + " (" +
              std::to_string(over8) + " pairs >= 0.02)"};
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "shockfis_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.seed = 5;
  const std::string img = (dir / "frame.pgm").string();
  save_pgm(generate_shadowgraph(spec), img);
  const auto run = [&](const std::string& name) {
    PipelineConfig c;
    c.inputs = {img};
    c.output_dir = (dir / name).string();
    c.train.epochs = 2;
    c.train.patches_per_image = 8;
    c.iso_trees = 50;
    run_pipeline(c);
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir / name)) {
      const auto ext = e.path().extension();
      if (ext == ".csv" || ext == ".pgm") files[fs::relative(e.path(), dir / name).string()] = read_text_file(e.path().string());
    }
    return files;
  };
  const auto a = run("a");
  const auto b = run("b");
  std::size_t pgm = 0;
  for (const auto& [name, bytes] : a) pgm += fs::path(name).extension() == ".pgm";
  const MetricsReport report = decode_csv(a.at("frame/metrics.csv"));
  bool rows_ok = report.rows.size() == 5;
  for (std::size_t i = 0; rows_ok && i < 5; ++i) rows_ok &= report.rows[i].method == table_methods()[i];
  fs::remove_all(dir);
  return {a == b && rows_ok, std::to_string(a.size()) + " CSV/PGM files (" + std::to_string(pgm) + " PGM) " +
                                 (a == b ? "byte-identical" : "DIFFER") + ", CSV rows in table order: " +
                                 (rows_ok ? "yes" : "no")};
}

Outcome performance() {
  Rng rng(13);
  const ErrorMaps maps{random_grid(1024, 1024, rng), random_grid(1024, 1024, rng)};
  const auto t0 = Clock::now();
  const FuzzyLut lut = compile_lut(default_spec(), 8);
  const double compile_secs = seconds_since(t0);
  const auto t1 = Clock::now();
  const AnomalyMap a = classify_map(lut, maps);
  const double secs = seconds_since(t1);
  return {secs < 1.0 && a.anomaly.size() == 1024u * 1024u,
          "classify_map 1024x1024 via 8-bit LUT " + fmt("%.3f s", secs) + " (one-off table build " +
              fmt("%.2f s)", compile_secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"FIS matches brute-force Mamdani oracle", fis_oracle},
      {"FIS analytic anchors and fallback", fis_anchors},
      {"Backprop gradients match finite differences", gradient_check},
      {"DAE training halves patch MSE, BVAE KL finite", training_efficacy},
      {"Anomaly maps localize planted disruptions", localization},
      {"Error-map formulas", error_map_formulas},
      {"Metric identities", metric_identities},
      {"Baseline sanity", baseline_sanity},
      {"LUT fidelity", lut_fidelity},
      {"Pipeline reproducibility and table schema", reproducibility},
      {"LUT classification performance", performance},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
