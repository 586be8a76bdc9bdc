#pragma once

// End-to-end run: reconstruction, error maps, fuzzy anomaly maps, baselines
// and the per-image metrics table.
//
// Artifact layout under the output directory:
//   config.txt                 effective configuration (re-runnable)
//   manifest.txt               seeds, parameter decisions, per-image summary
//   models/dae.model, models/bvae.model
//   <image stem>/
//     recon_<m>.pgm|txt  pixel_err_<m>.pgm|txt  neigh_err_<m>.pgm|txt
//     anomaly_<m>.pgm|txt        (m = dae, bvae)
//     sobel.pgm|txt  canny.pgm|txt  isoforest.pgm|txt
//     metrics.csv
//
// Work happens in "<out>.partial" and is renamed into place at the end; on
// any failure the staging directory is removed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shockfis/autoencoder.hpp"
#include "shockfis/baselines.hpp"
#include "shockfis/error.hpp"
#include "shockfis/error_maps.hpp"
#include "shockfis/fuzzy.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/metrics.hpp"
#include "shockfis/rng.hpp"
#include "shockfis/text_io.hpp"

namespace shockfis {

namespace fs = std::filesystem;

/// Method names in report order.
inline const std::vector<std::string>& table_methods() {
  static const std::vector<std::string> names = {"Canny Edge Detection", "Isolation Forest",
                                                 "Sobel Gradient Magnitude", "Denoising AE",
                                                 "Beta-Variational AE"};
  return names;
}

struct PipelineConfig {
  std::vector<std::string> inputs;
  std::string output_dir;
  std::uint64_t seed = 2024;

  // Models. Empty path: train one on the input images.
  std::string dae_model;
  std::string bvae_model;
  TrainConfig train;

  // Error maps
  PixelNorm pixel_norm = PixelNorm::PerPixel;
  std::size_t kernel_size = 5;
  double pixel_eps = 1e-6;

  // Fuzzy classifier
  std::string fis_spec;  // empty: built-in rule base
  unsigned lut_bits = 8;  // 0: direct inference per pixel
  bool swap_strong_possible = false;

  // Baselines
  CannyParams canny;
  std::size_t iso_trees = 100;
  std::size_t iso_subsample = 256;

  // Metrics
  std::size_t entropy_bins = 4096;
};

/// Per-stage seeds, derived as derive_seed(master, stage name).
struct StageSeeds {
  std::uint64_t train_dae;
  std::uint64_t train_bvae;
  std::uint64_t isoforest;
};

inline StageSeeds stage_seeds(std::uint64_t master) {
  return {derive_seed(master, "train.dae"), derive_seed(master, "train.bvae"), derive_seed(master, "baseline.isoforest")};
}

// ---------------------------------------------------------------------------
// Config file: "key = value" lines, '#' comments, `input` may repeat.

inline std::string encode_config(const PipelineConfig& c) {
  std::ostringstream o;
  o << "# shockfis pipeline configuration\n";
  for (const auto& in : c.inputs) o << "input = " << in << "\n";
  o << "output_dir = " << c.output_dir << "\n";
  o << "seed = " << c.seed << "\n";
  o << "dae_model = " << c.dae_model << "\n";
  o << "bvae_model = " << c.bvae_model << "\n";
  o << "epochs = " << c.train.epochs << "\n";
  o << "batch_size = " << c.train.batch_size << "\n";
  o << "learning_rate = " << format_exact(c.train.learning_rate) << "\n";
  o << "noise_sigma = " << format_exact(c.train.noise_sigma) << "\n";
  o << "beta = " << format_exact(c.train.beta) << "\n";
  o << "patches_per_image = " << c.train.patches_per_image << "\n";
  o << "patch_size = " << c.train.patch_size << "\n";
  o << "pixel_norm = " << to_string(c.pixel_norm) << "\n";
  o << "kernel_size = " << c.kernel_size << "\n";
  o << "pixel_eps = " << format_exact(c.pixel_eps) << "\n";
  o << "fis_spec = " << c.fis_spec << "\n";
  o << "lut_bits = " << c.lut_bits << "\n";
  o << "swap_strong_possible = " << (c.swap_strong_possible ? "true" : "false") << "\n";
  o << "canny_sigma = " << format_exact(c.canny.sigma) << "\n";
  o << "canny_low = " << format_exact(c.canny.low) << "\n";
  o << "canny_high = " << format_exact(c.canny.high) << "\n";
  o << "iso_trees = " << c.iso_trees << "\n";
  o << "iso_subsample = " << c.iso_subsample << "\n";
  o << "entropy_bins = " << c.entropy_bins << "\n";
  return o.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config: expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Applies one key/value pair. Unknown keys are usage errors.
inline void apply_config_value(PipelineConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "input") c.inputs.push_back(value);
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "seed") c.seed = parse_int<std::uint64_t>(value, key);
    else if (key == "dae_model") c.dae_model = value;
    else if (key == "bvae_model") c.bvae_model = value;
    else if (key == "epochs") c.train.epochs = parse_int<std::size_t>(value, key);
    else if (key == "batch_size") c.train.batch_size = parse_int<std::size_t>(value, key);
    else if (key == "learning_rate") c.train.learning_rate = parse_double(value, key);
    else if (key == "noise_sigma") c.train.noise_sigma = parse_double(value, key);
    else if (key == "beta") c.train.beta = parse_double(value, key);
    else if (key == "patches_per_image") c.train.patches_per_image = parse_int<std::size_t>(value, key);
    else if (key == "patch_size") c.train.patch_size = parse_int<std::size_t>(value, key);
    else if (key == "pixel_norm") c.pixel_norm = parse_pixel_norm(value);
    else if (key == "kernel_size") c.kernel_size = parse_int<std::size_t>(value, key);
    else if (key == "pixel_eps") c.pixel_eps = parse_double(value, key);
    else if (key == "fis_spec") c.fis_spec = value;
    else if (key == "lut_bits") c.lut_bits = parse_int<unsigned>(value, key);
    else if (key == "swap_strong_possible") c.swap_strong_possible = detail::parse_bool(value);
    else if (key == "canny_sigma") c.canny.sigma = parse_double(value, key);
    else if (key == "canny_low") c.canny.low = parse_double(value, key);
    else if (key == "canny_high") c.canny.high = parse_double(value, key);
    else if (key == "iso_trees") c.iso_trees = parse_int<std::size_t>(value, key);
    else if (key == "iso_subsample") c.iso_subsample = parse_int<std::size_t>(value, key);
    else if (key == "entropy_bins") c.entropy_bins = parse_int<std::size_t>(value, key);
    else throw UsageError("config: unknown key '" + key + "'");
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

inline PipelineConfig decode_config(const std::string& text) {
  PipelineConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty() && key != "dae_model" && key != "bvae_model" && key != "fis_spec") continue;
    apply_config_value(c, key, value);
  }
  return c;
}

inline void validate(const PipelineConfig& c) {
  if (c.inputs.empty()) throw UsageError("pipeline: no input images");
  if (c.output_dir.empty()) throw UsageError("pipeline: no output directory");
  if (c.kernel_size == 0 || c.kernel_size % 2 == 0) throw UsageError("pipeline: kernel_size must be odd");
  if (c.lut_bits != 0 && (c.lut_bits < 4 || c.lut_bits > 12)) throw UsageError("pipeline: lut_bits must be 0 or 4..12");
  if (!(c.canny.low > 0.0 && c.canny.low < c.canny.high && c.canny.high <= 1.0)) {
    throw UsageError("pipeline: canny thresholds must satisfy 0 < low < high <= 1");
  }
  if (c.entropy_bins < 2) throw UsageError("pipeline: entropy_bins must be >= 2");
  validate(c.train);
}

// ---------------------------------------------------------------------------
// Shared stage helpers (also used by the individual CLI subcommands)

/// ".txt" files are full-precision raster dumps, anything else is PGM.
inline ImageGrid load_raster(const std::string& path) {
  if (fs::path(path).extension() == ".txt") return load_raster_text(path);
  return load_pgm(path);
}

/// Writes <stem>.pgm and <stem>.txt.
inline void save_raster_pair(const ImageGrid& img, const fs::path& stem) {
  save_pgm(img, stem.string() + ".pgm");
  save_raster_text(img, stem.string() + ".txt");
}

inline FisSpec resolve_fis_spec(const std::string& path, bool swap) {
  FisSpec spec = path.empty() ? default_spec() : load_fis_spec(path);
  return swap ? swap_consequents(std::move(spec)) : spec;
}

/// Classifies with a LUT when bits > 0, otherwise by direct inference.
class FuzzyClassifier {
 public:
  FuzzyClassifier(const FisSpec& spec, unsigned lut_bits) : engine_(spec) {
    if (lut_bits > 0) lut_.emplace(engine_, lut_bits);
  }

  AnomalyMap classify(const ErrorMaps& maps) const {
    return lut_ ? classify_map(*lut_, maps) : classify_map(engine_, maps);
  }

  const FuzzyEngine& engine() const noexcept { return engine_; }

 private:
  FuzzyEngine engine_;
  std::optional<FuzzyLut> lut_;
};

struct BaselineMaps {
  ImageGrid sobel;
  ImageGrid canny;
  ImageGrid isoforest;
};

inline BaselineMaps run_baselines(const ImageGrid& img, const CannyParams& canny_params, const IsoForestParams& iso) {
  IsoMapParams ip;
  ip.forest = iso;
  return {sobel_magnitude(img), canny(img, canny_params), isoforest_map(img, ip)};
}

// ---------------------------------------------------------------------------

struct ModelOutputs {
  ImageGrid reconstruction;
  ErrorMaps maps;
  AnomalyMap anomaly;
};

struct ImageOutcome {
  std::string name;
  MetricsReport report;
  ModelOutputs dae;
  ModelOutputs bvae;
  BaselineMaps baselines;
};

struct PipelineResult {
  std::vector<ImageOutcome> images;
  AutoencoderModel dae;
  AutoencoderModel bvae;
  std::vector<EpochStats> dae_history;
  std::vector<EpochStats> bvae_history;
};

namespace detail {

inline std::vector<std::string> unique_stems(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  std::map<std::string, int> seen;
  for (const auto& in : inputs) {
    std::string stem = fs::path(in).stem().string();
    if (stem.empty()) stem = "image";
    const int n = seen[stem]++;
    out.push_back(n == 0 ? stem : stem + "_" + std::to_string(n));
  }
  return out;
}

inline std::string history_text(const std::vector<EpochStats>& h) {
  std::string out;
  for (const auto& e : h) {
    out += "  epoch " + std::to_string(e.epoch) + " train_loss " + format_exact(e.train_loss) + " train_mse " +
           format_exact(e.train_mse) + " train_kl " + format_exact(e.train_kl) + " eval_mse " +
           format_exact(e.eval_mse) + "\n";
  }
  return out;
}

}  // namespace detail

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& cause, int exit_code)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

/// Runs every stage and writes the artifact directory. Throws PipelineError
/// (carrying the stage name) on failure, after removing partial outputs.
inline PipelineResult run_pipeline(const PipelineConfig& config) {
  validate(config);
  const fs::path out_dir(config.output_dir);
  if (fs::exists(out_dir) && !(fs::is_directory(out_dir) && fs::is_empty(out_dir))) {
    throw UsageError("pipeline: output directory '" + config.output_dir + "' exists and is not empty");
  }
  const fs::path staging = out_dir.string() + ".partial";
  std::string stage = "setup";
  try {
    fs::remove_all(staging);
    fs::create_directories(staging / "models");
    const StageSeeds seeds = stage_seeds(config.seed);
    PipelineResult result;

    stage = "load";
    std::vector<ImageGrid> images;
    for (const auto& path : config.inputs) images.push_back(load_raster(path));

    const auto obtain = [&](const std::string& path, ModelKind kind, std::uint64_t seed,
                            std::vector<EpochStats>& history) {
      if (!path.empty()) return load_model(path);
      TrainConfig tc = config.train;
      tc.seed = seed;
      auto trained = train(images, kind, tc);
      history = std::move(trained.history);
      return std::move(trained.model);
    };
    stage = "train.dae";
    result.dae = obtain(config.dae_model, ModelKind::DAE, seeds.train_dae, result.dae_history);
    stage = "train.bvae";
    result.bvae = obtain(config.bvae_model, ModelKind::BVAE, seeds.train_bvae, result.bvae_history);
    save_model(result.dae, (staging / "models" / "dae.model").string());
    save_model(result.bvae, (staging / "models" / "bvae.model").string());

    stage = "fis";
    const FuzzyClassifier classifier(resolve_fis_spec(config.fis_spec, config.swap_strong_possible), config.lut_bits);
    save_fis_spec(classifier.engine().spec(), (staging / "fis_spec.txt").string());

    const IsoForestParams iso{config.iso_trees, config.iso_subsample, seeds.isoforest};
    const auto stems = detail::unique_stems(config.inputs);
    const std::string fingerprint =
        "pairing=original-vs-output-map; ae_entropy_map=pixel_err; entropy_bins=" + std::to_string(config.entropy_bins) +
        "; pixel_norm=" + to_string(config.pixel_norm) + "; kernel_size=" + std::to_string(config.kernel_size) +
        "; lut_bits=" + std::to_string(config.lut_bits) +
        "; swap_strong_possible=" + (config.swap_strong_possible ? "true" : "false") + "; seed=" + std::to_string(config.seed);

    for (std::size_t k = 0; k < images.size(); ++k) {
      const ImageGrid& img = images[k];
      const fs::path dir = staging / stems[k];
      fs::create_directories(dir);
      ImageOutcome outcome;
      outcome.name = stems[k];

      const auto run_model = [&](const AutoencoderModel& model, const char* tag) {
        stage = std::string("reconstruct.") + tag;
        ModelOutputs mo;
        mo.reconstruction = reconstruct_image(model, img);
        stage = std::string("errmap.") + tag;
        mo.maps = compute_error_maps(img, mo.reconstruction, config.kernel_size, config.pixel_norm, config.pixel_eps);
        stage = std::string("fis.") + tag;
        mo.anomaly = classifier.classify(mo.maps);
        save_raster_pair(mo.reconstruction, dir / (std::string("recon_") + tag));
        save_raster_pair(mo.maps.pixel_err, dir / (std::string("pixel_err_") + tag));
        save_raster_pair(mo.maps.neigh_err, dir / (std::string("neigh_err_") + tag));
        save_raster_pair(mo.anomaly.anomaly, dir / (std::string("anomaly_") + tag));
        return mo;
      };
      outcome.dae = run_model(result.dae, "dae");
      outcome.bvae = run_model(result.bvae, "bvae");

      stage = "baseline";
      outcome.baselines = run_baselines(img, config.canny, iso);
      save_raster_pair(outcome.baselines.sobel, dir / "sobel");
      save_raster_pair(outcome.baselines.canny, dir / "canny");
      save_raster_pair(outcome.baselines.isoforest, dir / "isoforest");

      stage = "metrics";
      const auto& names = table_methods();
      const std::size_t bins = config.entropy_bins;
      outcome.report.config_fingerprint = fingerprint;
      outcome.report.add(evaluate_method(img, outcome.baselines.canny, names[0], nullptr, bins));
      outcome.report.add(evaluate_method(img, outcome.baselines.isoforest, names[1], nullptr, bins));
      outcome.report.add(evaluate_method(img, outcome.baselines.sobel, names[2], nullptr, bins));
      outcome.report.add(evaluate_method(img, outcome.dae.reconstruction, names[3], &outcome.dae.maps.pixel_err, bins));
      outcome.report.add(evaluate_method(img, outcome.bvae.reconstruction, names[4], &outcome.bvae.maps.pixel_err, bins));
      write_text_file((dir / "metrics.csv").string(), encode_csv(outcome.report));
      result.images.push_back(std::move(outcome));
    }

    stage = "manifest";
    write_text_file((staging / "config.txt").string(), encode_config(config));
    std::ostringstream m;
    m << "shockfis run manifest v1\n";
    m << "master_seed " << config.seed << "\n";
    m << "seed.train.dae " << seeds.train_dae << "\n";
    m << "seed.train.bvae " << seeds.train_bvae << "\n";
    m << "seed.baseline.isoforest " << seeds.isoforest << "\n";
    m << "model.dae " << (config.dae_model.empty() ? "trained" : "loaded:" + config.dae_model) << "\n";
    m << "model.bvae " << (config.bvae_model.empty() ? "trained" : "loaded:" + config.bvae_model) << "\n";
    m << "fingerprint " << fingerprint << "\n";
    m << "decision metric pairing: MSE/SSIM compare the original with each method's output map "
         "(reconstruction for autoencoders, edge/score map for baselines)\n";
    m << "decision entropy: bits over " << config.entropy_bins << " bins on [0,1]; autoencoder rows use pixel_err\n";
    m << "decision fuzzy fallback: " << format_exact(classifier.engine().spec().fallback_output)
      << " when no rule fires\n";
    if (!result.dae_history.empty()) m << "history.dae\n" << detail::history_text(result.dae_history);
    if (!result.bvae_history.empty()) m << "history.bvae\n" << detail::history_text(result.bvae_history);
    for (const auto& o : result.images) {
      m << "image " << o.name << " no_rule_fired.dae " << o.dae.anomaly.no_rule_fired << " no_rule_fired.bvae "
        << o.bvae.anomaly.no_rule_fired << "\n";
    }
    write_text_file((staging / "manifest.txt").string(), m.str());

    stage = "finalize";
    if (fs::exists(out_dir)) fs::remove(out_dir);  // empty, checked above
    fs::rename(staging, out_dir);
    return result;
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    int code = 2;
    if (dynamic_cast<const UsageError*>(&e)) code = 1;
    else if (dynamic_cast<const NumericalError*>(&e)) code = 3;
    throw PipelineError(stage, e.what(), code);
  }
}

}  // namespace shockfis
