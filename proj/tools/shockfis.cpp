#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "shockfis/shockfis.hpp"

namespace fs = std::filesystem;
using namespace shockfis;

namespace {

std::string zero_padded(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

void print_epoch(const EpochStats& e) {
  std::cout << "epoch " << e.epoch << " train_loss " << format_metric(e.train_loss) << " train_mse "
            << format_metric(e.train_mse) << " train_kl " << format_metric(e.train_kl) << " eval_mse "
            << format_metric(e.eval_mse) << "\n";
}

// Pipeline flags mirror the config file keys: --learning-rate sets learning_rate.
const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys = {
      "output_dir", "seed",       "dae_model",   "bvae_model",  "epochs",     "batch_size",
      "learning_rate", "noise_sigma", "beta",     "patches_per_image", "patch_size", "pixel_norm",
      "kernel_size", "pixel_eps", "fis_spec",    "lut_bits",    "swap_strong_possible", "canny_sigma",
      "canny_low",  "canny_high", "iso_trees",   "iso_subsample", "entropy_bins"};
  return keys;
}

std::string flag_name(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shockfis: shadowgraph anomaly maps from autoencoder errors and fuzzy inference"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic shadowgraphs and disruption masks");
  SynthSpec sspec;
  std::size_t synth_count = 1;
  std::string synth_dir;
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str();
  synth->add_option("--width", sspec.width)->capture_default_str();
  synth->add_option("--height", sspec.height)->capture_default_str();
  synth->add_option("--band-period", sspec.band_period)->capture_default_str();
  synth->add_option("--band-amplitude", sspec.band_amplitude)->capture_default_str();
  synth->add_option("--disruptions", sspec.disruption_count)->capture_default_str();
  synth->add_option("--disruption-radius", sspec.disruption_radius)->capture_default_str();
  synth->add_option("--disruption-depth", sspec.disruption_depth)->capture_default_str();
  synth->add_option("--noise-sigma", sspec.noise_sigma)->capture_default_str();
  synth->add_option("--seed", sspec.seed)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a DAE or beta-VAE on image patches");
  std::string train_kind = "dae", train_out;
  std::vector<std::string> train_inputs;
  TrainConfig tcfg;
  std::uint64_t train_master = PipelineConfig{}.seed;
  train_cmd->add_option("--kind", train_kind, "dae or bvae")->check(CLI::IsMember({"dae", "bvae"}))->capture_default_str();
  train_cmd->add_option("--input", train_inputs, "Training images (PGM or raster dump)")->required();
  train_cmd->add_option("--out", train_out, "Model file to write")->required();
  train_cmd->add_option("--seed", train_master, "Master seed; the stage seed is derived from it")->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  train_cmd->add_option("--learning-rate", tcfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--noise-sigma", tcfg.noise_sigma)->capture_default_str();
  train_cmd->add_option("--beta", tcfg.beta)->capture_default_str();
  train_cmd->add_option("--patches-per-image", tcfg.patches_per_image)->capture_default_str();
  train_cmd->add_option("--patch-size", tcfg.patch_size)->capture_default_str();

  // reconstruct
  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct an image with a trained model");
  std::string recon_model, recon_input, recon_out;
  recon_cmd->add_option("--model", recon_model)->required();
  recon_cmd->add_option("--input", recon_input)->required();
  recon_cmd->add_option("--out", recon_out, "Output stem; writes <stem>.pgm and <stem>.txt")->required();

  // errmap
  auto* err_cmd = app.add_subcommand("errmap", "Pixel and neighborhood error maps");
  std::string err_orig, err_recon, err_pixel_out, err_neigh_out, err_norm = "pixel";
  std::size_t err_kernel = 5;
  double err_eps = 1e-6;
  err_cmd->add_option("--original", err_orig)->required();
  err_cmd->add_option("--recon", err_recon)->required();
  err_cmd->add_option("--pixel-out", err_pixel_out, "Output stem for the pixel error map")->required();
  err_cmd->add_option("--neigh-out", err_neigh_out, "Output stem for the neighborhood error map")->required();
  err_cmd->add_option("--pixel-norm", err_norm, "pixel or global")->capture_default_str();
  err_cmd->add_option("--kernel-size", err_kernel)->capture_default_str();
  err_cmd->add_option("--eps", err_eps)->capture_default_str();

  // fis
  auto* fis_cmd = app.add_subcommand("fis", "Fuzzy anomaly map from a pair of error maps");
  std::string fis_pixel, fis_neigh, fis_out, fis_spec_path, fis_dump;
  unsigned fis_bits = 8;
  bool fis_swap = false;
  fis_cmd->add_option("--pixel-err", fis_pixel);
  fis_cmd->add_option("--neigh-err", fis_neigh);
  fis_cmd->add_option("--out", fis_out, "Output stem for the anomaly map");
  fis_cmd->add_option("--spec", fis_spec_path, "Rule base file (default: built-in)");
  fis_cmd->add_option("--lut-bits", fis_bits, "Lookup table bits, 0 for direct inference")->capture_default_str();
  fis_cmd->add_flag("--swap-strong-possible", fis_swap, "Exchange the strong and possible consequents");
  fis_cmd->add_option("--dump-spec", fis_dump, "Write the effective rule base to this file");

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "Sobel, Canny and Isolation Forest maps");
  std::string base_input, base_dir;
  std::uint64_t base_master = PipelineConfig{}.seed;
  CannyParams base_canny;
  IsoForestParams base_iso;
  base_cmd->add_option("--input", base_input)->required();
  base_cmd->add_option("--out-dir", base_dir)->required();
  base_cmd->add_option("--seed", base_master, "Master seed; the stage seed is derived from it")->capture_default_str();
  base_cmd->add_option("--canny-sigma", base_canny.sigma)->capture_default_str();
  base_cmd->add_option("--canny-low", base_canny.low)->capture_default_str();
  base_cmd->add_option("--canny-high", base_canny.high)->capture_default_str();
  base_cmd->add_option("--iso-trees", base_iso.tree_count)->capture_default_str();
  base_cmd->add_option("--iso-subsample", base_iso.subsample_size)->capture_default_str();

  // metrics
  auto* met_cmd = app.add_subcommand("metrics", "Per-method MSE, SSIM and entropy table");
  std::string met_orig, met_canny, met_iso, met_sobel, met_dae, met_dae_err, met_bvae, met_bvae_err, met_out;
  std::size_t met_bins = 4096;
  met_cmd->add_option("--original", met_orig)->required();
  met_cmd->add_option("--canny", met_canny)->required();
  met_cmd->add_option("--isoforest", met_iso)->required();
  met_cmd->add_option("--sobel", met_sobel)->required();
  met_cmd->add_option("--dae-recon", met_dae)->required();
  met_cmd->add_option("--dae-pixel-err", met_dae_err)->required();
  met_cmd->add_option("--bvae-recon", met_bvae)->required();
  met_cmd->add_option("--bvae-pixel-err", met_bvae_err)->required();
  met_cmd->add_option("--out", met_out, "CSV file (default: stdout)");
  met_cmd->add_option("--entropy-bins", met_bins)->capture_default_str();

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage and write an artifact directory");
  std::string pipe_config;
  std::vector<std::string> pipe_inputs;
  std::vector<std::string> pipe_values(pipeline_keys().size());
  pipe_cmd->add_option("--config", pipe_config, "key = value configuration file");
  pipe_cmd->add_option("--input", pipe_inputs, "Input images (repeatable)");
  for (std::size_t i = 0; i < pipeline_keys().size(); ++i) {
    pipe_cmd->add_option(flag_name(pipeline_keys()[i]), pipe_values[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      fs::create_directories(synth_dir);
      const auto samples = generate_dataset(sspec, synth_count);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        save_pgm(samples[i].image, (fs::path(synth_dir) / ("img_" + zero_padded(i) + ".pgm")).string());
        save_pgm(samples[i].mask, (fs::path(synth_dir) / ("mask_" + zero_padded(i) + ".pgm")).string());
      }
      std::cout << "wrote " << samples.size() << " images to " << synth_dir << "\n";
    } else if (train_cmd->parsed()) {
      const ModelKind kind = parse_model_kind(train_kind);
      std::vector<ImageGrid> data;
      for (const auto& p : train_inputs) data.push_back(load_raster(p));
      const StageSeeds seeds = stage_seeds(train_master);
      tcfg.seed = kind == ModelKind::DAE ? seeds.train_dae : seeds.train_bvae;
      const auto result = train(data, kind, tcfg, print_epoch);
      save_model(result.model, train_out);
    } else if (recon_cmd->parsed()) {
      save_raster_pair(reconstruct_image(load_model(recon_model), load_raster(recon_input)), recon_out);
    } else if (err_cmd->parsed()) {
      const ErrorMaps maps =
          compute_error_maps(load_raster(err_orig), load_raster(err_recon), err_kernel, parse_pixel_norm(err_norm), err_eps);
      save_raster_pair(maps.pixel_err, err_pixel_out);
      save_raster_pair(maps.neigh_err, err_neigh_out);
    } else if (fis_cmd->parsed()) {
      const FisSpec spec = resolve_fis_spec(fis_spec_path, fis_swap);
      if (!fis_dump.empty()) save_fis_spec(spec, fis_dump);
      if (fis_pixel.empty() && fis_neigh.empty() && fis_out.empty()) {
        if (fis_dump.empty()) throw UsageError("fis: give --pixel-err, --neigh-err and --out, or --dump-spec");
        return 0;
      }
      if (fis_pixel.empty() || fis_neigh.empty() || fis_out.empty()) {
        throw UsageError("fis: --pixel-err, --neigh-err and --out are all required");
      }
      if (fis_bits != 0 && (fis_bits < 4 || fis_bits > 12)) throw UsageError("fis: --lut-bits must be 0 or 4..12");
      const FuzzyClassifier classifier(spec, fis_bits);
      const AnomalyMap result = classifier.classify({load_raster(fis_pixel), load_raster(fis_neigh)});
      save_raster_pair(result.anomaly, fis_out);
      std::cout << "no_rule_fired " << result.no_rule_fired << "\n";
    } else if (base_cmd->parsed()) {
      base_iso.seed = stage_seeds(base_master).isoforest;
      const auto maps = run_baselines(load_raster(base_input), base_canny, base_iso);
      fs::create_directories(base_dir);
      save_raster_pair(maps.sobel, fs::path(base_dir) / "sobel");
      save_raster_pair(maps.canny, fs::path(base_dir) / "canny");
      save_raster_pair(maps.isoforest, fs::path(base_dir) / "isoforest");
    } else if (met_cmd->parsed()) {
      const ImageGrid orig = load_raster(met_orig);
      const auto& names = table_methods();
      const ImageGrid dae_err = load_raster(met_dae_err);
      const ImageGrid bvae_err = load_raster(met_bvae_err);
      MetricsReport report;
      report.add(evaluate_method(orig, load_raster(met_canny), names[0], nullptr, met_bins));
      report.add(evaluate_method(orig, load_raster(met_iso), names[1], nullptr, met_bins));
      report.add(evaluate_method(orig, load_raster(met_sobel), names[2], nullptr, met_bins));
      report.add(evaluate_method(orig, load_raster(met_dae), names[3], &dae_err, met_bins));
      report.add(evaluate_method(orig, load_raster(met_bvae), names[4], &bvae_err, met_bins));
      const std::string csv = encode_csv(report);
      if (met_out.empty()) {
        std::cout << csv;
      } else {
        write_text_file(met_out, csv);
      }
    } else if (pipe_cmd->parsed()) {
      PipelineConfig cfg = pipe_config.empty() ? PipelineConfig{} : decode_config(read_text_file(pipe_config));
      if (!pipe_inputs.empty()) cfg.inputs = pipe_inputs;
      for (std::size_t i = 0; i < pipeline_keys().size(); ++i) {
        if (pipe_cmd->count(flag_name(pipeline_keys()[i])) > 0) apply_config_value(cfg, pipeline_keys()[i], pipe_values[i]);
      }
      const PipelineResult result = run_pipeline(cfg);
      for (const auto& img : result.images) {
        std::cout << img.name << ": no_rule_fired dae " << img.dae.anomaly.no_rule_fired << " bvae "
                  << img.bvae.anomaly.no_rule_fired << "\n";
      }
      std::cout << "wrote " << cfg.output_dir << "\n";
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
