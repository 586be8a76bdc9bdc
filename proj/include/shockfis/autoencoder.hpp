#pragma once

// Dense autoencoders on flattened square patches.
//
// Layer dims d0 -> d1 -> ... -> dn (odd count, bottleneck in the middle, dn == d0).
//
//   DAE  : every hidden layer ReLU (bottleneck included), sigmoid output.
//   BVAE : the layer into the bottleneck is replaced by two linear heads,
//          mu and logvar, each of width d_mid; z = mu + exp(logvar/2) * eps.
//          At inference eps = 0, so z = mu.
//
// All parameters live in one flat vector. Layer order: encoder layers, then
// the bottleneck layer (DAE) or the mu head followed by the logvar head
// (BVAE), then decoder layers. Inside a layer: the out x in weight matrix in
// row-major order, followed by the out biases.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/rng.hpp"
#include "shockfis/text_io.hpp"

namespace shockfis {

enum class ModelKind { DAE, BVAE };

inline const char* to_string(ModelKind kind) noexcept { return kind == ModelKind::DAE ? "dae" : "bvae"; }

inline ModelKind parse_model_kind(const std::string& name) {
  if (name == "dae" || name == "DAE") return ModelKind::DAE;
  if (name == "bvae" || name == "BVAE" || name == "beta-vae") return ModelKind::BVAE;
  throw UsageError("unknown model kind '" + name + "' (expected dae|bvae)");
}

enum class Activation { ReLU, Linear, Sigmoid };

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  Activation activation = Activation::ReLU;
};

inline std::vector<std::size_t> default_layer_dims(ModelKind kind, std::size_t patch_size = 32) {
  const std::size_t d = patch_size * patch_size;
  return {d, 256, kind == ModelKind::DAE ? std::size_t{64} : std::size_t{16}, 256, d};
}

class AutoencoderModel {
 public:
  AutoencoderModel() = default;

  AutoencoderModel(ModelKind kind, std::vector<std::size_t> layer_dims, double beta = 1.0)
      : kind_(kind), dims_(std::move(layer_dims)), beta_(beta) {
    if (dims_.empty()) throw UsageError("autoencoder: empty layer_dims");
    if (dims_.size() < 3 || dims_.size() % 2 == 0) {
      throw UsageError("autoencoder: layer_dims needs an odd count >= 3 (bottleneck in the middle)");
    }
    if (std::find(dims_.begin(), dims_.end(), 0u) != dims_.end()) {
      throw UsageError("autoencoder: zero-width layer");
    }
    if (dims_.front() != dims_.back()) throw UsageError("autoencoder: output width must equal input width");
    if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw UsageError("autoencoder: beta must be finite and >= 0");
    const std::size_t mid = dims_.size() / 2;
    std::size_t offset = 0;
    const auto add = [&](std::size_t in, std::size_t out, Activation act) {
      layers_.push_back({in, out, offset, offset + in * out, act});
      offset += in * out + out;
    };
    for (std::size_t i = 0; i + 1 < mid; ++i) add(dims_[i], dims_[i + 1], Activation::ReLU);
    if (kind_ == ModelKind::DAE) {
      add(dims_[mid - 1], dims_[mid], Activation::ReLU);
    } else {
      add(dims_[mid - 1], dims_[mid], Activation::Linear);  // mu
      add(dims_[mid - 1], dims_[mid], Activation::Linear);  // logvar
    }
    for (std::size_t i = mid; i + 1 < dims_.size(); ++i) {
      add(dims_[i], dims_[i + 1], i + 2 == dims_.size() ? Activation::Sigmoid : Activation::ReLU);
    }
    params_.assign(offset, 0.0);
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dims_.front()))));
    patch_size_ = side * side == dims_.front() ? side : 0;
  }

  ModelKind kind() const noexcept { return kind_; }
  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  double beta() const noexcept { return beta_; }
  void set_beta(double beta) { beta_ = beta; }
  std::size_t input_size() const noexcept { return dims_.front(); }
  std::size_t latent_size() const noexcept { return dims_[dims_.size() / 2]; }
  /// Side of the square patch, 0 when the input width is not a perfect square.
  std::size_t patch_size() const noexcept { return patch_size_; }

  std::uint64_t train_seed = 0;
  double final_loss = 0.0;

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  // Index helpers into layers().
  std::size_t encoder_layers() const noexcept { return dims_.size() / 2 - 1; }
  std::size_t decoder_begin() const noexcept { return encoder_layers() + (kind_ == ModelKind::DAE ? 1 : 2); }

  friend bool operator==(const AutoencoderModel& a, const AutoencoderModel& b) {
    return a.kind_ == b.kind_ && a.dims_ == b.dims_ && a.beta_ == b.beta_ && a.params_ == b.params_ &&
           a.train_seed == b.train_seed && a.final_loss == b.final_loss;
  }

 private:
  ModelKind kind_ = ModelKind::DAE;
  std::vector<std::size_t> dims_;
  double beta_ = 1.0;
  std::size_t patch_size_ = 0;
  std::vector<DenseLayer> layers_;
  std::vector<double> params_;
};

/// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
inline AutoencoderModel init_params(std::uint64_t seed, ModelKind kind, std::vector<std::size_t> layer_dims,
                                    double beta = 1.0) {
  AutoencoderModel model(kind, std::move(layer_dims), beta);
  model.train_seed = seed;
  Rng rng(seed);
  auto p = model.params();
  for (const auto& layer : model.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
      p[layer.weight_offset + i] = rng.uniform(-limit, limit);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardResult {
  std::vector<double> reconstruction;
  std::optional<std::vector<double>> mu;
  std::optional<std::vector<double>> logvar;
};

namespace detail {

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void dense_forward(const DenseLayer& layer, std::span<const double> params, std::span<const double> in,
                          std::vector<double>& out) {
  out.resize(layer.out);
  const double* w = params.data() + layer.weight_offset;
  const double* b = params.data() + layer.bias_offset;
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = w + o * layer.in;
    double acc = b[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * in[i];
    switch (layer.activation) {
      case Activation::ReLU: acc = acc > 0.0 ? acc : 0.0; break;
      case Activation::Sigmoid: acc = sigmoid(acc); break;
      case Activation::Linear: break;
    }
    out[o] = acc;
  }
}

// delta holds dL/d(pre-activation). Accumulates weight/bias gradients and,
// when d_in is non-null, adds W^T delta into it.
inline void dense_backward(const DenseLayer& layer, std::span<const double> params, std::span<const double> in,
                           std::span<const double> delta, std::span<double> grads, std::vector<double>* d_in) {
  const double* w = params.data() + layer.weight_offset;
  double* gw = grads.data() + layer.weight_offset;
  double* gb = grads.data() + layer.bias_offset;
  if (d_in) d_in->assign(layer.in, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double d = delta[o];
    if (d == 0.0) continue;
    gb[o] += d;
    double* grow = gw + o * layer.in;
    const double* row = w + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) grow[i] += d * in[i];
    if (d_in) {
      double* di = d_in->data();
      for (std::size_t i = 0; i < layer.in; ++i) di[i] += d * row[i];
    }
  }
}

// Converts dL/d(activation) into dL/d(pre-activation) in place.
inline void activation_backward(Activation act, std::span<const double> out, std::vector<double>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    switch (act) {
      case Activation::ReLU: grad[i] = out[i] > 0.0 ? grad[i] : 0.0; break;
      case Activation::Sigmoid: grad[i] *= out[i] * (1.0 - out[i]); break;
      case Activation::Linear: break;
    }
  }
}

struct Trace {
  std::vector<std::vector<double>> encoder;  // [0] = input, then each encoder layer output
  std::vector<double> code;                  // DAE bottleneck activation
  std::vector<double> mu, logvar, eps, z;    // BVAE
  std::vector<std::vector<double>> decoder;  // [0] = z or code, then each decoder layer output
};

inline void run_forward(const AutoencoderModel& model, std::span<const double> input,
                        std::span<const double> eps, Trace& t) {
  const auto& layers = model.layers();
  const auto params = model.params();
  const std::size_t enc = model.encoder_layers();
  t.encoder.resize(enc + 1);
  t.encoder[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < enc; ++l) dense_forward(layers[l], params, t.encoder[l], t.encoder[l + 1]);
  const auto& h = t.encoder[enc];
  const std::size_t dec = model.decoder_begin();
  t.decoder.resize(layers.size() - dec + 1);
  if (model.kind() == ModelKind::DAE) {
    dense_forward(layers[enc], params, h, t.code);
    t.decoder[0] = t.code;
  } else {
    dense_forward(layers[enc], params, h, t.mu);
    dense_forward(layers[enc + 1], params, h, t.logvar);
    const std::size_t latent = t.mu.size();
    t.eps.assign(latent, 0.0);
    if (!eps.empty()) std::copy(eps.begin(), eps.end(), t.eps.begin());
    t.z.resize(latent);
    for (std::size_t i = 0; i < latent; ++i) t.z[i] = t.mu[i] + std::exp(0.5 * t.logvar[i]) * t.eps[i];
    t.decoder[0] = t.z;
  }
  for (std::size_t l = dec; l < layers.size(); ++l) {
    dense_forward(layers[l], params, t.decoder[l - dec], t.decoder[l - dec + 1]);
  }
}

inline void check_forward_args(const AutoencoderModel& model, std::span<const double> patch,
                               std::span<const double> eps) {
  if (patch.size() != model.input_size()) {
    throw DataError("autoencoder: patch length " + std::to_string(patch.size()) + " != input width " +
                    std::to_string(model.input_size()));
  }
  if (!eps.empty() && (model.kind() != ModelKind::BVAE || eps.size() != model.latent_size())) {
    throw DataError("autoencoder: eps length " + std::to_string(eps.size()) + " does not match latent width");
  }
}

}  // namespace detail

/// Reconstruction of one flattened patch. For BVAE, empty eps means z = mu.
inline ForwardResult forward(const AutoencoderModel& model, std::span<const double> patch,
                             std::span<const double> eps = {}) {
  detail::check_forward_args(model, patch, eps);
  detail::Trace t;
  detail::run_forward(model, patch, eps, t);
  ForwardResult r;
  r.reconstruction = std::move(t.decoder.back());
  if (model.kind() == ModelKind::BVAE) {
    r.mu = std::move(t.mu);
    r.logvar = std::move(t.logvar);
  }
  return r;
}

/// Per-dimension mean Gaussian KL against N(0, I):
/// -0.5 * mean(1 + logvar - mu^2 - exp(logvar)).
inline double kl_divergence(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw DataError("kl_divergence: length mismatch");
  if (mu.empty()) throw DataError("kl_divergence: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += 1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]);
  }
  return std::max(0.0, -0.5 * acc / static_cast<double>(mu.size()));
}

struct TrainingPair {
  std::vector<double> input;   // possibly corrupted
  std::vector<double> target;  // clean
};

struct LossResult {
  double loss = 0.0;
  double mse = 0.0;  // batch mean reconstruction MSE
  double kl = 0.0;   // batch mean KL (BVAE), 0 for DAE
  std::vector<double> gradients;
};

/// Batch loss with exact gradients.
///   DAE : mean over batch of per-pixel MSE against the clean target.
///   BVAE: that MSE plus beta * per-dimension mean KL, both batch means.
/// `eps` holds one latent noise vector per sample (BVAE); empty means zeros.
inline LossResult loss_and_gradients(const AutoencoderModel& model, std::span<const TrainingPair> batch,
                                     std::span<const std::vector<double>> eps = {}) {
  if (batch.empty()) throw DataError("loss_and_gradients: empty batch");
  if (!eps.empty() && eps.size() != batch.size()) throw DataError("loss_and_gradients: eps batch size mismatch");
  const bool vae = model.kind() == ModelKind::BVAE;
  const auto& layers = model.layers();
  const auto params = model.params();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double inv_pixels = 1.0 / static_cast<double>(model.input_size());
  const double inv_latent = 1.0 / static_cast<double>(model.latent_size());
  const std::size_t enc = model.encoder_layers();
  const std::size_t dec = model.decoder_begin();

  LossResult res;
  res.gradients.assign(params.size(), 0.0);
  detail::Trace t;
  std::vector<double> grad, next;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& pair = batch[s];
    if (pair.target.size() != model.input_size()) throw DataError("loss_and_gradients: target length mismatch");
    const std::span<const double> e = eps.empty() ? std::span<const double>{} : std::span<const double>(eps[s]);
    detail::check_forward_args(model, pair.input, e);
    detail::run_forward(model, pair.input, e, t);

    const auto& y = t.decoder.back();
    double se = 0.0;
    grad.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = y[i] - pair.target[i];
      se += d * d;
      grad[i] = 2.0 * d * inv_pixels * inv_batch;
    }
    res.mse += se * inv_pixels * inv_batch;

    // Decoder, output layer first.
    for (std::size_t l = layers.size(); l-- > dec;) {
      detail::activation_backward(layers[l].activation, t.decoder[l - dec + 1], grad);
      detail::dense_backward(layers[l], params, t.decoder[l - dec], grad, res.gradients, &next);
      std::swap(grad, next);
    }

    const auto& h = t.encoder[enc];
    if (!vae) {
      detail::activation_backward(layers[enc].activation, t.code, grad);
      detail::dense_backward(layers[enc], params, h, grad, res.gradients, &next);
      std::swap(grad, next);
    } else {
      const std::size_t latent = t.mu.size();
      res.kl += kl_divergence(t.mu, t.logvar) * inv_batch;
      const double kl_scale = model.beta() * inv_latent * inv_batch;
      std::vector<double> d_mu(latent), d_lv(latent);
      for (std::size_t i = 0; i < latent; ++i) {
        const double sd = std::exp(0.5 * t.logvar[i]);
        d_mu[i] = grad[i] + kl_scale * t.mu[i];
        d_lv[i] = grad[i] * t.eps[i] * 0.5 * sd - 0.5 * kl_scale * (1.0 - sd * sd);
      }
      std::vector<double> from_lv;
      detail::dense_backward(layers[enc], params, h, d_mu, res.gradients, &next);
      detail::dense_backward(layers[enc + 1], params, h, d_lv, res.gradients, &from_lv);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += from_lv[i];
      std::swap(grad, next);
    }

    for (std::size_t l = enc; l-- > 0;) {
      detail::activation_backward(layers[l].activation, t.encoder[l + 1], grad);
      detail::dense_backward(layers[l], params, t.encoder[l], grad, res.gradients, l > 0 ? &next : nullptr);
      if (l > 0) std::swap(grad, next);
    }
  }
  res.loss = res.mse + (vae ? model.beta() * res.kl : 0.0);
  if (!std::isfinite(res.loss)) throw NumericalError("autoencoder: non-finite loss (training diverged)");
  return res;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update at step t (t >= 1).
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
                      std::uint64_t t, const AdamConfig& config = {}) {
  if (grads.size() != params.size() || moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw DataError("adam_step: shape mismatch");
  }
  if (t < 1) throw UsageError("adam_step: step must be >= 1");
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
    moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Patches

inline std::vector<double> extract_patch(const ImageGrid& img, std::size_t x0, std::size_t y0, std::size_t size) {
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out[y * size + x] = img.at(x0 + x, y0 + y);
  }
  return out;
}

/// Tile origins along one axis: 0, stride, 2*stride, ... plus a final tile
/// flush with the far edge when the regular grid leaves it uncovered.
inline std::vector<std::size_t> tile_origins(std::size_t length, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw UsageError("tile_origins: zero patch or stride");
  if (length < patch) throw DataError("image smaller than one patch");
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p + patch <= length; p += stride) out.push_back(p);
  if (out.back() + patch < length) out.push_back(length - patch);
  return out;
}

/// Full-image reconstruction: overlapping tiles at stride patch/2, overlap averaged.
inline ImageGrid reconstruct_image(const AutoencoderModel& model, const ImageGrid& img) {
  const std::size_t p = model.patch_size();
  if (p == 0) throw DataError("reconstruct_image: model input is not a square patch");
  if (img.width() < p || img.height() < p) {
    throw DataError("reconstruct_image: image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                    " smaller than one " + std::to_string(p) + "x" + std::to_string(p) + " patch");
  }
  const std::size_t stride = std::max<std::size_t>(1, p / 2);
  const auto xs = tile_origins(img.width(), p, stride);
  const auto ys = tile_origins(img.height(), p, stride);
  std::vector<double> sum(img.size(), 0.0);
  std::vector<unsigned> count(img.size(), 0);
  for (std::size_t y0 : ys) {
    for (std::size_t x0 : xs) {
      const auto out = forward(model, extract_patch(img, x0, y0, p)).reconstruction;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          const std::size_t k = (y0 + y) * img.width() + (x0 + x);
          sum[k] += out[y * p + x];
          ++count[k];
        }
      }
    }
  }
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = std::clamp(sum[k] / count[k], 0.0, 1.0);
  return ImageGrid(img.width(), img.height(), std::move(sum));
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double noise_sigma = 0.1;  // DAE input corruption
  double beta = 1.0;         // BVAE KL weight
  std::uint64_t seed = 42;
  std::size_t patches_per_image = 32;
  std::size_t patch_size = 32;
  std::vector<std::size_t> layer_dims;  // empty: default_layer_dims(kind, patch_size)
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw UsageError("train: learning_rate must be > 0");
  if (c.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (!(c.noise_sigma >= 0.0)) throw UsageError("train: noise_sigma must be >= 0");
  if (!(c.beta >= 0.0)) throw UsageError("train: beta must be >= 0");
  if (c.patches_per_image < 1) throw UsageError("train: patches_per_image must be >= 1");
  if (c.patch_size < 2) throw UsageError("train: patch_size must be >= 2");
}

struct EpochStats {
  std::size_t epoch = 0;     // 0 = before any update
  double train_loss = 0.0;   // mean batch loss over the epoch (0 for epoch 0)
  double train_mse = 0.0;
  double train_kl = 0.0;
  double eval_mse = 0.0;     // clean-input reconstruction MSE on the fixed evaluation patches
};

struct TrainResult {
  AutoencoderModel model;
  std::vector<EpochStats> history;
};

namespace detail {

struct PatchRef {
  std::size_t image, x, y;
};

inline std::vector<PatchRef> sample_patches(const std::vector<ImageGrid>& data, std::size_t per_image,
                                            std::size_t patch, Rng& rng) {
  std::vector<PatchRef> out;
  out.reserve(data.size() * per_image);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < per_image; ++k) {
      out.push_back({i, static_cast<std::size_t>(rng.below(data[i].width() - patch + 1)),
                     static_cast<std::size_t>(rng.below(data[i].height() - patch + 1))});
    }
  }
  return out;
}

inline double eval_mse(const AutoencoderModel& model, const std::vector<std::vector<double>>& patches) {
  double acc = 0.0;
  for (const auto& p : patches) {
    const auto y = forward(model, p).reconstruction;
    double se = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) se += (y[i] - p[i]) * (y[i] - p[i]);
    acc += se / static_cast<double>(y.size());
  }
  return acc / static_cast<double>(patches.size());
}

}  // namespace detail

/// Minibatch Adam training on randomly placed patches. Deterministic per seed.
/// Streams: "ae.init" weights, "ae.patches" positions/shuffles, "ae.noise"
/// corruption and latent eps, "ae.eval" the fixed evaluation patch set.
template <typename Logger = std::nullptr_t>
TrainResult train(const std::vector<ImageGrid>& dataset, ModelKind kind, const TrainConfig& config,
                  Logger&& log = nullptr) {
  validate(config);
  if (dataset.empty()) throw DataError("train: empty dataset");
  const std::size_t p = config.patch_size;
  for (const auto& img : dataset) {
    if (img.width() < p || img.height() < p) throw DataError("train: image smaller than one patch");
  }
  auto dims = config.layer_dims.empty() ? default_layer_dims(kind, p) : config.layer_dims;
  if (dims.front() != p * p) throw UsageError("train: first layer width must equal patch_size^2");

  TrainResult result{init_params(derive_seed(config.seed, "ae.init"), kind, dims, config.beta), {}};
  AutoencoderModel& model = result.model;
  model.train_seed = config.seed;

  Rng patch_rng(derive_seed(config.seed, "ae.patches"));
  Rng noise_rng(derive_seed(config.seed, "ae.noise"));
  Rng eval_rng(derive_seed(config.seed, "ae.eval"));

  std::vector<std::vector<double>> eval_set;
  for (const auto& ref : detail::sample_patches(dataset, std::min<std::size_t>(config.patches_per_image, 8), p, eval_rng)) {
    eval_set.push_back(extract_patch(dataset[ref.image], ref.x, ref.y, p));
  }

  result.history.push_back({0, 0.0, 0.0, 0.0, detail::eval_mse(model, eval_set)});
  if constexpr (!std::is_same_v<std::decay_t<Logger>, std::nullptr_t>) log(result.history.back());

  AdamMoments moments(model.params().size());
  const AdamConfig adam{config.learning_rate};
  std::uint64_t step = 0;
  const bool vae = kind == ModelKind::BVAE;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto refs = detail::sample_patches(dataset, config.patches_per_image, p, patch_rng);
    patch_rng.shuffle(refs);
    EpochStats stats{epoch};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < refs.size(); start += config.batch_size) {
      const std::size_t end = std::min(refs.size(), start + config.batch_size);
      std::vector<TrainingPair> batch;
      std::vector<std::vector<double>> eps;
      for (std::size_t k = start; k < end; ++k) {
        TrainingPair pair;
        pair.target = extract_patch(dataset[refs[k].image], refs[k].x, refs[k].y, p);
        pair.input = pair.target;
        if (!vae && config.noise_sigma > 0.0) {
          for (double& v : pair.input) v = std::clamp(v + config.noise_sigma * noise_rng.normal(), 0.0, 1.0);
        }
        if (vae) {
          std::vector<double> e(model.latent_size());
          for (double& v : e) v = noise_rng.normal();
          eps.push_back(std::move(e));
        }
        batch.push_back(std::move(pair));
      }
      const LossResult lr = loss_and_gradients(model, batch, eps);
      adam_step(model.params(), lr.gradients, moments, ++step, adam);
      stats.train_loss += lr.loss;
      stats.train_mse += lr.mse;
      stats.train_kl += lr.kl;
      ++batches;
    }
    stats.train_loss /= static_cast<double>(batches);
    stats.train_mse /= static_cast<double>(batches);
    stats.train_kl /= static_cast<double>(batches);
    stats.eval_mse = detail::eval_mse(model, eval_set);
    if (!std::isfinite(stats.eval_mse)) throw NumericalError("train: non-finite evaluation loss");
    result.history.push_back(stats);
    if constexpr (!std::is_same_v<std::decay_t<Logger>, std::nullptr_t>) log(result.history.back());
  }
  const EpochStats& last = result.history.back();
  model.final_loss = last.epoch == 0 ? last.eval_mse : last.train_loss;
  return result;
}

// ---------------------------------------------------------------------------
// Model file
//
//   SHOCKFIS-AE v1 <dae|bvae> <beta>
//   <layer dims, space separated>
//   train_seed <u64> final_loss <double>
//   one line per weight row, then one line of biases, for each layer in order

inline std::string encode_model(const AutoencoderModel& model) {
  std::string out = "SHOCKFIS-AE v1 " + std::string(to_string(model.kind())) + " " + format_exact(model.beta()) + "\n";
  for (std::size_t i = 0; i < model.layer_dims().size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(model.layer_dims()[i]);
  }
  out += "\ntrain_seed " + std::to_string(model.train_seed) + " final_loss " + format_exact(model.final_loss) + "\n";
  const auto p = model.params();
  for (const auto& layer : model.layers()) {
    for (std::size_t o = 0; o < layer.out; ++o) {
      for (std::size_t i = 0; i < layer.in; ++i) {
        if (i) out += ' ';
        out += format_exact(p[layer.weight_offset + o * layer.in + i]);
      }
      out += '\n';
    }
    for (std::size_t o = 0; o < layer.out; ++o) {
      if (o) out += ' ';
      out += format_exact(p[layer.bias_offset + o]);
    }
    out += '\n';
  }
  return out;
}

inline AutoencoderModel decode_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file: empty");
  const auto head = split_ws(line);
  if (head.size() != 4 || head[0] != "SHOCKFIS-AE" || head[1] != "v1") {
    throw DataError("model file: bad header (expected 'SHOCKFIS-AE v1 <kind> <beta>')");
  }
  ModelKind kind;
  try {
    kind = parse_model_kind(head[2]);
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  const double beta = parse_double(head[3], "model beta");
  if (!std::getline(in, line)) throw DataError("model file: missing layer dims");
  std::vector<std::size_t> dims;
  for (const auto& tok : split_ws(line)) dims.push_back(parse_int<std::size_t>(tok, "layer dim"));
  if (!std::getline(in, line)) throw DataError("model file: missing metadata line");
  const auto meta = split_ws(line);
  if (meta.size() != 4 || meta[0] != "train_seed" || meta[2] != "final_loss") {
    throw DataError("model file: bad metadata line");
  }
  AutoencoderModel model;
  try {
    model = AutoencoderModel(kind, dims, beta);
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  model.train_seed = parse_int<std::uint64_t>(meta[1], "train_seed");
  model.final_loss = parse_double(meta[3], "final_loss");
  auto p = model.params();
  std::size_t k = 0;
  std::string tok;
  while (in >> tok) {
    if (k == p.size()) throw DataError("model file: too many parameters");
    p[k] = parse_double(tok, "model parameter");
    if (!std::isfinite(p[k])) throw DataError("model file: non-finite parameter");
    ++k;
  }
  if (k != p.size()) {
    throw DataError("model file: expected " + std::to_string(p.size()) + " parameters, found " + std::to_string(k));
  }
  return model;
}

inline void save_model(const AutoencoderModel& model, const std::string& path) {
  write_text_file(path, encode_model(model));
}

inline AutoencoderModel load_model(const std::string& path) { return decode_model(read_text_file(path)); }

}  // namespace shockfis
