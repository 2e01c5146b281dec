#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimfair/errors.hpp"
#include "slimfair/rng.hpp"
#include "slimfair/tensor.hpp"
#include "slimfair/width_grid.hpp"

namespace slimfair {

enum class LayerRole { Input, Hidden, Output };
enum class Mode { Train, Eval };

/// Width-sliceable fully connected layer. The weight is out_full x in_full,
/// row-major, stored in the owning model's flat parameter vector.
struct SlimmableDense {
  std::size_t in_full = 0;
  std::size_t out_full = 0;
  LayerRole role = LayerRole::Hidden;
  bool slice_in = true;   // false for the first layer (raw features)
  bool slice_out = true;  // false for the last layer (class logits)
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t active_in(double p) const { return slice_in ? sliced_units(p, in_full) : in_full; }
  std::size_t active_out(double p) const { return slice_out ? sliced_units(p, out_full) : out_full; }
  std::size_t weight_index(std::size_t r, std::size_t c) const { return weight_offset + r * in_full + c; }
};

/// Per-bucket running mean/variance for one hidden layer, stored in the
/// model's flat buffer vector as [bucket][mean(units), var(units)].
struct SwitchableNorm {
  std::size_t units = 0;
  std::size_t offset = 0;
  double momentum = 0.1;

  std::size_t mean_index(std::size_t bucket, std::size_t unit) const { return offset + bucket * 2 * units + unit; }
  std::size_t var_index(std::size_t bucket, std::size_t unit) const {
    return offset + bucket * 2 * units + units + unit;
  }
};

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 0;
  bool switchable_norm = false;
  double norm_momentum = 0.1;
};

inline constexpr double kNormEpsilon = 1e-5;

class SlimmableModel {
 public:
  SlimmableModel() = default;

  /// All parameters zero; norm statistics at (mean 0, var 1).
  SlimmableModel(Architecture arch, WidthGrid grid) : arch_(std::move(arch)), grid_(std::move(grid)) {
    if (arch_.input_dim == 0 || arch_.classes == 0) throw ShapeError("Architecture: zero input or class count");
    for (auto h : arch_.hidden) {
      if (h == 0) throw ShapeError("Architecture: zero-width hidden layer");
    }
    if (arch_.switchable_norm && !(arch_.norm_momentum > 0.0 && arch_.norm_momentum < 1.0)) {
      throw RangeError("Architecture: norm momentum must lie in (0, 1)");
    }
    std::vector<std::size_t> dims;
    dims.push_back(arch_.input_dim);
    dims.insert(dims.end(), arch_.hidden.begin(), arch_.hidden.end());
    dims.push_back(arch_.classes);

    std::size_t offset = 0;
    const std::size_t n_layers = dims.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      SlimmableDense layer;
      layer.in_full = dims[l];
      layer.out_full = dims[l + 1];
      layer.slice_in = l > 0;
      layer.slice_out = l + 1 < n_layers;
      layer.role = l == 0 ? LayerRole::Input : (l + 1 == n_layers ? LayerRole::Output : LayerRole::Hidden);
      layer.weight_offset = offset;
      offset += layer.out_full * layer.in_full;
      layer.bias_offset = offset;
      offset += layer.out_full;
      layers_.push_back(layer);
    }
    params_.assign(offset, 0.0);

    if (arch_.switchable_norm) {
      std::size_t buf = 0;
      for (auto h : arch_.hidden) {
        SwitchableNorm norm;
        norm.units = h;
        norm.offset = buf;
        norm.momentum = arch_.norm_momentum;
        buf += grid_.size() * 2 * h;
        norms_.push_back(norm);
      }
      buffers_.assign(buf, 0.0);
      for (const auto& norm : norms_) {
        for (std::size_t b = 0; b < grid_.size(); ++b) {
          for (std::size_t u = 0; u < norm.units; ++u) buffers_[norm.var_index(b, u)] = 1.0;
        }
      }
    }
  }

  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  SlimmableModel(Architecture arch, WidthGrid grid, Rng& rng) : SlimmableModel(std::move(arch), std::move(grid)) {
    for (const auto& layer : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_full));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = 0; i < layer.out_full * layer.in_full; ++i) params_[layer.weight_offset + i] = dist(rng);
      for (std::size_t i = 0; i < layer.out_full; ++i) params_[layer.bias_offset + i] = dist(rng);
    }
  }

  const Architecture& architecture() const { return arch_; }
  const WidthGrid& grid() const { return grid_; }
  const std::vector<SlimmableDense>& layers() const { return layers_; }
  const std::vector<SwitchableNorm>& norms() const { return norms_; }
  bool has_norm() const { return !norms_.empty(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& buffers() { return buffers_; }
  const std::vector<double>& buffers() const { return buffers_; }
  std::size_t param_count() const { return params_.size(); }

  double& weight(std::size_t l, std::size_t r, std::size_t c) { return params_[layers_[l].weight_index(r, c)]; }
  double weight(std::size_t l, std::size_t r, std::size_t c) const { return params_[layers_[l].weight_index(r, c)]; }
  double& bias(std::size_t l, std::size_t r) { return params_[layers_[l].bias_offset + r]; }
  double bias(std::size_t l, std::size_t r) const { return params_[layers_[l].bias_offset + r]; }

  /// Calls fn(index) for every parameter coordinate of the p-subnetwork.
  template <typename Fn>
  void for_each_in_slice(double p, Fn&& fn) const {
    grid_.check(p);
    for (const auto& layer : layers_) {
      const std::size_t rows = layer.active_out(p);
      const std::size_t cols = layer.active_in(p);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) fn(layer.weight_index(r, c));
      }
      for (std::size_t r = 0; r < rows; ++r) fn(layer.bias_offset + r);
    }
  }

  /// Sorted parameter indices of the p-subnetwork.
  std::vector<std::size_t> slice_view(double p) const {
    std::vector<std::size_t> out;
    for_each_in_slice(p, [&](std::size_t i) { out.push_back(i); });
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<std::uint8_t> slice_mask(double p) const {
    std::vector<std::uint8_t> mask(params_.size(), 0);
    for_each_in_slice(p, [&](std::size_t i) { mask[i] = 1; });
    return mask;
  }

  /// Norm-statistic entries a client with maximum width p can touch: buckets
  /// up to the one nearest p, units inside p's slice.
  std::vector<std::uint8_t> buffer_mask(double p) const {
    grid_.check(p);
    std::vector<std::uint8_t> mask(buffers_.size(), 0);
    const std::size_t top = grid_.nearest_index(p);
    for (const auto& norm : norms_) {
      const std::size_t units = sliced_units(p, norm.units);
      for (std::size_t b = 0; b <= top; ++b) {
        for (std::size_t u = 0; u < units; ++u) {
          mask[norm.mean_index(b, u)] = 1;
          mask[norm.var_index(b, u)] = 1;
        }
      }
    }
    return mask;
  }

  bool same_shape(const SlimmableModel& other) const {
    return params_.size() == other.params_.size() && buffers_.size() == other.buffers_.size();
  }

 private:
  Architecture arch_;
  WidthGrid grid_;
  std::vector<SlimmableDense> layers_;
  std::vector<SwitchableNorm> norms_;
  std::vector<double> params_;
  std::vector<double> buffers_;
};

/// Parameter gradient of the p-subnetwork. Stored densely; every entry
/// outside slice_view(width) is exactly zero.
struct Gradient {
  double width = 1.0;
  std::vector<double> values;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

namespace detail {

struct LayerCache {
  Tensor2 input;       // activations entering the layer (active columns only)
  Tensor2 pre;         // affine output before normalization
  Tensor2 normalized;  // after normalization (== pre when norm is off)
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;
};

struct ForwardResult {
  Tensor2 logits;
  std::vector<LayerCache> cache;
  std::size_t bucket = 0;
};

inline ForwardResult forward_impl(const SlimmableModel& model, const Tensor2& batch, double p, Mode mode) {
  const auto& layers = model.layers();
  if (batch.cols != model.architecture().input_dim) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols) + " columns, model expects " +
                     std::to_string(model.architecture().input_dim));
  }
  model.grid().check(p);
  ForwardResult res;
  res.bucket = model.grid().nearest_index(p);
  res.cache.resize(layers.size());
  const auto& params = model.params();
  const auto& buffers = model.buffers();
  const std::size_t n = batch.rows;

  Tensor2 act = batch;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::size_t rows = layer.active_out(p);
    const std::size_t cols = layer.active_in(p);
    auto& lc = res.cache[l];
    Tensor2 z(n, rows);
    for (std::size_t b = 0; b < n; ++b) {
      const double* x = act.data.data() + b * act.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* w = params.data() + layer.weight_index(r, 0);
        double s = params[layer.bias_offset + r];
        for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
        z(b, r) = s;
      }
    }
    lc.input = std::move(act);
    const bool last = l + 1 == layers.size();
    if (last) {
      lc.pre = z;
      lc.normalized = z;
      res.logits = std::move(z);
      break;
    }

    Tensor2 h = z;
    if (model.has_norm()) {
      const auto& norm = model.norms()[l];
      lc.inv_std.assign(rows, 0.0);
      if (mode == Mode::Train) {
        lc.batch_mean.assign(rows, 0.0);
        lc.batch_var.assign(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          double m = 0.0;
          for (std::size_t b = 0; b < n; ++b) m += z(b, r);
          m /= static_cast<double>(n);
          double v = 0.0;
          for (std::size_t b = 0; b < n; ++b) v += (z(b, r) - m) * (z(b, r) - m);
          v /= static_cast<double>(n);
          lc.batch_mean[r] = m;
          lc.batch_var[r] = v;
          lc.inv_std[r] = 1.0 / std::sqrt(v + kNormEpsilon);
          for (std::size_t b = 0; b < n; ++b) h(b, r) = (z(b, r) - m) * lc.inv_std[r];
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          const double m = buffers[norm.mean_index(res.bucket, r)];
          const double v = buffers[norm.var_index(res.bucket, r)];
          lc.inv_std[r] = 1.0 / std::sqrt(v + kNormEpsilon);
          for (std::size_t b = 0; b < n; ++b) h(b, r) = (z(b, r) - m) * lc.inv_std[r];
        }
      }
    }
    lc.pre = std::move(z);
    lc.normalized = h;
    for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
    act = std::move(h);
  }
  if (!res.logits.all_finite()) throw NumericError("forward: non-finite activation");
  return res;
}

inline void apply_norm_stats(SlimmableModel& model, const ForwardResult& res) {
  auto& buffers = model.buffers();
  for (std::size_t l = 0; l < model.norms().size(); ++l) {
    const auto& norm = model.norms()[l];
    const auto& lc = res.cache[l];
    for (std::size_t r = 0; r < lc.batch_mean.size(); ++r) {
      double& m = buffers[norm.mean_index(res.bucket, r)];
      double& v = buffers[norm.var_index(res.bucket, r)];
      m = (1.0 - norm.momentum) * m + norm.momentum * lc.batch_mean[r];
      v = (1.0 - norm.momentum) * v + norm.momentum * lc.batch_var[r];
    }
  }
}

inline void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) throw ShapeError("labels length does not match batch rows");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw RangeError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Mean softmax cross-entropy; optionally writes dL/dlogits.
inline double cross_entropy(const Tensor2& logits, std::span<const int> labels, Tensor2* dlogits) {
  const std::size_t n = logits.rows;
  const std::size_t k = logits.cols;
  double total = 0.0;
  if (dlogits) *dlogits = Tensor2(n, k);
  std::vector<double> prob(k);
  for (std::size_t b = 0; b < n; ++b) {
    double mx = logits(b, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(b, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[j] = std::exp(logits(b, j) - mx);
      z += prob[j];
    }
    const auto y = static_cast<std::size_t>(labels[b]);
    total += std::log(z) + mx - logits(b, y);
    if (dlogits) {
      for (std::size_t j = 0; j < k; ++j) {
        (*dlogits)(b, j) = (prob[j] / z - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

/// Logits of the p-subnetwork. Train mode normalizes with batch statistics
/// and folds them into the running statistics of the bucket nearest p.
inline Tensor2 forward(SlimmableModel& model, const Tensor2& batch, double p, Mode mode) {
  auto res = detail::forward_impl(model, batch, p, mode);
  if (mode == Mode::Train && model.has_norm()) detail::apply_norm_stats(model, res);
  return std::move(res.logits);
}

/// Eval-mode forward; never touches the model.
inline Tensor2 predict_logits(const SlimmableModel& model, const Tensor2& batch, double p) {
  return detail::forward_impl(model, batch, p, Mode::Eval).logits;
}

inline std::vector<int> predict(const SlimmableModel& model, const Tensor2& batch, double p) {
  auto logits = predict_logits(model, batch, p);
  std::vector<int> out(logits.rows);
  for (std::size_t b = 0; b < logits.rows; ++b) {
    auto row = logits.row(b);
    out[b] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline double loss(const SlimmableModel& model, const Tensor2& batch, std::span<const int> labels, double p,
                   Mode mode) {
  detail::check_labels(labels, batch.rows, model.architecture().classes);
  auto res = detail::forward_impl(model, batch, p, mode);
  return detail::cross_entropy(res.logits, labels, nullptr);
}

/// Cross-entropy loss and its gradient restricted to the p-subnetwork.
inline LossAndGradient backward(SlimmableModel& model, const Tensor2& batch, std::span<const int> labels, double p,
                                Mode mode = Mode::Train) {
  detail::check_labels(labels, batch.rows, model.architecture().classes);
  auto res = detail::forward_impl(model, batch, p, mode);
  Tensor2 delta;
  LossAndGradient out;
  out.loss = detail::cross_entropy(res.logits, labels, &delta);
  out.gradient.width = p;
  out.gradient.values.assign(model.param_count(), 0.0);
  auto& g = out.gradient.values;
  const auto& params = model.params();
  const auto& layers = model.layers();
  const std::size_t n = batch.rows;

  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& lc = res.cache[li];
    const std::size_t rows = layer.active_out(p);
    const std::size_t cols = layer.active_in(p);

    if (li + 1 < layers.size()) {
      // delta currently holds dL/d(post-ReLU); push through ReLU and norm.
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t r = 0; r < rows; ++r) {
          if (lc.normalized(b, r) <= 0.0) delta(b, r) = 0.0;
        }
      }
      if (model.has_norm()) {
        if (mode == Mode::Train) {
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
              mean_d += delta(b, r);
              mean_dx += delta(b, r) * lc.normalized(b, r);
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t b = 0; b < n; ++b) {
              delta(b, r) = lc.inv_std[r] * (delta(b, r) - mean_d - lc.normalized(b, r) * mean_dx);
            }
          }
        } else {
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t r = 0; r < rows; ++r) delta(b, r) *= lc.inv_std[r];
          }
        }
      }
    }

    for (std::size_t b = 0; b < n; ++b) {
      const double* x = lc.input.data.data() + b * lc.input.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = delta(b, r);
        if (d == 0.0) continue;
        double* gw = g.data() + layer.weight_index(r, 0);
        for (std::size_t c = 0; c < cols; ++c) gw[c] += d * x[c];
        g[layer.bias_offset + r] += d;
      }
    }

    if (li == 0) break;
    Tensor2 prev(n, cols);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = delta(b, r);
        if (d == 0.0) continue;
        const double* w = params.data() + layer.weight_index(r, 0);
        for (std::size_t c = 0; c < cols; ++c) prev(b, c) += d * w[c];
      }
    }
    delta = std::move(prev);
  }

  if (mode == Mode::Train && model.has_norm()) detail::apply_norm_stats(model, res);
  return out;
}

/// SGD with heavy-ball momentum (v <- mu v + g; x <- x - lr v). Velocity is
/// kept per coordinate; only coordinates inside the gradient's slice move.
class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr > 0.0)) throw RangeError("Sgd: learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw RangeError("Sgd: momentum must lie in [0, 1)");
  }

  void step(SlimmableModel& model, const Gradient& grad) {
    if (grad.values.size() != model.param_count()) throw ShapeError("Sgd: gradient size mismatch");
    for (double v : grad.values) {
      if (!std::isfinite(v)) throw NumericError("Sgd: non-finite gradient");
    }
    if (velocity_.size() != model.param_count()) velocity_.assign(model.param_count(), 0.0);
    auto& x = model.params();
    model.for_each_in_slice(grad.width, [&](std::size_t i) {
      velocity_[i] = momentum_ * velocity_[i] + grad.values[i];
      x[i] -= lr_ * velocity_[i];
    });
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::vector<double> velocity_;
};

}  // namespace slimfair
