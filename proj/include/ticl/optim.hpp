#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ticl/error.hpp"
#include "ticl/rng.hpp"
#include "ticl/tensor.hpp"

namespace ticl {

/// A learned tensor plus its training state. Gradient and both moment
/// accumulators always share the value's shape; moments start at zero.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m1;
  Tensor<T> m2;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<T>::zeros(value.shape);
    m1 = Tensor<T>::zeros(value.shape);
    m2 = Tensor<T>::zeros(value.shape);
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam step applied in place; gradients are cleared after
/// the update. Step numbering starts at 1.
template <typename T>
void adam_update(std::vector<Parameter<T>*>& params, const AdamConfig& cfg, int64_t step) {
  check(step >= 1, "adam_update: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Parameter<T>* p : params) {
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = static_cast<double>(p->grad.data[i]);
      if (!std::isfinite(g))
        throw NumericError("adam_update: non-finite gradient in " + p->name);
      double m = cfg.beta1 * static_cast<double>(p->m1.data[i]) + (1.0 - cfg.beta1) * g;
      double v = cfg.beta2 * static_cast<double>(p->m2.data[i]) + (1.0 - cfg.beta2) * g * g;
      p->m1.data[i] = static_cast<T>(m);
      p->m2.data[i] = static_cast<T>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->value.data[i] =
          static_cast<T>(static_cast<double>(p->value.data[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    p->zero_grad();
  }
}

/// Scales gradients so their global L2 norm is at most max_norm.
template <typename T>
double clip_grad_norm(std::vector<Parameter<T>*>& params, double max_norm) {
  double sq = 0.0;
  for (Parameter<T>* p : params)
    for (T g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter<T>* p : params)
      for (T& g : p->grad.data) g = static_cast<T>(static_cast<double>(g) * s);
  }
  return norm;
}

/// Central-difference check of a loss function's analytic gradients.
/// `run(with_grad)` must recompute the loss from the current parameter
/// values, and when with_grad is set, accumulate gradients into the
/// parameters (which this function zeroes beforehand). Up to max_coords
/// coordinates are sampled with RngStream(seed, "gradcheck"). Returns the
/// max over sampled coordinates of |analytic - numeric| / (|analytic| +
/// |numeric| + 1e-8). Meant to run with T = double.
template <typename T>
double grad_check(const std::function<double(bool)>& run, std::vector<Parameter<T>*> params,
                  double eps, int64_t max_coords, uint64_t seed) {
  for (Parameter<T>* p : params) p->zero_grad();
  run(true);

  int64_t total = 0;
  for (Parameter<T>* p : params) total += p->value.numel();
  check(total > 0, "grad_check: no parameters");

  std::vector<std::pair<int, int64_t>> coords;
  if (max_coords <= 0 || max_coords >= total) {
    for (size_t pi = 0; pi < params.size(); ++pi)
      for (int64_t i = 0; i < params[pi]->value.numel(); ++i)
        coords.emplace_back(static_cast<int>(pi), i);
  } else {
    RngStream rng(seed, "gradcheck");
    for (int64_t c = 0; c < max_coords; ++c) {
      int64_t flat = rng.uniform_int(0, total - 1);
      for (size_t pi = 0; pi < params.size(); ++pi) {
        if (flat < params[pi]->value.numel()) {
          coords.emplace_back(static_cast<int>(pi), flat);
          break;
        }
        flat -= params[pi]->value.numel();
      }
    }
  }

  double worst = 0.0;
  for (auto [pi, i] : coords) {
    Parameter<T>* p = params[static_cast<size_t>(pi)];
    const double analytic = static_cast<double>(p->grad.data[static_cast<size_t>(i)]);
    const T saved = p->value.data[static_cast<size_t>(i)];
    p->value.data[static_cast<size_t>(i)] = static_cast<T>(static_cast<double>(saved) + eps);
    const double fp = run(false);
    p->value.data[static_cast<size_t>(i)] = static_cast<T>(static_cast<double>(saved) - eps);
    const double fm = run(false);
    p->value.data[static_cast<size_t>(i)] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Seeded normal init, scaled like 1/sqrt(fan_in).
template <typename T>
Tensor<T> init_normal(std::vector<int64_t> shape, double stddev, RngStream& rng) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.data) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

}  // namespace ticl
