#include <cmath>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

BatchNormState BatchNormState::identity(std::size_t channels, BatchNormSpec spec) {
  const Shape4 shape{1, channels, 1, 1};
  return {Tensor(shape, 1.0), Tensor(shape, 0.0), Tensor(shape, 0.0), Tensor(shape, 1.0), spec};
}

Tensor batchnorm2d_forward(const Tensor& x, BatchNormState& state, Mode mode,
                           BatchNormCache* cache) {
  return batchnorm2d_forward(x, state.gamma, state.beta, state.running_mean, state.running_var,
                             state.spec, mode, cache);
}

Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           Tensor& running_mean, Tensor& running_var, const BatchNormSpec& spec,
                           Mode mode, BatchNormCache* cache) {
  validate(spec);
  const auto& s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c || running_mean.size() != s.c ||
      running_var.size() != s.c) {
    throw ShapeError(fmt::format("batchnorm: parameters sized for {} channels, input has {}",
                                 gamma.size(), s.c));
  }
  if (mode == Mode::kTraining && s.n < 2) {
    throw UsageError("batchnorm: training mode needs a batch of at least 2 samples");
  }
  const std::size_t area = s.h * s.w;
  const double count = static_cast<double>(s.n * area);
  const double eps = spec.epsilon;
  const double m = spec.momentum;

  Tensor out(s);
  Tensor xhat(s);
  std::vector<double> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean, var;
    if (mode == Mode::kTraining) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* p = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t t = 0; t < area; ++t) sum += p[t];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* p = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t t = 0; t < area; ++t) sq += (p[t] - mean) * (p[t] - mean);
      }
      var = sq / count;
      // Running variance tracks the unbiased estimate.
      running_mean[c] = m * running_mean[c] + (1.0 - m) * mean;
      running_var[c] = m * running_var[c] + (1.0 - m) * sq / (count - 1.0);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    const double g = gamma[c];
    const double b = beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = x.offset(n, c, 0, 0);
      for (std::size_t t = 0; t < area; ++t) {
        const double xh = (x[off + t] - mean) * inv_std[c];
        xhat[off + t] = xh;
        out[off + t] = g * xh + b;
      }
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const Tensor& gamma,
                                    const Tensor& dy) {
  const auto& s = cache.xhat.shape();
  if (dy.shape() != s) throw ShapeError("batchnorm backward: gradient shape mismatch");
  const std::size_t area = s.h * s.w;
  const double count = static_cast<double>(s.n * area);
  BatchNormGrads g{Tensor(s), Tensor(Shape4{1, s.c, 1, 1}), Tensor(Shape4{1, s.c, 1, 1})};
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = cache.xhat.offset(n, c, 0, 0);
      for (std::size_t t = 0; t < area; ++t) {
        sum_dy += dy[off + t];
        sum_dy_xhat += dy[off + t] * cache.xhat[off + t];
      }
    }
    g.dgamma[c] = sum_dy_xhat;
    g.dbeta[c] = sum_dy;
    const double scale = gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t off = cache.xhat.offset(n, c, 0, 0);
      for (std::size_t t = 0; t < area; ++t) {
        if (cache.mode == Mode::kTraining) {
          g.dx[off + t] = scale / count *
                          (count * dy[off + t] - sum_dy - cache.xhat[off + t] * sum_dy_xhat);
        } else {
          g.dx[off + t] = scale * dy[off + t];
        }
      }
    }
  }
  return g;
}

namespace {

// scale[c] = k + alpha * sum of squares over the channel window around c.
Tensor lrn_scale(const Tensor& x, const LrnSpec& spec) {
  const auto& s = x.shape();
  const std::size_t half = spec.depth / 2;
  const std::size_t area = s.h * s.w;
  Tensor scale(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(s.c - 1, c + half);
      double* dst = scale.data() + scale.offset(n, c, 0, 0);
      for (std::size_t t = 0; t < area; ++t) {
        double energy = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
          const double a = x[x.offset(n, j, 0, 0) + t];
          energy += a * a;
        }
        dst[t] = spec.k + spec.alpha * energy;
      }
    }
  }
  return scale;
}

}  // namespace

Tensor lrn_forward(const Tensor& x, const LrnSpec& spec) {
  validate(spec);
  const Tensor scale = lrn_scale(x, spec);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std::pow(scale[i], -spec.beta);
  return out;
}

Tensor lrn_backward(const Tensor& x, const LrnSpec& spec, const Tensor& dy) {
  validate(spec);
  if (dy.shape() != x.shape()) throw ShapeError("lrn backward: gradient shape mismatch");
  const auto& s = x.shape();
  const Tensor scale = lrn_scale(x, spec);
  // dx_i = dy_i s_i^-b - 2ab x_i sum_{c : i in W(c)} dy_c x_c s_c^(-b-1).
  // The window is symmetric, so {c : i in W(c)} == W(i).
  Tensor weighted(s);
  for (std::size_t i = 0; i < x.size(); ++i) {
    weighted[i] = dy[i] * x[i] * std::pow(scale[i], -spec.beta - 1.0);
  }
  const std::size_t half = spec.depth / 2;
  const std::size_t area = s.h * s.w;
  Tensor dx(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t lo = c >= half ? c - half : 0;
      const std::size_t hi = std::min(s.c - 1, c + half);
      const std::size_t off = x.offset(n, c, 0, 0);
      for (std::size_t t = 0; t < area; ++t) {
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += weighted[x.offset(n, j, 0, 0) + t];
        dx[off + t] = dy[off + t] * std::pow(scale[off + t], -spec.beta) -
                      2.0 * spec.alpha * spec.beta * x[off + t] * acc;
      }
    }
  }
  return dx;
}

}  // namespace transnet
