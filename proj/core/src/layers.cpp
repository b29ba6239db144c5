#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

LayerKind kind_of(const LayerSpec& spec) { return static_cast<LayerKind>(spec.index()); }

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv2d";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kGap: return "gap";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kLrn: return "lrn";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSoftmaxCE: return "softmax_ce";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

void validate(const Conv2DSpec& spec) {
  if (spec.kernel == 0 || spec.kernel % 2 == 0) {
    throw ParameterError(fmt::format("conv2d: kernel must be odd and >= 1, got {}", spec.kernel));
  }
  if (spec.stride == 0) throw ParameterError("conv2d: stride must be >= 1");
  if (spec.out_channels == 0) throw ParameterError("conv2d: out_channels must be >= 1");
}

void validate(const MaxPoolSpec& spec) {
  if (spec.kernel == 0 || spec.stride == 0) {
    throw ParameterError("maxpool: kernel and stride must be >= 1");
  }
  if (spec.padding >= spec.kernel) throw ParameterError("maxpool: padding must be < kernel");
}

void validate(const BatchNormSpec& spec) {
  if (!(spec.momentum > 0.0 && spec.momentum < 1.0)) {
    throw ParameterError("batchnorm: momentum must lie in (0, 1)");
  }
  if (!(spec.epsilon > 0.0)) throw ParameterError("batchnorm: epsilon must be > 0");
}

void validate(const DropoutSpec& spec) {
  if (!(spec.p >= 0.0 && spec.p < 1.0)) {
    throw ParameterError(fmt::format("dropout: p must lie in [0, 1), got {}", spec.p));
  }
}

void validate(const LrnSpec& spec) {
  if (spec.depth == 0 || spec.depth % 2 == 0) throw ParameterError("lrn: depth must be odd");
  if (!(spec.k > 0.0) || !(spec.alpha >= 0.0) || !(spec.beta > 0.0)) {
    throw ParameterError("lrn: requires k > 0, alpha >= 0, beta > 0");
  }
}

void validate(const DenseSpec& spec) {
  if (spec.out_features == 0) throw ParameterError("dense: out_features must be >= 1");
}

DropoutResult dropout_forward(const Tensor& x, const DropoutSpec& spec, Mode mode, Rng& rng) {
  validate(spec);
  if (mode == Mode::kInference || spec.p == 0.0) return {x, {}, 1.0};
  DropoutResult r{Tensor(x.shape()), std::vector<std::uint8_t>(x.size()), 1.0 / (1.0 - spec.p)};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = !rng.bernoulli(spec.p);
    r.keep[i] = keep ? 1 : 0;
    r.out[i] = keep ? x[i] * r.scale : 0.0;
  }
  return r;
}

Tensor dropout_backward(std::span<const std::uint8_t> keep, double scale, const Tensor& dy) {
  if (keep.empty()) return dy;
  if (keep.size() != dy.size()) throw ShapeError("dropout backward: mask size mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = keep[i] ? dy[i] * scale : 0.0;
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  const auto view = x.as_matrix();
  const auto& ws = weight.shape();
  if (view.cols != ws.n) {
    throw ShapeError(fmt::format("dense: input has {} features but weights expect {}", view.cols,
                                 ws.n));
  }
  const std::size_t m = ws.per_sample();
  if (bias != nullptr && bias->size() != m) {
    throw ShapeError(fmt::format("dense: bias has {} values, expected {}", bias->size(), m));
  }
  Tensor out = Tensor::matrix(view.rows, m);
  if (bias != nullptr) {
    for (std::size_t i = 0; i < view.rows; ++i) {
      std::copy_n(bias->data(), m, out.data() + i * m);
    }
  }
  gemm_nn(view, ConstMatrixView{weight.values(), ws.n, m}, out.as_matrix(), bias != nullptr);
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, bool has_bias, const Tensor& dy) {
  const auto view = x.as_matrix();
  const auto& ws = weight.shape();
  const std::size_t m = ws.per_sample();
  if (dy.shape().n != view.rows || dy.shape().per_sample() != m) {
    throw ShapeError("dense backward: gradient shape mismatch");
  }
  DenseGrads g{Tensor(x.shape()), Tensor(ws), Tensor()};
  const ConstMatrixView wmat{weight.values(), ws.n, m};
  const ConstMatrixView dymat{dy.values(), view.rows, m};
  gemm_nt(dymat, wmat, g.dx.as_matrix());
  gemm_tn(view, dymat, MatrixView{g.dweight.values(), ws.n, m});
  if (has_bias) {
    g.dbias = Tensor(Shape4{1, m, 1, 1});
    for (std::size_t i = 0; i < view.rows; ++i) {
      for (std::size_t j = 0; j < m; ++j) g.dbias[j] += dymat(i, j);
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (dy.shape() != x.shape()) throw ShapeError("relu backward: gradient shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor softmax(const Tensor& logits) {
  const auto view = logits.as_matrix();
  Tensor probs = Tensor::matrix(view.rows, view.cols);
  for (std::size_t i = 0; i < view.rows; ++i) {
    const double* row = logits.data() + i * view.cols;
    double* out = probs.data() + i * view.cols;
    const double mx = *std::max_element(row, row + view.cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < view.cols; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < view.cols; ++j) out[j] /= sum;
  }
  return probs;
}

SoftmaxCEResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const auto view = logits.as_matrix();
  if (labels.size() != view.rows) {
    throw DataError(fmt::format("softmax_ce: {} labels for {} rows", labels.size(), view.rows));
  }
  if (view.rows == 0) throw ShapeError("softmax_ce: empty batch");
  SoftmaxCEResult r;
  r.probabilities = Tensor::matrix(view.rows, view.cols);
  r.dlogits = Tensor::matrix(view.rows, view.cols);
  const double inv_n = 1.0 / static_cast<double>(view.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < view.rows; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= view.cols) {
      throw DataError(fmt::format("softmax_ce: label {} outside [0, {})", label, view.cols));
    }
    const double* row = logits.data() + i * view.cols;
    double* prob = r.probabilities.data() + i * view.cols;
    const double mx = *std::max_element(row, row + view.cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < view.cols; ++j) {
      prob[j] = std::exp(row[j] - mx);
      sum += prob[j];
    }
    const double log_sum = std::log(sum);
    // -log p_label computed from the shifted logits, never from a rounded p.
    total += log_sum - (row[label] - mx);
    for (std::size_t j = 0; j < view.cols; ++j) {
      prob[j] /= sum;
      r.dlogits[i * view.cols + j] =
          (prob[j] - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.loss = total * inv_n;
  return r;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const auto& first = xs[0].shape();
  std::size_t channels = 0;
  for (const auto& t : xs) {
    const auto& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError(fmt::format("concat: input {} does not match {} in n/h/w", s.to_string(),
                                   first.to_string()));
    }
    channels += s.c;
  }
  Tensor out(Shape4{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    double* dst = out.data() + out.offset(n, 0, 0, 0);
    for (const auto& t : xs) {
      const auto src = t.sample(n);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Tensor concat_channels(std::initializer_list<Tensor> xs) {
  return concat_channels(std::span<const Tensor>(xs.begin(), xs.size()));
}

std::vector<Tensor> split_channels(const Tensor& dy, std::span<const std::size_t> channels) {
  const auto& s = dy.shape();
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != s.c) throw ShapeError("split_channels: channel counts do not sum to input");
  std::vector<Tensor> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape4{s.n, c, s.h, s.w});
  const std::size_t area = s.h * s.w;
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* src = dy.data() + dy.offset(n, 0, 0, 0);
    for (auto& p : parts) {
      const auto len = p.shape().c * area;
      std::copy_n(src, len, p.sample(n).data());
      src += len;
    }
  }
  return parts;
}

Tensor flatten(const Tensor& x) {
  const auto& s = x.shape();
  return x.reshaped(Shape4{s.n, s.per_sample(), 1, 1});
}

}  // namespace transnet
