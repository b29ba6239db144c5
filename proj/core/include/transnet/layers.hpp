#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "transnet/rng.hpp"
#include "transnet/tensor.hpp"

namespace transnet {

enum class Mode { kTraining, kInference };

// ---------------------------------------------------------------------------
// Layer descriptors
// ---------------------------------------------------------------------------

/// Convolution with odd square kernels. `padding` < 0 selects same-style
/// padding (k-1)/2.
struct Conv2DSpec {
  std::size_t in_channels = 0;  // 0: taken from the inferred input shape
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  int padding = -1;
  bool has_bias = true;

  std::size_t pad() const { return padding < 0 ? (kernel - 1) / 2 : static_cast<std::size_t>(padding); }
};

struct MaxPoolSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;
};

struct GapSpec {};

struct BatchNormSpec {
  double momentum = 0.9;  // weight kept on the old running statistic
  double epsilon = 1e-5;
};

struct DropoutSpec {
  double p = 0.5;
};

/// Cross-channel local response normalization,
/// b_c = a_c * (k + alpha * sum_{|j-c| <= depth/2} a_j^2)^(-beta).
struct LrnSpec {
  std::size_t depth = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};

struct DenseSpec {
  std::size_t in_features = 0;  // 0: taken from the inferred input shape
  std::size_t out_features = 1;
  bool has_bias = true;
};

struct ReluSpec {};
struct SoftmaxCESpec {};
struct ConcatSpec {};
struct FlattenSpec {};

using LayerSpec = std::variant<Conv2DSpec, MaxPoolSpec, GapSpec, BatchNormSpec, DropoutSpec,
                               LrnSpec, DenseSpec, ReluSpec, SoftmaxCESpec, ConcatSpec, FlattenSpec>;

enum class LayerKind {
  kConv,
  kMaxPool,
  kGap,
  kBatchNorm,
  kDropout,
  kLrn,
  kDense,
  kRelu,
  kSoftmaxCE,
  kConcat,
  kFlatten,
};

LayerKind kind_of(const LayerSpec& spec);
std::string_view kind_name(LayerKind kind);

void validate(const Conv2DSpec& spec);
void validate(const MaxPoolSpec& spec);
void validate(const BatchNormSpec& spec);
void validate(const DropoutSpec& spec);
void validate(const LrnSpec& spec);
void validate(const DenseSpec& spec);

/// floor((in + 2p - k) / s) + 1, or ShapeError when the window never fits.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Weights are (F, C, k, k); bias is (F, 1, 1, 1) or null.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const Conv2DSpec& spec);

/// Direct seven-loop evaluation. Slow; kept as the oracle for the im2col path.
Tensor conv2d_reference(const Tensor& x, const Tensor& weight, const Tensor* bias,
                        const Conv2DSpec& spec);

struct Conv2DGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;  // empty when the layer has no bias
};

Conv2DGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Conv2DSpec& spec,
                            const Tensor& dy);

/// Unrolls sample n of x into a (C*k*k) x (Ho*Wo) column matrix.
void im2col(const Tensor& x, std::size_t n, std::size_t kernel, std::size_t stride,
            std::size_t padding, MatrixView cols);
/// Adjoint of im2col: scatters columns back into sample n of dx (accumulating).
void col2im(ConstMatrixView cols, std::size_t kernel, std::size_t stride, std::size_t padding,
            std::size_t n, Tensor& dx);

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

struct MaxPoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output cell
};

MaxPoolResult maxpool_forward(const Tensor& x, const MaxPoolSpec& spec);
Tensor maxpool_backward(const Shape4& input_shape, std::span<const std::size_t> argmax,
                        const Tensor& dy);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape4& input_shape, const Tensor& dy);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-channel learnable affine parameters and running statistics, all of
/// shape (1, C, 1, 1).
struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  BatchNormSpec spec;

  static BatchNormState identity(std::size_t channels, BatchNormSpec spec = {});
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;  // per channel
  Mode mode = Mode::kTraining;
};

/// Training mode normalizes with batch statistics over (N, H, W) and folds
/// them into the running statistics; inference mode uses the running ones.
Tensor batchnorm2d_forward(const Tensor& x, BatchNormState& state, Mode mode,
                           BatchNormCache* cache = nullptr);
Tensor batchnorm2d_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           Tensor& running_mean, Tensor& running_var, const BatchNormSpec& spec,
                           Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const Tensor& gamma,
                                    const Tensor& dy);

Tensor lrn_forward(const Tensor& x, const LrnSpec& spec);
Tensor lrn_backward(const Tensor& x, const LrnSpec& spec, const Tensor& dy);

// ---------------------------------------------------------------------------
// Dropout, dense, activations, loss, plumbing
// ---------------------------------------------------------------------------

struct DropoutResult {
  Tensor out;
  std::vector<std::uint8_t> keep;  // empty when the layer acted as identity
  double scale = 1.0;
};

/// Inverted dropout. Inference mode and p == 0 are the identity and draw
/// nothing from rng.
DropoutResult dropout_forward(const Tensor& x, const DropoutSpec& spec, Mode mode, Rng& rng);
Tensor dropout_backward(std::span<const std::uint8_t> keep, double scale, const Tensor& dy);

/// x is viewed as (N, D); weight is (D, M, 1, 1); bias (1, M, 1, 1) or null.
/// Returns (N, M, 1, 1).
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor* bias);

struct DenseGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, bool has_bias, const Tensor& dy);

Tensor relu(const Tensor& x);
/// Gradient passes where x > 0; x == 0 counts as inactive.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

struct SoftmaxCEResult {
  double loss = 0.0;
  Tensor probabilities;  // (N, K, 1, 1)
  Tensor dlogits;        // (prob - onehot) / N
};

/// Row-max-shifted softmax over logits viewed as (N, K). Throws DataError for
/// a label outside [0, K).
SoftmaxCEResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax(const Tensor& logits);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor concat_channels(std::initializer_list<Tensor> xs);
/// Splits dy back into pieces with the given channel counts.
std::vector<Tensor> split_channels(const Tensor& dy, std::span<const std::size_t> channels);

/// (N, C, H, W) -> (N, C*H*W, 1, 1).
Tensor flatten(const Tensor& x);

// ---------------------------------------------------------------------------
// Generic dispatch used by the graph executor
// ---------------------------------------------------------------------------

/// Parameter slots a layer owns, in a fixed order, with their shapes for a
/// given per-node input shape.
struct ParamShape {
  std::string_view suffix;  // "weight", "bias", "gamma", "beta"
  Shape4 shape;
};

std::vector<ParamShape> param_shapes(const LayerSpec& spec, std::span<const Shape4> inputs);
/// Non-learned state ("running_mean", "running_var").
std::vector<ParamShape> buffer_shapes(const LayerSpec& spec, std::span<const Shape4> inputs);

/// Output shape for the given input shapes; throws ShapeError on mismatch.
Shape4 output_shape(const LayerSpec& spec, std::span<const Shape4> inputs);

/// Everything a layer needs to run backward. `saved` is false until a
/// forward pass with context saving fills it in.
struct LayerContext {
  bool saved = false;
  Mode mode = Mode::kTraining;
  std::vector<Tensor> inputs;
  std::vector<Shape4> input_shapes;
  std::vector<std::size_t> indices;
  std::vector<std::uint8_t> mask;
  BatchNormCache bn;
  double scale = 1.0;
};

/// Views of the layer's learned parameters and mutable buffers, in the order
/// returned by param_shapes / buffer_shapes.
struct LayerParams {
  std::vector<Tensor*> params;
  std::vector<Tensor*> buffers;
};

/// Forward pass for every kind except softmax-ce (handled by the graph,
/// which owns the labels). When `ctx` is non-null the layer saves what its
/// backward rule needs.
Tensor layer_forward(const LayerSpec& spec, std::span<const Tensor* const> inputs,
                     const LayerParams& params, Mode mode, Rng& rng, LayerContext* ctx);

struct LayerGrads {
  std::vector<Tensor> dinputs;
  std::vector<Tensor> dparams;  // same order as param_shapes
};

/// Analytic gradients. Throws UsageError when ctx was never saved or came
/// from an inference-mode forward.
LayerGrads layer_backward(const LayerSpec& spec, const LayerContext& ctx,
                          const LayerParams& params, const Tensor& dy);

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for each coordinate.
Tensor finite_difference_grad(const ScalarFunction& f, const Tensor& x, double step = 1e-5);

/// Central difference along coordinate i only.
double finite_difference_at(const ScalarFunction& f, const Tensor& x, std::size_t i,
                            double step = 1e-5);

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from dominating the maximum with round-off noise.
double relative_error(double a, double b, double floor = 1e-6);
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace transnet
