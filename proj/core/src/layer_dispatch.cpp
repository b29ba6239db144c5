#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

const Shape4& single_input(const LayerSpec& spec, std::span<const Shape4> inputs) {
  if (inputs.size() != 1) {
    throw ShapeError(fmt::format("{}: expects exactly one input, got {}",
                                 kind_name(kind_of(spec)), inputs.size()));
  }
  return inputs[0];
}

std::size_t dense_in_features(const DenseSpec& spec, const Shape4& in) {
  const std::size_t d = in.per_sample();
  if (spec.in_features != 0 && spec.in_features != d) {
    throw ShapeError(
        fmt::format("dense: input has {} features but layer expects {}", d, spec.in_features));
  }
  return d;
}

void require_saved(const LayerSpec& spec, const LayerContext& ctx) {
  if (!ctx.saved) {
    throw UsageError(fmt::format("{}: backward called without a saved forward context",
                                 kind_name(kind_of(spec))));
  }
  if (ctx.mode != Mode::kTraining) {
    throw UsageError(fmt::format("{}: backward is not defined for an inference-mode forward",
                                 kind_name(kind_of(spec))));
  }
}

}  // namespace

std::vector<ParamShape> param_shapes(const LayerSpec& spec, std::span<const Shape4> inputs) {
  return std::visit(
      overloaded{
          [&](const Conv2DSpec& s) {
            const auto& in = single_input(spec, inputs);
            std::vector<ParamShape> out{{"weight", Shape4{s.out_channels, in.c, s.kernel, s.kernel}}};
            if (s.has_bias) out.push_back({"bias", Shape4{s.out_channels, 1, 1, 1}});
            return out;
          },
          [&](const BatchNormSpec&) {
            const auto& in = single_input(spec, inputs);
            return std::vector<ParamShape>{{"gamma", Shape4{1, in.c, 1, 1}},
                                           {"beta", Shape4{1, in.c, 1, 1}}};
          },
          [&](const DenseSpec& s) {
            const auto d = dense_in_features(s, single_input(spec, inputs));
            std::vector<ParamShape> out{{"weight", Shape4{d, s.out_features, 1, 1}}};
            if (s.has_bias) out.push_back({"bias", Shape4{1, s.out_features, 1, 1}});
            return out;
          },
          [](const auto&) { return std::vector<ParamShape>{}; },
      },
      spec);
}

std::vector<ParamShape> buffer_shapes(const LayerSpec& spec, std::span<const Shape4> inputs) {
  if (std::holds_alternative<BatchNormSpec>(spec)) {
    const auto& in = single_input(spec, inputs);
    return {{"running_mean", Shape4{1, in.c, 1, 1}}, {"running_var", Shape4{1, in.c, 1, 1}}};
  }
  return {};
}

Shape4 output_shape(const LayerSpec& spec, std::span<const Shape4> inputs) {
  return std::visit(
      overloaded{
          [&](const Conv2DSpec& s) {
            validate(s);
            const auto& in = single_input(spec, inputs);
            if (s.in_channels != 0 && s.in_channels != in.c) {
              throw ShapeError(fmt::format("conv2d: input has {} channels but spec says {}", in.c,
                                           s.in_channels));
            }
            return Shape4{in.n, s.out_channels, conv_output_size(in.h, s.kernel, s.stride, s.pad()),
                          conv_output_size(in.w, s.kernel, s.stride, s.pad())};
          },
          [&](const MaxPoolSpec& s) {
            validate(s);
            const auto& in = single_input(spec, inputs);
            return Shape4{in.n, in.c, conv_output_size(in.h, s.kernel, s.stride, s.padding),
                          conv_output_size(in.w, s.kernel, s.stride, s.padding)};
          },
          [&](const GapSpec&) {
            const auto& in = single_input(spec, inputs);
            return Shape4{in.n, in.c, 1, 1};
          },
          [&](const DenseSpec& s) {
            validate(s);
            const auto& in = single_input(spec, inputs);
            dense_in_features(s, in);
            return Shape4{in.n, s.out_features, 1, 1};
          },
          [&](const SoftmaxCESpec&) {
            const auto& in = single_input(spec, inputs);
            return Shape4{in.n, in.per_sample(), 1, 1};
          },
          [&](const FlattenSpec&) {
            const auto& in = single_input(spec, inputs);
            return Shape4{in.n, in.per_sample(), 1, 1};
          },
          [&](const ConcatSpec&) {
            if (inputs.empty()) throw ShapeError("concat: no inputs");
            Shape4 out = inputs[0];
            out.c = 0;
            for (const auto& s : inputs) {
              if (s.n != inputs[0].n || s.h != inputs[0].h || s.w != inputs[0].w) {
                throw ShapeError(fmt::format("concat: input {} does not match {} in n/h/w",
                                             s.to_string(), inputs[0].to_string()));
              }
              out.c += s.c;
            }
            return out;
          },
          [&](const BatchNormSpec& s) {
            validate(s);
            return single_input(spec, inputs);
          },
          [&](const DropoutSpec& s) {
            validate(s);
            return single_input(spec, inputs);
          },
          [&](const LrnSpec& s) {
            validate(s);
            return single_input(spec, inputs);
          },
          [&](const ReluSpec&) { return single_input(spec, inputs); },
      },
      spec);
}

Tensor layer_forward(const LayerSpec& spec, std::span<const Tensor* const> inputs,
                     const LayerParams& params, Mode mode, Rng& rng, LayerContext* ctx) {
  if (inputs.empty()) throw ShapeError("layer_forward: no inputs");
  if (!std::holds_alternative<ConcatSpec>(spec) && inputs.size() != 1) {
    throw ShapeError(fmt::format("{}: expects exactly one input, got {}",
                                 kind_name(kind_of(spec)), inputs.size()));
  }
  const Tensor& x = *inputs[0];
  if (ctx != nullptr) {
    *ctx = LayerContext{};
    ctx->mode = mode;
    for (const Tensor* t : inputs) ctx->input_shapes.push_back(t->shape());
  }
  auto save_input = [&] {
    if (ctx != nullptr) ctx->inputs.push_back(x);
  };

  Tensor out = std::visit(
      overloaded{
          [&](const Conv2DSpec& s) {
            save_input();
            return conv2d_forward(x, *params.params.at(0),
                                  s.has_bias ? params.params.at(1) : nullptr, s);
          },
          [&](const MaxPoolSpec& s) {
            auto r = maxpool_forward(x, s);
            if (ctx != nullptr) ctx->indices = std::move(r.argmax);
            return std::move(r.out);
          },
          [&](const GapSpec&) { return global_avg_pool(x); },
          [&](const BatchNormSpec& s) {
            return batchnorm2d_forward(x, *params.params.at(0), *params.params.at(1),
                                       *params.buffers.at(0), *params.buffers.at(1), s, mode,
                                       ctx != nullptr ? &ctx->bn : nullptr);
          },
          [&](const DropoutSpec& s) {
            auto r = dropout_forward(x, s, mode, rng);
            if (ctx != nullptr) {
              ctx->mask = std::move(r.keep);
              ctx->scale = r.scale;
            }
            return std::move(r.out);
          },
          [&](const LrnSpec& s) {
            save_input();
            return lrn_forward(x, s);
          },
          [&](const DenseSpec& s) {
            save_input();
            return dense_forward(x, *params.params.at(0), s.has_bias ? params.params.at(1) : nullptr);
          },
          [&](const ReluSpec&) {
            save_input();
            return relu(x);
          },
          [&](const SoftmaxCESpec&) { return softmax(x); },
          [&](const ConcatSpec&) {
            std::vector<Tensor> xs;
            xs.reserve(inputs.size());
            for (const Tensor* t : inputs) xs.push_back(*t);
            return concat_channels(xs);
          },
          [&](const FlattenSpec&) { return flatten(x); },
      },
      spec);
  if (ctx != nullptr) ctx->saved = true;
  return out;
}

LayerGrads layer_backward(const LayerSpec& spec, const LayerContext& ctx,
                          const LayerParams& params, const Tensor& dy) {
  require_saved(spec, ctx);
  LayerGrads g;
  std::visit(
      overloaded{
          [&](const Conv2DSpec& s) {
            auto r = conv2d_backward(ctx.inputs.at(0), *params.params.at(0), s, dy);
            g.dinputs.push_back(std::move(r.dx));
            g.dparams.push_back(std::move(r.dweight));
            if (s.has_bias) g.dparams.push_back(std::move(r.dbias));
          },
          [&](const MaxPoolSpec&) {
            g.dinputs.push_back(maxpool_backward(ctx.input_shapes.at(0), ctx.indices, dy));
          },
          [&](const GapSpec&) {
            g.dinputs.push_back(global_avg_pool_backward(ctx.input_shapes.at(0), dy));
          },
          [&](const BatchNormSpec&) {
            auto r = batchnorm2d_backward(ctx.bn, *params.params.at(0), dy);
            g.dinputs.push_back(std::move(r.dx));
            g.dparams.push_back(std::move(r.dgamma));
            g.dparams.push_back(std::move(r.dbeta));
          },
          [&](const DropoutSpec&) { g.dinputs.push_back(dropout_backward(ctx.mask, ctx.scale, dy)); },
          [&](const LrnSpec& s) { g.dinputs.push_back(lrn_backward(ctx.inputs.at(0), s, dy)); },
          [&](const DenseSpec& s) {
            auto r = dense_backward(ctx.inputs.at(0), *params.params.at(0), s.has_bias, dy);
            g.dinputs.push_back(std::move(r.dx));
            g.dparams.push_back(std::move(r.dweight));
            if (s.has_bias) g.dparams.push_back(std::move(r.dbias));
          },
          [&](const ReluSpec&) { g.dinputs.push_back(relu_backward(ctx.inputs.at(0), dy)); },
          [&](const SoftmaxCESpec&) {
            throw UsageError("softmax_ce: the loss gradient is produced by the graph executor");
          },
          [&](const ConcatSpec&) {
            std::vector<std::size_t> channels;
            for (const auto& s : ctx.input_shapes) channels.push_back(s.c);
            g.dinputs = split_channels(dy, channels);
          },
          [&](const FlattenSpec&) { g.dinputs.push_back(dy.reshaped(ctx.input_shapes.at(0))); },
      },
      spec);
  return g;
}

}  // namespace transnet
