#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/netgraph.hpp"

namespace transnet {

namespace {

Conv2DSpec conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1) {
  return Conv2DSpec{in, out, k, stride, -1, true};
}

}  // namespace

Subgraph build_inception_module(std::string_view prefix, std::string input,
                                std::size_t in_channels, const InceptionWidths& w) {
  for (auto v : {w.b1x1, w.r3x3, w.b3x3, w.r5x5, w.b5x5, w.pool_proj}) {
    if (v == 0) throw ParameterError("inception: every branch width must be >= 1");
  }
  if (in_channels == 0) throw ParameterError("inception: in_channels must be >= 1");
  Subgraph sub;
  auto id = [&](std::string_view suffix) { return fmt::format("{}.{}", prefix, suffix); };
  auto add = [&](std::string node, LayerSpec spec, std::string from) {
    sub.nodes.push_back(LayerNode{node, std::move(spec), {std::move(from)}});
    return node;
  };

  const auto b1 = add(id("relu_1x1"), ReluSpec{}, add(id("1x1"), conv(in_channels, w.b1x1, 1), input));

  auto r3 = add(id("relu_3x3_reduce"), ReluSpec{},
                add(id("3x3_reduce"), conv(in_channels, w.r3x3, 1), input));
  const auto b3 = add(id("relu_3x3"), ReluSpec{}, add(id("3x3"), conv(w.r3x3, w.b3x3, 3), r3));

  auto r5 = add(id("relu_5x5_reduce"), ReluSpec{},
                add(id("5x5_reduce"), conv(in_channels, w.r5x5, 1), input));
  const auto b5 = add(id("relu_5x5"), ReluSpec{}, add(id("5x5"), conv(w.r5x5, w.b5x5, 5), r5));

  auto pooled = add(id("pool"), MaxPoolSpec{3, 1, 1}, input);
  const auto bp = add(id("relu_pool_proj"), ReluSpec{},
                      add(id("pool_proj"), conv(in_channels, w.pool_proj, 1), pooled));

  sub.output = id("concat");
  sub.nodes.push_back(LayerNode{sub.output, ConcatSpec{}, {b1, b3, b5, bp}});
  return sub;
}

Subgraph build_transition_module(std::string_view prefix, std::string input,
                                 std::size_t in_channels, const TransitionOptions& options) {
  if (options.kernels.empty()) throw ParameterError("transition: kernel list is empty");
  if (options.filters == 0) throw ParameterError("transition: filters per branch must be >= 1");
  if (options.stride == 0) throw ParameterError("transition: stride must be >= 1");
  std::vector<std::size_t> kernels = options.kernels;
  std::sort(kernels.begin(), kernels.end());
  if (std::adjacent_find(kernels.begin(), kernels.end()) != kernels.end()) {
    throw ParameterError("transition: kernel sizes must be distinct");
  }
  for (auto k : kernels) {
    if (k % 2 == 0) throw ParameterError(fmt::format("transition: kernel {} is not odd", k));
  }

  Subgraph sub;
  std::vector<std::string> branch_outputs;
  for (auto k : kernels) {
    const std::string base = fmt::format("{}.k{}", prefix, k);
    auto add = [&](std::string_view suffix, LayerSpec spec, std::string from) {
      std::string node = fmt::format("{}.{}", base, suffix);
      sub.nodes.push_back(LayerNode{node, std::move(spec), {std::move(from)}});
      return node;
    };
    // No conv bias: the batchnorm shift that follows absorbs it.
    Conv2DSpec spec = conv(in_channels, options.filters, k, options.stride);
    spec.has_bias = false;
    auto x = add("conv", spec, input);
    x = add("bn", BatchNormSpec{}, x);
    x = add("relu", ReluSpec{}, x);
    if (options.global_pool) x = add("gap", GapSpec{}, x);
    branch_outputs.push_back(add("flatten", FlattenSpec{}, x));
  }
  sub.output = fmt::format("{}.concat", prefix);
  sub.nodes.push_back(LayerNode{sub.output, ConcatSpec{}, branch_outputs});
  return sub;
}

}  // namespace transnet
