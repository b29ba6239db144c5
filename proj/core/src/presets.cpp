#include <array>
#include <optional>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/netgraph.hpp"

namespace transnet {

namespace {

struct ConvStage {
  std::size_t kernel;
  std::size_t stride;
  int padding;  // -1: same-style
  std::size_t channels;
  std::optional<MaxPoolSpec> pool;  // applied after the ReLU
};

struct ArchTable {
  std::string_view name;
  std::vector<ConvStage> convs;
  std::vector<std::size_t> hidden_fc;
  std::size_t transition_filters;
};

// Layer tables. The mini variants keep the stage structure of the originals
// (five conv layers, three pooling stages, two hidden FC layers) at desk
// scale; see docs/presets.md.
const std::vector<ArchTable>& tables() {
  static const std::vector<ArchTable> t = {
      {"alexnet_mini",
       {{5, 1, -1, 8, MaxPoolSpec{2, 2, 0}},
        {5, 1, -1, 16, MaxPoolSpec{2, 2, 0}},
        {3, 1, -1, 24, std::nullopt},
        {3, 1, -1, 24, std::nullopt},
        {3, 1, -1, 16, MaxPoolSpec{2, 2, 0}}},
       {64, 64},
       16},
      {"zfnet_mini",
       {{7, 1, -1, 8, MaxPoolSpec{3, 2, 1}},
        {5, 1, -1, 16, MaxPoolSpec{3, 2, 1}},
        {3, 1, -1, 24, std::nullopt},
        {3, 1, -1, 24, std::nullopt},
        {3, 1, -1, 16, MaxPoolSpec{3, 2, 1}}},
       {64, 64},
       32},
      {"alexnet",
       {{11, 4, 2, 96, MaxPoolSpec{3, 2, 0}},
        {5, 1, -1, 256, MaxPoolSpec{3, 2, 0}},
        {3, 1, -1, 384, std::nullopt},
        {3, 1, -1, 384, std::nullopt},
        {3, 1, -1, 256, MaxPoolSpec{3, 2, 0}}},
       {4096, 4096},
       1024},
      {"zfnet",
       {{7, 2, 1, 96, MaxPoolSpec{3, 2, 1}},
        {5, 2, -1, 256, MaxPoolSpec{3, 2, 1}},
        {3, 1, -1, 384, std::nullopt},
        {3, 1, -1, 384, std::nullopt},
        {3, 1, -1, 256, MaxPoolSpec{3, 2, 1}}},
       {4096, 4096},
       2048},
  };
  return t;
}

const ArchTable& find_table(std::string_view base) {
  for (const auto& t : tables()) {
    if (t.name == base) return t;
  }
  throw ConfigError(fmt::format("unknown preset '{}' (known: alexnet_mini, zfnet_mini, alexnet, zfnet)",
                                base));
}

std::vector<std::string_view> split_plus(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find('+', start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

VariantFlags parse_variant(std::string_view text) {
  VariantFlags f;
  if (text.empty()) throw ConfigError("empty variant name");
  for (auto part : split_plus(text)) {
    if (part == "baseline") continue;
    if (part == "transition") {
      f.transition = true;
    } else if (part == "transition_nogap") {
      f.transition = true;
      f.nogap = true;
    } else if (part == "nogap") {
      f.nogap = true;
    } else if (part == "dropout") {
      f.dropout = true;
    } else if (part == "lrn") {
      f.lrn = true;
    } else {
      throw ConfigError(fmt::format(
          "unknown variant '{}' (known: baseline, transition, dropout, lrn, transition_nogap)",
          part));
    }
  }
  if (f.nogap && !f.transition) throw ConfigError("variant 'nogap' requires 'transition'");
  return f;
}

std::string variant_name(const VariantFlags& f) {
  std::vector<std::string_view> parts;
  if (f.transition) parts.push_back(f.nogap ? "transition_nogap" : "transition");
  if (f.dropout) parts.push_back("dropout");
  if (f.lrn) parts.push_back("lrn");
  if (parts.empty()) return "baseline";
  return fmt::format("{}", fmt::join(parts, "+"));
}

PresetSpec parse_preset(std::string_view text) {
  const auto plus = text.find('+');
  PresetSpec p;
  p.base = std::string(text.substr(0, plus));
  find_table(p.base);
  if (plus != std::string_view::npos) p.variant = parse_variant(text.substr(plus + 1));
  return p;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& t : tables()) names.emplace_back(t.name);
  return names;
}

std::size_t preset_transition_filters(std::string_view base) {
  return find_table(base).transition_filters;
}

NetGraph build_preset(const PresetSpec& preset, std::size_t num_classes, Shape4 input_shape,
                      const PresetOptions& options) {
  const auto& table = find_table(preset.base);
  if (num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (input_shape.c == 0 || input_shape.h == 0 || input_shape.w == 0) {
    throw ConfigError(fmt::format("invalid input shape {}x{}x{}", input_shape.c, input_shape.h,
                                  input_shape.w));
  }
  if (preset.variant.nogap && !preset.variant.transition) {
    throw ConfigError("variant 'nogap' requires 'transition'");
  }
  auto width = [&](std::size_t w) {
    return options.max_width != 0 ? std::min(w, options.max_width) : w;
  };

  NetGraph g(input_shape);
  std::string x(kInputId);
  std::size_t channels = input_shape.c;
  for (std::size_t i = 0; i < table.convs.size(); ++i) {
    const auto& stage = table.convs[i];
    const std::size_t idx = i + 1;
    const std::size_t out = width(stage.channels);
    x = g.add(fmt::format("conv{}", idx),
              Conv2DSpec{channels, out, stage.kernel, stage.stride, stage.padding, true}, {x});
    x = g.add(fmt::format("relu{}", idx), ReluSpec{}, {x});
    channels = out;
    if (stage.pool) {
      x = g.add(fmt::format("pool{}", idx), *stage.pool, {x});
      if (preset.variant.lrn) x = g.add(fmt::format("lrn{}", idx), LrnSpec{}, {x});
    }
  }

  if (preset.variant.transition) {
    TransitionOptions t;
    t.filters = width(table.transition_filters);
    t.global_pool = !preset.variant.nogap;
    x = g.append(build_transition_module("transition", x, channels, t));
  } else {
    x = g.add("flatten", FlattenSpec{}, {x});
  }

  const std::size_t first_fc = table.convs.size() + 1;
  for (std::size_t i = 0; i < table.hidden_fc.size(); ++i) {
    const std::size_t idx = first_fc + i;
    x = g.add(fmt::format("fc{}", idx), DenseSpec{0, width(table.hidden_fc[i]), true}, {x});
    x = g.add(fmt::format("relu{}", idx), ReluSpec{}, {x});
    if (preset.variant.dropout) x = g.add(fmt::format("drop{}", idx), DropoutSpec{0.5}, {x});
  }
  const std::size_t out_idx = first_fc + table.hidden_fc.size();
  x = g.add(fmt::format("fc{}", out_idx), DenseSpec{0, num_classes, true}, {x});
  g.set_output(g.add("loss", SoftmaxCESpec{}, {x}));
  g.validate();
  infer_shapes(g);
  return g;
}

NetGraph build_preset(std::string_view name, std::size_t num_classes, Shape4 input_shape,
                      const PresetOptions& options) {
  return build_preset(parse_preset(name), num_classes, input_shape, options);
}

}  // namespace transnet
