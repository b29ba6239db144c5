#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/gradcheck.hpp"
#include "transnet/metrics.hpp"
#include "transnet/netgraph.hpp"

namespace transnet {
namespace {

NetGraph with_subgraph(Shape4 input, Subgraph sub) {
  NetGraph g(input);
  g.append(std::move(sub));
  return g;
}

std::size_t conv_param_count(const NetGraph& g) {
  const auto shapes = infer_shapes(g);
  std::size_t total = 0;
  for (const auto& n : g.nodes()) {
    if (n.kind() == LayerKind::kConv && n.id.find("transition") == std::string::npos) {
      total += node_parameter_count(g, shapes, n);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Composite builders

TEST(Inception, OutputChannelsAreBranchSum) {
  const auto g = with_subgraph({1, 192, 28, 28},
                               build_inception_module("inc", "input", 192, {64, 96, 128, 16, 32, 32}));
  const auto shapes = infer_shapes(g);
  EXPECT_EQ(shapes.at("inc.concat"), (Shape4{1, 256, 28, 28}));
}

TEST(Inception, BranchesShareSpatialExtent) {
  const auto g = with_subgraph({1, 3, 9, 7}, build_inception_module("m", "input", 3, {2, 3, 4, 1, 2, 5}));
  const auto shapes = infer_shapes(g);
  for (const char* id : {"m.relu_1x1", "m.relu_3x3", "m.relu_5x5", "m.relu_pool_proj"}) {
    EXPECT_EQ(shapes.at(id).h, 9u) << id;
    EXPECT_EQ(shapes.at(id).w, 7u) << id;
  }
  EXPECT_EQ(shapes.at("m.concat").c, 2u + 4u + 2u + 5u);
}

TEST(Inception, MinimalWidths) {
  const auto g = with_subgraph({1, 1, 4, 4}, build_inception_module("m", "input", 1, {1, 1, 1, 1, 1, 1}));
  EXPECT_EQ(infer_shapes(g).at("m.concat").c, 4u);
}

TEST(Inception, ZeroWidthRejected) {
  EXPECT_THROW(build_inception_module("m", "input", 1, {0, 1, 1, 1, 1, 1}), ParameterError);
}

TEST(Transition, FilterUnitsGiveConcatenatedLength) {
  for (auto [filters, expected] : {std::pair<std::size_t, std::size_t>{1024, 3072}, {2048, 6144}}) {
    TransitionOptions t;
    t.filters = filters;
    const auto g = with_subgraph({1, 4, 8, 8}, build_transition_module("t", "input", 4, t));
    EXPECT_EQ(infer_shapes(g).at("t.concat").per_sample(), expected);
  }
}

TEST(Transition, SingleKernelSingleFilter) {
  TransitionOptions t;
  t.kernels = {3};
  const auto g = with_subgraph({1, 2, 5, 5}, build_transition_module("t", "input", 2, t));
  EXPECT_EQ(infer_shapes(g).at("t.concat").per_sample(), 1u);
}

TEST(Transition, BranchShapesOnEightByEight) {
  TransitionOptions t;
  t.filters = 6;
  const auto g = with_subgraph({1, 5, 8, 8}, build_transition_module("t", "input", 5, t));
  const auto shapes = infer_shapes(g);
  for (int k : {3, 5, 7}) {
    EXPECT_EQ(shapes.at(fmt::format("t.k{}.conv", k)), (Shape4{1, 6, 4, 4})) << k;
    EXPECT_EQ(shapes.at(fmt::format("t.k{}.gap", k)), (Shape4{1, 6, 1, 1})) << k;
  }
}

TEST(Transition, BranchOrderIsConvNormReluPool) {
  TransitionOptions t;
  t.kernels = {7, 3};
  const auto sub = build_transition_module("t", "input", 2, t);
  std::vector<std::string> kinds;
  for (const auto& n : sub.nodes) kinds.emplace_back(kind_name(n.kind()));
  const std::vector<std::string> branch{"conv2d", "batchnorm", "relu", "gap", "flatten"};
  ASSERT_EQ(kinds.size(), 11u);
  EXPECT_EQ(std::vector<std::string>(kinds.begin(), kinds.begin() + 5), branch);
  EXPECT_EQ(sub.nodes.front().id, "t.k3.conv");
  EXPECT_EQ(sub.nodes[5].id, "t.k7.conv");
  EXPECT_EQ(sub.nodes.back().inputs, (std::vector<std::string>{"t.k3.flatten", "t.k7.flatten"}));
}

TEST(Transition, InvalidKernelListsRejected) {
  TransitionOptions t;
  t.kernels = {};
  EXPECT_THROW(build_transition_module("t", "input", 2, t), ParameterError);
  t.kernels = {3, 4};
  EXPECT_THROW(build_transition_module("t", "input", 2, t), ParameterError);
  t.kernels = {3, 3};
  EXPECT_THROW(build_transition_module("t", "input", 2, t), ParameterError);
  t.kernels = {3};
  t.filters = 0;
  EXPECT_THROW(build_transition_module("t", "input", 2, t), ParameterError);
}

TEST(Transition, GlobalPoolShrinksFcInputByBranchArea) {
  for (const char* base : {"alexnet_mini", "zfnet_mini"}) {
    const Shape4 in{1, 3, 64, 64};
    const auto gap = build_preset(fmt::format("{}+transition", base), 2, in);
    const auto flat = build_preset(fmt::format("{}+transition_nogap", base), 2, in);
    const auto shapes = infer_shapes(gap);
    const auto branch = shapes.at("transition.k3.conv");
    const std::size_t f = preset_transition_filters(base);
    EXPECT_EQ(first_dense_input_length(gap), 3 * f);
    EXPECT_GT(branch.h * branch.w, 1u);
    EXPECT_EQ(first_dense_input_length(flat), 3 * f * branch.h * branch.w);
  }
}

// ---------------------------------------------------------------------------
// Presets

TEST(Preset, AlexnetMiniTransitionFcInput) {
  const auto g = build_preset("alexnet_mini+transition", 2, {1, 3, 64, 64});
  EXPECT_EQ(first_dense_input_length(g), 3 * preset_transition_filters("alexnet_mini"));
  EXPECT_EQ(infer_shapes(g).at("loss"), (Shape4{1, 2, 1, 1}));
}

TEST(Preset, DropoutAddsNoParameters) {
  for (const char* base : {"alexnet_mini", "zfnet_mini"}) {
    EXPECT_EQ(graph_parameter_count(build_preset(base, 2, {1, 3, 64, 64})),
              graph_parameter_count(build_preset(fmt::format("{}+dropout", base), 2, {1, 3, 64, 64})));
  }
}

TEST(Preset, ZfnetMiniTransitionCounts) {
  const Shape4 in{1, 3, 64, 64};
  const auto base = build_preset("zfnet_mini", 2, in);
  const auto trans = build_preset("zfnet_mini+transition", 2, in);
  EXPECT_GT(graph_parameter_count(trans), conv_param_count(base));
  const auto shapes = infer_shapes(trans);
  const auto& fc = trans.node(first_dense_id(trans));
  const auto params = param_shapes(fc.spec, std::vector<Shape4>{shapes.at(fc.inputs.at(0))});
  EXPECT_EQ(params.at(0).shape.n, 3 * preset_transition_filters("zfnet_mini"));
}

TEST(Preset, VariantStructure) {
  const Shape4 in{1, 3, 64, 64};
  auto count = [](const NetGraph& g, LayerKind k) {
    std::size_t c = 0;
    for (const auto& n : g.nodes()) c += n.kind() == k;
    return c;
  };
  const auto base = build_preset("alexnet_mini", 2, in);
  EXPECT_EQ(count(base, LayerKind::kDropout), 0u);
  EXPECT_EQ(count(build_preset("alexnet_mini+dropout", 2, in), LayerKind::kDropout), 2u);
  EXPECT_EQ(count(build_preset("alexnet_mini+lrn", 2, in), LayerKind::kLrn),
            count(base, LayerKind::kMaxPool));
  EXPECT_EQ(count(build_preset("alexnet_mini+transition", 2, in), LayerKind::kGap), 3u);
  EXPECT_EQ(count(build_preset("alexnet_mini+transition_nogap", 2, in), LayerKind::kGap), 0u);
  for (const auto& n : base.nodes()) {
    if (n.kind() == LayerKind::kConv) {
      EXPECT_LE(std::get<Conv2DSpec>(n.spec).out_channels, 64u);
    }
  }
}

TEST(Preset, FullScaleTransitionWidths) {
  const auto alex = build_preset("alexnet+transition", 2, {1, 3, 228, 228});
  const auto zf = build_preset("zfnet+transition", 2, {1, 3, 228, 228});
  EXPECT_EQ(first_dense_input_length(alex), 3072u);
  EXPECT_EQ(first_dense_input_length(zf), 6144u);
}

TEST(Preset, UnknownNamesAreConfigErrors) {
  EXPECT_THROW(build_preset("lenet", 2, {1, 3, 32, 32}), ConfigError);
  EXPECT_THROW(build_preset("alexnet_mini+wide", 2, {1, 3, 32, 32}), ConfigError);
  EXPECT_THROW(parse_variant("nogap"), ConfigError);
}

TEST(Preset, VariantNamesRoundTrip) {
  for (const char* v : {"baseline", "transition", "dropout", "lrn", "transition_nogap",
                        "transition+dropout+lrn"}) {
    EXPECT_EQ(variant_name(parse_variant(v)), v);
  }
}

// ---------------------------------------------------------------------------
// Graph structure and shape inference

TEST(Graph, LargeStrideTwoConvShape) {
  NetGraph g({1, 3, 512, 512});
  g.add("c", Conv2DSpec{3, 5, 7, 2, 3, true}, {"input"});
  EXPECT_EQ(infer_shapes(g).at("c"), (Shape4{1, 5, 256, 256}));
}

TEST(Graph, ConcatMismatchNamesTheNode) {
  NetGraph g({1, 1, 8, 8});
  g.add("a", Conv2DSpec{1, 1, 3, 1, -1, true}, {"input"});
  g.add("b", Conv2DSpec{1, 1, 3, 2, -1, true}, {"input"});
  g.add("join", ConcatSpec{}, {"a", "b"});
  try {
    infer_shapes(g);
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    EXPECT_NE(std::string(e.what()).find("'join'"), std::string::npos) << e.what();
  }
}

TEST(Graph, DanglingInputAndCycleRejected) {
  NetGraph dangling({1, 1, 4, 4});
  dangling.add("a", ReluSpec{}, {"missing"});
  EXPECT_THROW(dangling.topological_order(), GraphError);

  NetGraph cycle({1, 1, 4, 4});
  cycle.add("a", ConcatSpec{}, {"input", "b"});
  cycle.add("b", ReluSpec{}, {"a"});
  EXPECT_THROW(cycle.topological_order(), GraphError);
}

TEST(Graph, DuplicateAndReservedIdsRejected) {
  NetGraph g({1, 1, 4, 4});
  g.add("a", ReluSpec{}, {"input"});
  EXPECT_THROW(g.add("a", ReluSpec{}, {"input"}), GraphError);
  EXPECT_THROW(g.add("input", ReluSpec{}, {"a"}), GraphError);
}

TEST(Graph, OnlyConcatTakesSeveralInputs) {
  NetGraph g({1, 1, 4, 4});
  g.add("a", ReluSpec{}, {"input"});
  g.add("b", ReluSpec{}, {"input", "a"});
  g.add("fc", DenseSpec{0, 2, true}, {"b"});
  g.set_output(g.add("loss", SoftmaxCESpec{}, {"fc"}));
  EXPECT_THROW(g.validate(), GraphError);
}

TEST(Graph, TopologicalOrderPrefersSmallestReadyId) {
  NetGraph g({1, 1, 4, 4});
  g.add("zeta", ReluSpec{}, {"input"});
  g.add("alpha", ReluSpec{}, {"input"});
  g.add("mid", ConcatSpec{}, {"zeta", "alpha"});
  g.add("beta", ReluSpec{}, {"mid"});
  std::vector<std::string> ids;
  for (auto i : g.topological_order()) ids.push_back(g.nodes()[i].id);
  EXPECT_EQ(ids, (std::vector<std::string>{"alpha", "zeta", "mid", "beta"}));
  std::vector<std::string> again;
  for (auto i : g.topological_order()) again.push_back(g.nodes()[i].id);
  EXPECT_EQ(ids, again);
}

TEST(Graph, DumpTotalsMatchRows) {
  const auto g = build_preset("alexnet_mini+transition", 2, {1, 3, 64, 64});
  const std::string table = dump_architecture(g);
  for (const char* kind : {"conv3x3", "conv5x5", "conv7x7"}) {
    EXPECT_NE(table.find(fmt::format("transition.k{}.conv", kind[4])), std::string::npos);
    EXPECT_NE(table.find(kind), std::string::npos) << kind;
  }
  std::istringstream in(table);
  std::string line;
  std::size_t sum = 0, total = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty() || cols[0] == "id") continue;
    if (cols[0] == "total") {
      total = std::stoul(cols.back());
    } else {
      sum += std::stoul(cols.back());
    }
  }
  EXPECT_EQ(sum, total);
  EXPECT_EQ(total, graph_parameter_count(g));
}

// ---------------------------------------------------------------------------
// Parameters

TEST(Init, BiasesZeroAndNormDefaults) {
  const auto g = build_preset("zfnet_mini+transition", 2, {1, 3, 32, 32});
  Rng rng(1);
  auto store = init_parameters(g, rng);
  for (const auto& s : store.slots()) {
    EXPECT_EQ(s.value.shape(), s.grad.shape());
    EXPECT_EQ(s.value.shape(), s.velocity.shape());
    const bool is_bias = s.name.ends_with(".bias") || s.name.ends_with(".beta");
    for (double v : s.velocity.values()) ASSERT_EQ(v, 0.0);
    if (is_bias) {
      for (double v : s.value.values()) ASSERT_EQ(v, 0.0) << s.name;
    }
    if (s.name.ends_with(".gamma")) {
      for (double v : s.value.values()) ASSERT_EQ(v, 1.0) << s.name;
    }
  }
  for (const auto& [name, t] : store.buffers()) {
    const double expect = name.ends_with("running_var") ? 1.0 : 0.0;
    for (double v : t.values()) ASSERT_EQ(v, expect) << name;
  }
}

TEST(Init, SlotsMatchLearnableParameters) {
  const auto g = build_preset("alexnet_mini+transition", 2, {1, 3, 32, 32});
  Rng rng(2);
  EXPECT_EQ(init_parameters(g, rng).parameter_count(), graph_parameter_count(g));
}

TEST(Init, SameSeedSameStore) {
  const auto g = build_preset("alexnet_mini", 2, {1, 3, 32, 32});
  Rng a(5), b(5);
  const auto sa = init_parameters(g, a);
  const auto sb = init_parameters(g, b);
  ASSERT_EQ(sa.slots().size(), sb.slots().size());
  for (std::size_t i = 0; i < sa.slots().size(); ++i) {
    EXPECT_EQ(sa.slots()[i].value, sb.slots()[i].value);
  }
}

TEST(Init, HeStandardDeviation) {
  NetGraph g({1, 64, 8, 8});
  g.add("c", Conv2DSpec{64, 64, 3, 1, -1, true}, {"input"});
  Rng rng(9);
  const auto store = init_parameters(g, rng);
  const auto& w = store.slot("c.weight").value;
  double mean = 0.0;
  for (double v : w.values()) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w.values()) var += (v - mean) * (v - mean);
  const double stdev = std::sqrt(var / static_cast<double>(w.size() - 1));
  const double target = std::sqrt(2.0 / 576.0);
  EXPECT_NEAR(stdev, target, 0.1 * target);
}

// ---------------------------------------------------------------------------
// Execution

TEST(Execution, SmallDenseNetMatchesFiniteDifferences) {
  NetGraph g({1, 3, 1, 1});
  g.add("fc1", DenseSpec{0, 2, true}, {"input"});
  g.add("act", ReluSpec{}, {"fc1"});
  g.add("fc2", DenseSpec{0, 2, true}, {"act"});
  g.set_output(g.add("loss", SoftmaxCESpec{}, {"fc2"}));
  g.validate();
  Rng rng(17);
  auto store = init_parameters(g, rng);
  for (auto& s : store.slots()) s.value = sample_normal(rng, s.value.shape(), 0.3, 1.0);
  const Batch batch{sample_normal(rng, {4, 3, 1, 1}, 0.0, 1.0), {0, 1, 1, 0}};

  store.zero_grad();
  const auto fwd = forward_pass(g, store, batch, Mode::kTraining, rng);
  backward_pass(g, store, fwd);
  for (auto& s : store.slots()) {
    const Tensor analytic = s.grad;
    const Tensor original = s.value;
    const Tensor numeric = finite_difference_grad(
        [&](const Tensor& probe) {
          s.value = probe;
          Rng unused(0);
          const double loss = forward_pass(g, store, batch, Mode::kInference, unused).loss;
          s.value = original;
          return loss;
        },
        original);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-5) << s.name;
  }
}

TEST(Execution, InferenceIsRepeatable) {
  const auto g = build_preset("alexnet_mini+transition+dropout", 2, {1, 3, 32, 32});
  Rng rng(3);
  auto store = init_parameters(g, rng);
  const Batch batch{sample_normal(rng, {3, 3, 32, 32}, 0.5, 0.2), {}};
  Rng r1(1), r2(99);
  const auto a = forward_pass(g, store, batch, Mode::kInference, r1);
  const auto b = forward_pass(g, store, batch, Mode::kInference, r2);
  EXPECT_EQ(a.probabilities, b.probabilities);
}

TEST(Execution, ProbabilityRowsSumToOne) {
  const auto g = build_preset("alexnet_mini+transition", 2, {1, 3, 64, 64});
  Rng rng(4);
  auto store = init_parameters(g, rng);
  const Batch batch{sample_normal(rng, {2, 3, 64, 64}, 0.5, 0.2), {0, 1}};
  const auto fwd = forward_pass(g, store, batch, Mode::kTraining, rng);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(fwd.probabilities[2 * i] + fwd.probabilities[2 * i + 1], 1.0, 1e-12);
  }
}

TEST(Execution, BackwardAfterInferenceIsAUsageError) {
  const auto g = build_preset("alexnet_mini", 2, {1, 1, 16, 16});
  Rng rng(5);
  auto store = init_parameters(g, rng);
  const Batch batch{Tensor({2, 1, 16, 16}, 0.5), {0, 1}};
  const auto fwd = forward_pass(g, store, batch, Mode::kInference, rng);
  EXPECT_THROW(backward_pass(g, store, fwd), UsageError);
}

TEST(Execution, LogitShiftKeepsPrediction) {
  const auto g = build_preset("zfnet_mini+transition", 3, {1, 1, 16, 16});
  Rng rng(6);
  auto store = init_parameters(g, rng);
  for (auto& s : store.slots()) {
    if (s.name == "fc8.bias") s.value = sample_normal(rng, s.value.shape(), 0.0, 1.0);
  }
  const Batch batch{sample_normal(rng, {4, 1, 16, 16}, 0.5, 0.3), {}};
  Rng r(0);
  const auto before = forward_pass(g, store, batch, Mode::kInference, r).probabilities;
  for (double& v : store.slot("fc8.bias").value.values()) v += 25.0;
  const auto after = forward_pass(g, store, batch, Mode::kInference, r).probabilities;
  EXPECT_EQ(predicted_classes(before), predicted_classes(after));
}

TEST(Execution, BatchShapeAndLabelsChecked) {
  const auto g = build_preset("alexnet_mini", 2, {1, 1, 16, 16});
  Rng rng(7);
  auto store = init_parameters(g, rng);
  EXPECT_THROW(forward_pass(g, store, Batch{Tensor({2, 3, 16, 16}), {0, 1}}, Mode::kTraining, rng),
               ShapeError);
  EXPECT_THROW(forward_pass(g, store, Batch{Tensor({2, 1, 16, 16}), {0}}, Mode::kTraining, rng),
               DataError);
}

TEST(Execution, EveryPresetTinyCloneMatchesFiniteDifferences) {
  const auto results = run_preset_checks();
  EXPECT_EQ(results.size(), 10u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
    EXPECT_GT(r.checked, 100u) << r.name;
  }
}

}  // namespace
}  // namespace transnet
