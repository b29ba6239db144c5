#include "transnet/gradcheck.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "transnet/netgraph.hpp"
#include "transnet/rng.hpp"

namespace transnet {

namespace {

constexpr double kCorruption = 1e-3;

bool corrupted(const GradcheckOptions& o, std::string_view kind) {
  return o.corrupt.has_value() && *o.corrupt == kind;
}

void corrupt_in_place(Tensor& t) {
  for (double& v : t.values()) v *= 1.0 + kCorruption;
}

Tensor random_tensor(Rng& rng, Shape4 shape, double scale = 1.0) {
  return sample_normal(rng, shape, 0.0, scale);
}

// Values at least `gap` apart from each other and from zero, in random
// order: keeps ReLU and maxpool away from their kinks.
Tensor spaced_tensor(Rng& rng, Shape4 shape, double gap = 0.05) {
  Tensor t(shape);
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(std::span<std::size_t>(order), rng);
  const double half = static_cast<double>(t.size()) / 2.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = (static_cast<double>(order[i]) - half + 0.5) * gap;
    t[i] = v == 0.0 ? gap / 2 : v;
  }
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks every input and parameter coordinate of one layer against central
// differences of f = <r, layer(inputs)>.
struct LayerCase {
  std::string name;
  LayerSpec spec;
  std::vector<Tensor> inputs;
  std::vector<Tensor> params;
  std::vector<Tensor> buffers;
};

CheckResult check_layer(LayerCase c, const GradcheckOptions& o, Rng& rng) {
  constexpr std::uint64_t kDropoutSeed = 99;
  auto run = [&](const std::vector<Tensor>& ins, std::vector<Tensor>& params,
                 std::vector<Tensor> buffers, LayerContext* ctx) {
    std::vector<const Tensor*> ptrs;
    for (const auto& t : ins) ptrs.push_back(&t);
    LayerParams lp;
    for (auto& p : params) lp.params.push_back(&p);
    for (auto& b : buffers) lp.buffers.push_back(&b);
    Rng local(kDropoutSeed);
    return layer_forward(c.spec, ptrs, lp, Mode::kTraining, local, ctx);
  };

  LayerContext ctx;
  const Tensor out = run(c.inputs, c.params, c.buffers, &ctx);
  const Tensor r = random_tensor(rng, out.shape());
  LayerParams lp;
  for (auto& p : c.params) lp.params.push_back(&p);
  LayerGrads grads = layer_backward(c.spec, ctx, lp, r);
  if (corrupted(o, c.name)) {
    for (auto& g : grads.dinputs) corrupt_in_place(g);
    for (auto& g : grads.dparams) corrupt_in_place(g);
  }

  CheckResult res{fmt::format("layer/{}", c.name), 0.0, o.layer_tolerance, 0, 0, false};
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    auto f = [&](const Tensor& probe) {
      auto ins = c.inputs;
      ins[k] = probe;
      return dot(r, run(ins, c.params, c.buffers, nullptr));
    };
    const Tensor numeric = finite_difference_grad(f, c.inputs[k], o.step);
    res.max_rel_error = std::max(res.max_rel_error, max_relative_error(grads.dinputs[k], numeric));
    res.checked += numeric.size();
  }
  for (std::size_t k = 0; k < c.params.size(); ++k) {
    auto f = [&](const Tensor& probe) {
      auto params = c.params;
      params[k] = probe;
      return dot(r, run(c.inputs, params, c.buffers, nullptr));
    };
    const Tensor numeric = finite_difference_grad(f, c.params[k], o.step);
    res.max_rel_error = std::max(res.max_rel_error, max_relative_error(grads.dparams[k], numeric));
    res.checked += numeric.size();
  }
  res.passed = res.max_rel_error < res.tolerance;
  return res;
}

CheckResult check_softmax_ce(const GradcheckOptions& o, Rng& rng) {
  const Tensor logits = random_tensor(rng, Shape4{1, 4, 1, 1}, 2.0);
  const std::vector<int> labels{2};
  auto analytic = softmax_cross_entropy(logits, labels).dlogits;
  if (corrupted(o, "softmax_ce")) corrupt_in_place(analytic);
  auto f = [&](const Tensor& probe) { return softmax_cross_entropy(probe, labels).loss; };
  const Tensor numeric = finite_difference_grad(f, logits, o.step);
  CheckResult res{"layer/softmax_ce", max_relative_error(analytic, numeric), o.layer_tolerance,
                  numeric.size(), 0, false};
  res.passed = res.max_rel_error < res.tolerance;
  return res;
}

// ---------------------------------------------------------------------------

// Which side of every ReLU and maxpool decision the forward pass took.
std::vector<std::size_t> kink_signature(const NetGraph& g, const ForwardResult& fwd) {
  std::vector<std::size_t> sig;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const auto& ctx = fwd.contexts[i];
    switch (g.nodes()[i].kind()) {
      case LayerKind::kRelu:
        for (double v : ctx.inputs.at(0).values()) sig.push_back(v > 0.0 ? 1 : 0);
        break;
      case LayerKind::kMaxPool:
        sig.insert(sig.end(), ctx.indices.begin(), ctx.indices.end());
        break;
      default:
        break;
    }
  }
  return sig;
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = i;
  if (limit == 0 || limit >= size) return all;
  shuffle(std::span<std::size_t>(all), rng);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

CheckResult check_graph(const std::string& name, const NetGraph& g, const GradcheckOptions& o) {
  constexpr std::uint64_t kDropoutSeed = 7;
  Rng rng(mix_seed(o.seed, std::hash<std::string>{}(name) & 0xffff));
  ParameterStore store = init_parameters(g, rng);
  Shape4 in = g.input_shape();
  in.n = 3;
  Batch batch{random_tensor(rng, in), {0, 1, 1}};

  auto forward = [&] {
    Rng local(kDropoutSeed);
    return forward_pass(g, store, batch, Mode::kTraining, local);
  };

  store.zero_grad();
  const auto fwd = forward();
  Tensor dinput = backward_pass_with_input(g, store, fwd);
  if (o.corrupt) {
    for (auto& slot : store.slots()) {
      const auto node = slot.name.substr(0, slot.name.rfind('.'));
      if (kind_name(g.node(node).kind()) == *o.corrupt) corrupt_in_place(slot.grad);
    }
  }

  CheckResult res{fmt::format("preset/{}", name), 0.0, o.graph_tolerance, 0, 0, false};
  auto probe = [&](double& coord, double analytic) {
    const double orig = coord;
    coord = orig + o.step;
    const auto plus = forward();
    coord = orig - o.step;
    const auto minus = forward();
    coord = orig;
    if (kink_signature(g, plus) != kink_signature(g, minus)) {
      ++res.skipped;
      return;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * o.step);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic, numeric));
    ++res.checked;
  };

  for (auto& slot : store.slots()) {
    const Tensor analytic = slot.grad;
    for (auto i : pick_coords(slot.value.size(), o.coords_per_tensor, rng)) {
      probe(slot.value[i], analytic[i]);
    }
  }
  for (auto i : pick_coords(batch.x.size(), o.coords_per_tensor, rng)) {
    probe(batch.x[i], dinput[i]);
  }
  res.passed = res.max_rel_error < res.tolerance && res.checked > 0;
  return res;
}

}  // namespace

std::vector<CheckResult> run_layer_checks(const GradcheckOptions& o) {
  Rng rng(o.seed);
  std::vector<LayerCase> cases;

  {
    Conv2DSpec spec{3, 4, 3, 2, -1, true};
    cases.push_back({"conv2d", spec, {random_tensor(rng, {1, 3, 7, 7})},
                     {random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4, 1, 1, 1})}, {}});
  }
  cases.push_back({"maxpool", MaxPoolSpec{3, 2, 1}, {spaced_tensor(rng, {1, 3, 7, 7})}, {}, {}});
  cases.push_back({"gap", GapSpec{}, {random_tensor(rng, {1, 3, 4, 5})}, {}, {}});
  {
    Tensor gamma = random_tensor(rng, {1, 3, 1, 1});
    for (double& v : gamma.values()) v += 1.5;
    cases.push_back({"batchnorm", BatchNormSpec{}, {random_tensor(rng, {2, 3, 4, 4})},
                     {gamma, random_tensor(rng, {1, 3, 1, 1})},
                     {Tensor({1, 3, 1, 1}, 0.0), Tensor({1, 3, 1, 1}, 1.0)}});
  }
  cases.push_back({"dropout", DropoutSpec{0.5}, {random_tensor(rng, {1, 3, 4, 4})}, {}, {}});
  cases.push_back({"lrn", LrnSpec{3, 1.0, 0.1, 0.75}, {random_tensor(rng, {1, 4, 3, 3})}, {}, {}});
  cases.push_back({"dense", DenseSpec{0, 5, true}, {random_tensor(rng, {1, 2, 2, 2})},
                   {random_tensor(rng, {8, 5, 1, 1}), random_tensor(rng, {1, 5, 1, 1})}, {}});
  cases.push_back({"relu", ReluSpec{}, {spaced_tensor(rng, {1, 3, 4, 4})}, {}, {}});
  cases.push_back({"concat", ConcatSpec{},
                   {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 2, 3, 3})}, {}, {}});
  cases.push_back({"flatten", FlattenSpec{}, {random_tensor(rng, {1, 3, 2, 2})}, {}, {}});

  std::vector<CheckResult> results;
  for (auto& c : cases) results.push_back(check_layer(std::move(c), o, rng));
  results.push_back(check_softmax_ce(o, rng));
  return results;
}

std::vector<CheckResult> run_preset_checks(const GradcheckOptions& o) {
  std::vector<CheckResult> results;
  PresetOptions tiny;
  tiny.max_width = 8;
  for (const std::string base : {"alexnet_mini", "zfnet_mini"}) {
    for (const std::string variant :
         {"baseline", "transition", "dropout", "lrn", "transition_nogap"}) {
      const std::string name = fmt::format("{}+{}", base, variant);
      const NetGraph g = build_preset(name, 2, Shape4{1, 3, 16, 16}, tiny);
      results.push_back(check_graph(name, g, o));
    }
  }
  return results;
}

}  // namespace transnet
