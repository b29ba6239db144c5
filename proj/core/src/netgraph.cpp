#include "transnet/netgraph.hpp"

#include <set>

#include <fmt/format.h>

#include "transnet/error.hpp"

namespace transnet {

const std::string& NetGraph::add(std::string id, LayerSpec spec, std::vector<std::string> inputs) {
  if (id.empty()) throw GraphError("node id must not be empty");
  if (id == kInputId) throw GraphError(fmt::format("node id '{}' is reserved", id));
  if (index_.contains(id)) throw GraphError(fmt::format("duplicate node id '{}'", id));
  index_.emplace(id, nodes_.size());
  nodes_.push_back(LayerNode{std::move(id), std::move(spec), std::move(inputs)});
  return nodes_.back().id;
}

std::string NetGraph::append(Subgraph sub) {
  for (auto& n : sub.nodes) add(std::move(n.id), std::move(n.spec), std::move(n.inputs));
  return sub.output;
}

const LayerNode& NetGraph::node(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError(fmt::format("no node named '{}'", id));
  return nodes_[it->second];
}

bool NetGraph::contains(std::string_view id) const { return index_.contains(id); }

std::vector<std::size_t> NetGraph::topological_order() const {
  std::vector<std::size_t> pending(nodes_.size(), 0);
  std::vector<std::vector<std::size_t>> consumers(nodes_.size());
  std::set<std::pair<std::string, std::size_t>> ready;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.inputs.empty()) throw GraphError(fmt::format("node '{}' has no inputs", n.id));
    for (const auto& in : n.inputs) {
      if (in == kInputId) continue;
      auto it = index_.find(in);
      if (it == index_.end()) {
        throw GraphError(fmt::format("node '{}' reads unknown input '{}'", n.id, in));
      }
      consumers[it->second].push_back(i);
      ++pending[i];
    }
    if (pending[i] == 0) ready.emplace(n.id, i);
  }
  std::vector<std::size_t> order;
  order.reserve(nodes_.size());
  while (!ready.empty()) {
    const auto [id, i] = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (auto c : consumers[i]) {
      if (--pending[c] == 0) ready.emplace(nodes_[c].id, c);
    }
  }
  if (order.size() != nodes_.size()) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (pending[i] != 0) {
        throw GraphError(fmt::format("cycle detected involving node '{}'", nodes_[i].id));
      }
    }
  }
  return order;
}

void NetGraph::validate() const {
  topological_order();
  std::size_t sinks = 0;
  for (const auto& n : nodes_) {
    if (n.kind() != LayerKind::kConcat && n.inputs.size() != 1) {
      throw GraphError(fmt::format("node '{}' ({}) must have exactly one input, has {}", n.id,
                                   kind_name(n.kind()), n.inputs.size()));
    }
    if (n.kind() == LayerKind::kSoftmaxCE) {
      ++sinks;
      if (n.id != output_) {
        throw GraphError(fmt::format("softmax-ce node '{}' is not the graph output", n.id));
      }
    }
  }
  if (sinks != 1) {
    throw GraphError(fmt::format("graph must have exactly one softmax-ce sink, found {}", sinks));
  }
}

ShapeTable infer_shapes(const NetGraph& g) {
  ShapeTable table;
  table.emplace(std::string(kInputId), g.input_shape());
  for (auto i : g.topological_order()) {
    const auto& n = g.nodes()[i];
    std::vector<Shape4> ins;
    for (const auto& in : n.inputs) ins.push_back(table.at(in));
    try {
      table.emplace(n.id, output_shape(n.spec, ins));
    } catch (const Error& e) {
      throw GraphError(fmt::format("shape inference failed at node '{}' ({}): {}", n.id,
                                   kind_name(n.kind()), e.what()));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

std::size_t node_parameter_count(const NetGraph& g, const ShapeTable& shapes, const LayerNode& n) {
  (void)g;
  std::vector<Shape4> ins;
  for (const auto& in : n.inputs) ins.push_back(shapes.at(in));
  std::size_t total = 0;
  for (const auto& p : param_shapes(n.spec, ins)) total += p.shape.count();
  return total;
}

std::size_t graph_parameter_count(const NetGraph& g) {
  const auto shapes = infer_shapes(g);
  std::size_t total = 0;
  for (const auto& n : g.nodes()) total += node_parameter_count(g, shapes, n);
  return total;
}

ParameterStore init_parameters(const NetGraph& g, Rng& rng) {
  const auto shapes = infer_shapes(g);
  ParameterStore store;
  // Node declaration order, so parameter draws do not depend on ids.
  for (const auto& n : g.nodes()) {
    std::vector<Shape4> ins;
    for (const auto& in : n.inputs) ins.push_back(shapes.at(in));
    for (const auto& p : param_shapes(n.spec, ins)) {
      const std::string name = fmt::format("{}.{}", n.id, p.suffix);
      Tensor value(p.shape);
      if (p.suffix == "weight") {
        // conv (F, C, k, k): fan_in C*k*k; dense (D, M): fan_in D.
        const std::size_t fan_in =
            n.kind() == LayerKind::kConv ? p.shape.per_sample() : p.shape.n;
        value = sample_normal(rng, p.shape, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      } else if (p.suffix == "gamma") {
        value.fill(1.0);
      }
      store.add_slot(name, std::move(value));
    }
    for (const auto& b : buffer_shapes(n.spec, ins)) {
      store.add_buffer(fmt::format("{}.{}", n.id, b.suffix),
                       Tensor(b.shape, b.suffix == "running_var" ? 1.0 : 0.0));
    }
  }
  return store;
}

// ---------------------------------------------------------------------------

namespace {

LayerParams bind_params(const LayerNode& n, ParameterStore& store,
                        std::span<const Shape4> input_shapes) {
  LayerParams lp;
  for (const auto& p : param_shapes(n.spec, input_shapes)) {
    auto* slot = store.find_slot(fmt::format("{}.{}", n.id, p.suffix));
    if (slot == nullptr) {
      throw GraphError(fmt::format("parameter store has no slot '{}.{}'", n.id, p.suffix));
    }
    if (slot->value.shape() != p.shape) {
      throw ShapeError(fmt::format("slot '{}' has shape {}, node needs {}", slot->name,
                                   slot->value.shape().to_string(), p.shape.to_string()));
    }
    lp.params.push_back(&slot->value);
  }
  for (const auto& b : buffer_shapes(n.spec, input_shapes)) {
    auto* buf = store.find_buffer(fmt::format("{}.{}", n.id, b.suffix));
    if (buf == nullptr) {
      throw GraphError(fmt::format("parameter store has no buffer '{}.{}'", n.id, b.suffix));
    }
    lp.buffers.push_back(buf);
  }
  return lp;
}

}  // namespace

ForwardResult forward_pass(const NetGraph& g, ParameterStore& store, const Batch& batch, Mode mode,
                           Rng& rng) {
  const auto& in_shape = batch.x.shape();
  const auto& expect = g.input_shape();
  if (in_shape.c != expect.c || in_shape.h != expect.h || in_shape.w != expect.w) {
    throw ShapeError(fmt::format("batch samples are {}x{}x{}, graph expects {}x{}x{}", in_shape.c,
                                 in_shape.h, in_shape.w, expect.c, expect.h, expect.w));
  }
  if (!batch.labels.empty() && batch.labels.size() != in_shape.n) {
    throw DataError(
        fmt::format("batch has {} samples but {} labels", in_shape.n, batch.labels.size()));
  }

  ForwardResult r;
  r.mode = mode;
  r.has_labels = !batch.labels.empty();
  r.order = g.topological_order();
  r.contexts.resize(g.nodes().size());
  const bool save = mode == Mode::kTraining;

  std::map<std::string, Tensor, std::less<>> values;
  values.emplace(std::string(kInputId), batch.x);
  // Drop each value once its last consumer has run.
  std::map<std::string, std::size_t, std::less<>> remaining;
  for (const auto& n : g.nodes()) {
    for (const auto& in : n.inputs) ++remaining[in];
  }

  for (auto i : r.order) {
    const auto& n = g.nodes()[i];
    std::vector<const Tensor*> ins;
    std::vector<Shape4> shapes;
    for (const auto& in : n.inputs) {
      const Tensor& t = values.at(in);
      ins.push_back(&t);
      shapes.push_back(t.shape());
    }
    Tensor out;
    try {
      if (n.kind() == LayerKind::kSoftmaxCE) {
        if (r.has_labels) {
          auto ce = softmax_cross_entropy(*ins[0], batch.labels);
          r.loss = ce.loss;
          r.dlogits = std::move(ce.dlogits);
          out = std::move(ce.probabilities);
        } else {
          out = softmax(*ins[0]);
        }
        if (save) {
          r.contexts[i].saved = true;
          r.contexts[i].mode = mode;
          r.contexts[i].input_shapes = shapes;
        }
      } else {
        const auto lp = bind_params(n, store, shapes);
        out = layer_forward(n.spec, ins, lp, mode, rng, save ? &r.contexts[i] : nullptr);
      }
    } catch (const Error& e) {
      throw GraphError(fmt::format("forward failed at node '{}' ({}): {}", n.id,
                                   kind_name(n.kind()), e.what()));
    }
    if (!out.all_finite()) {
      throw NumericError(fmt::format("node '{}' produced a non-finite value", n.id));
    }
    for (const auto& in : n.inputs) {
      if (--remaining[in] == 0) values.erase(in);
    }
    if (n.id == g.output()) r.probabilities = out;
    values.insert_or_assign(n.id, std::move(out));
  }
  if (r.probabilities.empty()) {
    throw GraphError(fmt::format("output node '{}' was never evaluated", g.output()));
  }
  return r;
}

Tensor backward_pass_with_input(const NetGraph& g, ParameterStore& store,
                                const ForwardResult& fwd) {
  if (fwd.mode != Mode::kTraining) {
    throw UsageError("backward_pass: the forward pass ran in inference mode");
  }
  if (!fwd.has_labels) throw UsageError("backward_pass: the forward pass had no labels");

  std::map<std::string, Tensor, std::less<>> grads;
  auto accumulate = [&](const std::string& id, Tensor t) {
    auto it = grads.find(id);
    if (it == grads.end()) {
      grads.emplace(id, std::move(t));
    } else {
      for (std::size_t k = 0; k < t.size(); ++k) it->second[k] += t[k];
    }
  };

  for (auto it = fwd.order.rbegin(); it != fwd.order.rend(); ++it) {
    const auto& n = g.nodes()[*it];
    const auto& ctx = fwd.contexts[*it];
    if (n.kind() == LayerKind::kSoftmaxCE) {
      accumulate(n.inputs[0], fwd.dlogits);
      continue;
    }
    auto gi = grads.find(n.id);
    if (gi == grads.end()) continue;  // node does not reach the loss
    const Tensor dy = std::move(gi->second);
    grads.erase(gi);

    const auto lp = bind_params(n, store, ctx.input_shapes);
    LayerGrads lg;
    try {
      lg = layer_backward(n.spec, ctx, lp, dy);
    } catch (const Error& e) {
      throw GraphError(fmt::format("backward failed at node '{}' ({}): {}", n.id,
                                   kind_name(n.kind()), e.what()));
    }
    const auto pshapes = param_shapes(n.spec, ctx.input_shapes);
    for (std::size_t p = 0; p < lg.dparams.size(); ++p) {
      auto& slot = store.slot(fmt::format("{}.{}", n.id, pshapes[p].suffix));
      const auto& d = lg.dparams[p];
      if (!d.all_finite()) {
        throw NumericError(fmt::format("non-finite gradient for '{}'", slot.name));
      }
      for (std::size_t k = 0; k < d.size(); ++k) slot.grad[k] += d[k];
    }
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (!lg.dinputs[k].all_finite()) {
        throw NumericError(fmt::format("non-finite input gradient at node '{}'", n.id));
      }
      accumulate(n.inputs[k], std::move(lg.dinputs[k]));
    }
  }
  auto in = grads.find(kInputId);
  return in == grads.end() ? Tensor() : std::move(in->second);
}

void backward_pass(const NetGraph& g, ParameterStore& store, const ForwardResult& fwd) {
  backward_pass_with_input(g, store, fwd);
}

// ---------------------------------------------------------------------------

std::string first_dense_id(const NetGraph& g) {
  for (auto i : g.topological_order()) {
    if (g.nodes()[i].kind() == LayerKind::kDense) return g.nodes()[i].id;
  }
  throw GraphError("graph has no dense layer");
}

std::size_t first_dense_input_length(const NetGraph& g) {
  const auto shapes = infer_shapes(g);
  const auto& n = g.node(first_dense_id(g));
  return shapes.at(n.inputs.at(0)).per_sample();
}

std::string dump_architecture(const NetGraph& g) {
  const auto shapes = infer_shapes(g);
  std::size_t id_width = std::string_view("total").size();
  for (const auto& n : g.nodes()) id_width = std::max(id_width, n.id.size());
  std::string out = fmt::format("{:<{}}  {:<10}  {:<14}  {:>12}\n", "id", id_width, "kind",
                                "output", "params");
  const auto& in = g.input_shape();
  out += fmt::format("{:<{}}  {:<10}  {:<14}  {:>12}\n", kInputId, id_width, "input",
                     fmt::format("{}x{}x{}", in.c, in.h, in.w), 0);
  std::size_t total = 0;
  for (auto i : g.topological_order()) {
    const auto& n = g.nodes()[i];
    const auto& s = shapes.at(n.id);
    const std::size_t count = node_parameter_count(g, shapes, n);
    total += count;
    std::string kind(kind_name(n.kind()));
    if (const auto* conv = std::get_if<Conv2DSpec>(&n.spec)) {
      kind = fmt::format("conv{}x{}", conv->kernel, conv->kernel);
    }
    out += fmt::format("{:<{}}  {:<10}  {:<14}  {:>12}\n", n.id, id_width, kind,
                       fmt::format("{}x{}x{}", s.c, s.h, s.w), count);
  }
  out += fmt::format("{:<{}}  {:<10}  {:<14}  {:>12}\n", "total", id_width, "", "", total);
  return out;
}

}  // namespace transnet
