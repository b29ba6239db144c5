#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "transnet/layers.hpp"
#include "transnet/rng.hpp"
#include "transnet/tensor.hpp"

namespace transnet {

/// Reserved id of the graph's data source.
inline constexpr std::string_view kInputId = "input";

struct LayerNode {
  std::string id;
  LayerSpec spec;
  std::vector<std::string> inputs;

  LayerKind kind() const { return kind_of(spec); }
};

/// A fragment produced by a composite builder; `output` names the node whose
/// value the rest of the network consumes.
struct Subgraph {
  std::vector<LayerNode> nodes;
  std::string output;
};

// A DAG of layer nodes fed by the reserved "input" node. input_shape is per
// sample (n == 1).
class NetGraph {
 public:
  NetGraph() = default;
  explicit NetGraph(Shape4 input_shape) : input_shape_(input_shape) { input_shape_.n = 1; }

  const Shape4& input_shape() const { return input_shape_; }
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const std::string& output() const { return output_; }

  /// Appends a node and returns its id. Duplicate ids throw GraphError.
  const std::string& add(std::string id, LayerSpec spec, std::vector<std::string> inputs);
  /// Appends every node of the fragment and returns its output id.
  std::string append(Subgraph sub);
  void set_output(std::string id) { output_ = std::move(id); }

  const LayerNode& node(std::string_view id) const;
  bool contains(std::string_view id) const;

  /// Kahn's algorithm, picking the lexicographically smallest ready id first.
  /// Throws GraphError on a dangling input or a cycle.
  std::vector<std::size_t> topological_order() const;

  /// Checks the structural invariants: acyclic, inputs exist, only concat
  /// takes several inputs, exactly one softmax-ce node and it is the output.
  void validate() const;

 private:
  Shape4 input_shape_;
  std::vector<LayerNode> nodes_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::string output_;
};

/// Per-node output shapes (per sample, n == 1), keyed by node id. Includes
/// the input node.
using ShapeTable = std::map<std::string, Shape4, std::less<>>;

/// Throws GraphError naming the first node whose shape cannot be inferred.
ShapeTable infer_shapes(const NetGraph& g);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ParamSlot {
  std::string name;  // "<node id>.<suffix>"
  Tensor value;
  Tensor grad;
  Tensor velocity;
};

// Learned parameters with their gradient and momentum buffers, plus the
// non-learned per-layer state (batchnorm running statistics).
class ParameterStore {
 public:
  ParamSlot& add_slot(std::string name, Tensor value);
  void add_buffer(std::string name, Tensor value);

  std::vector<ParamSlot>& slots() { return slots_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

  ParamSlot& slot(std::string_view name);
  const ParamSlot& slot(std::string_view name) const;
  ParamSlot* find_slot(std::string_view name);
  Tensor& buffer(std::string_view name);
  Tensor* find_buffer(std::string_view name);

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<ParamSlot> slots_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::map<std::string, std::size_t, std::less<>> slot_index_;
  std::map<std::string, std::size_t, std::less<>> buffer_index_;
};

/// Learned parameter count for one node given the graph's inferred shapes.
std::size_t node_parameter_count(const NetGraph& g, const ShapeTable& shapes, const LayerNode& n);
std::size_t graph_parameter_count(const NetGraph& g);

/// He-normal weights (stdev sqrt(2 / fan_in)), zero biases, batchnorm
/// gamma 1 / beta 0, running stats 0 / 1, velocities 0.
ParameterStore init_parameters(const NetGraph& g, Rng& rng);

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct Batch {
  Tensor x;                 // (N, C, H, W)
  std::vector<int> labels;  // empty: predict only
};

struct ForwardResult {
  double loss = 0.0;
  Tensor probabilities;  // (N, K, 1, 1)
  Mode mode = Mode::kInference;
  bool has_labels = false;
  std::vector<std::size_t> order;
  std::vector<LayerContext> contexts;  // indexed like g.nodes()
  Tensor dlogits;
};

/// Evaluates the graph on a batch. Training mode saves what backward needs,
/// uses batch statistics in batchnorm and draws dropout masks from rng.
ForwardResult forward_pass(const NetGraph& g, ParameterStore& store, const Batch& batch, Mode mode,
                           Rng& rng);

/// Accumulates d(loss)/d(param) into the store's gradient buffers. Throws
/// UsageError for an inference-mode forward or one without labels.
void backward_pass(const NetGraph& g, ParameterStore& store, const ForwardResult& fwd);

/// Like backward_pass, additionally returning d(loss)/d(input).
Tensor backward_pass_with_input(const NetGraph& g, ParameterStore& store,
                                const ForwardResult& fwd);

// ---------------------------------------------------------------------------
// Composite builders and presets
// ---------------------------------------------------------------------------

struct InceptionWidths {
  std::size_t b1x1 = 1;
  std::size_t r3x3 = 1;
  std::size_t b3x3 = 1;
  std::size_t r5x5 = 1;
  std::size_t b5x5 = 1;
  std::size_t pool_proj = 1;
};

/// 1x1 | 1x1->3x3 | 1x1->5x5 | 3x3 maxpool->1x1, each conv followed by ReLU,
/// concatenated along channels in that order.
Subgraph build_inception_module(std::string_view prefix, std::string input,
                                std::size_t in_channels, const InceptionWidths& widths);

struct TransitionOptions {
  std::size_t filters = 1;               // F, per branch
  std::vector<std::size_t> kernels{3, 5, 7};
  std::size_t stride = 2;
  bool global_pool = true;               // false: flatten instead of GAP (ablation)
};

/// One branch per kernel size, in ascending order:
/// bias-free conv(k, stride, same padding, F) -> batchnorm -> ReLU -> GAP -> flatten,
/// concatenated into a (|kernels| * F)-long vector per sample.
Subgraph build_transition_module(std::string_view prefix, std::string input,
                                 std::size_t in_channels, const TransitionOptions& options);

struct VariantFlags {
  bool transition = false;
  bool dropout = false;
  bool lrn = false;
  bool nogap = false;  // with transition: flatten each branch instead of pooling

  friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

/// Parses "baseline", "transition", "dropout", "lrn", "transition_nogap", or
/// '+'-joined combinations such as "transition+lrn". Throws ConfigError.
VariantFlags parse_variant(std::string_view text);
std::string variant_name(const VariantFlags& flags);

struct PresetSpec {
  std::string base;  // alexnet_mini, zfnet_mini, alexnet, zfnet
  VariantFlags variant;
};

/// Parses "alexnet_mini", "alexnet_mini+transition", "zfnet+transition+lrn"...
PresetSpec parse_preset(std::string_view text);

std::vector<std::string> preset_names();

/// Transition filters per branch for a base preset.
std::size_t preset_transition_filters(std::string_view base);

struct PresetOptions {
  /// Caps every channel and FC width at this value when nonzero; used for
  /// gradient-check clones.
  std::size_t max_width = 0;
};

/// Builds the named architecture for (C, H, W) inputs and `num_classes`
/// outputs. Throws ConfigError for an unknown base name.
NetGraph build_preset(const PresetSpec& preset, std::size_t num_classes, Shape4 input_shape,
                      const PresetOptions& options = {});
NetGraph build_preset(std::string_view name, std::size_t num_classes, Shape4 input_shape,
                      const PresetOptions& options = {});

/// Id of the first dense layer, and its input length per sample.
std::string first_dense_id(const NetGraph& g);
std::size_t first_dense_input_length(const NetGraph& g);

/// Plain-text table: id, kind, output shape, parameter count, then a total row.
std::string dump_architecture(const NetGraph& g);

}  // namespace transnet
