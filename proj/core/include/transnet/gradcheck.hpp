#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "transnet/layers.hpp"

namespace transnet {

struct GradcheckOptions {
  double layer_tolerance = 1e-5;
  double graph_tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 1234;
  /// Coordinates probed per tensor in the end-to-end checks (0: all).
  std::size_t coords_per_tensor = 24;
  /// Test hook: perturbs the analytic gradient of this layer kind
  /// ("conv2d", "dense", ...) so the harness must report a failure.
  std::optional<std::string> corrupt;
};

struct CheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +/- probes crossed a ReLU or maxpool kink
  bool passed = false;
};

/// One check per layer kind on small random inputs: analytic backward versus
/// central finite differences of a random linear functional of the output.
std::vector<CheckResult> run_layer_checks(const GradcheckOptions& options = {});

/// End-to-end check for every preset base x variant on a tiny clone
/// (widths <= 8, 3x16x16 input, batch of 3).
std::vector<CheckResult> run_preset_checks(const GradcheckOptions& options = {});

}  // namespace transnet
