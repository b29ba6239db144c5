#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "transnet/data.hpp"
#include "transnet/netgraph.hpp"
#include "transnet/rng.hpp"

namespace transnet {

struct TrainConfig {
  double learning_rate = 1e-5;
  double momentum = 0.9;
  std::size_t batch_size = 10;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  bool shuffle = true;

  /// Throws ConfigError when lr <= 0 or momentum is outside [0, 1). A zero
  /// learning rate is allowed only when `allow_zero_lr` (null-update runs).
  void validate(bool allow_zero_lr = true) const;
  /// Additionally rejects batch_size < 2 when the graph has batchnorm.
  void validate_for(const NetGraph& g) const;
};

// Nesterov momentum in the lookahead form
//   v <- mu v - lr grad f(theta + mu v);  theta <- theta + v.
// The store's values hold theta between steps. lookahead() moves them to
// theta + mu v so the next forward/backward sees the lookahead point, and
// step() consumes those gradients and moves the values back onto the updated
// theta.
class NesterovMomentum {
 public:
  NesterovMomentum(double learning_rate, double momentum);
  explicit NesterovMomentum(const TrainConfig& cfg)
      : NesterovMomentum(cfg.learning_rate, cfg.momentum) {}

  void lookahead(ParameterStore& store);
  /// Throws UsageError unless lookahead() ran since the last step.
  void step(ParameterStore& store);

  double learning_rate() const { return lr_; }
  double momentum() const { return mu_; }

 private:
  double lr_;
  double mu_;
  bool shifted_ = false;
};

/// Batch index lists for one epoch: sizes batch_size, ..., with the final
/// short batch kept only if it holds at least 2 samples.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size);

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

/// One pass over `split`: optional seeded shuffle, then lookahead, forward,
/// backward and a Nesterov step per batch. Throws UsageError for an empty split.
EpochMetrics train_epoch(const NetGraph& g, ParameterStore& store, const Dataset& split,
                         const TrainConfig& cfg, Rng& rng);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  Tensor probabilities;  // (N, K, 1, 1)
};

/// Inference-mode pass over the whole split in chunks of `batch_size`.
Evaluation evaluate(const NetGraph& g, ParameterStore& store, const Dataset& split,
                    std::size_t batch_size = 64);

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

using History = std::vector<HistoryRow>;

/// Trains for cfg.epochs, validating in inference mode after every epoch.
/// The shuffle and dropout stream is seeded from cfg.seed alone.
History fit(const NetGraph& g, ParameterStore& store, const Dataset& train, const Dataset& val,
            const TrainConfig& cfg);

}  // namespace transnet
