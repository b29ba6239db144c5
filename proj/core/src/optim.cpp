#include "transnet/optim.hpp"

#include <numeric>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/metrics.hpp"

namespace transnet {

void TrainConfig::validate(bool allow_zero_lr) const {
  if (!(learning_rate > 0.0) && !(allow_zero_lr && learning_rate == 0.0)) {
    throw ConfigError(fmt::format("learning rate must be > 0, got {}", learning_rate));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError(fmt::format("momentum must lie in [0, 1), got {}", momentum));
  }
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
}

void TrainConfig::validate_for(const NetGraph& g) const {
  validate();
  for (const auto& n : g.nodes()) {
    if (n.kind() == LayerKind::kBatchNorm && batch_size < 2) {
      throw ConfigError("batch size must be >= 2 for a network with batchnorm layers");
    }
  }
}

NesterovMomentum::NesterovMomentum(double learning_rate, double momentum)
    : lr_(learning_rate), mu_(momentum) {}

void NesterovMomentum::lookahead(ParameterStore& store) {
  if (mu_ != 0.0) {
    for (auto& s : store.slots()) {
      for (std::size_t i = 0; i < s.value.size(); ++i) s.value[i] += mu_ * s.velocity[i];
    }
  }
  shifted_ = true;
}

void NesterovMomentum::step(ParameterStore& store) {
  if (!shifted_) throw UsageError("nesterov step without a preceding lookahead");
  for (auto& s : store.slots()) {
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      // Undo the lookahead shift, then theta <- theta + v.
      const double theta = mu_ != 0.0 ? s.value[i] - mu_ * s.velocity[i] : s.value[i];
      const double v = mu_ * s.velocity[i] - lr_ * s.grad[i];
      s.velocity[i] = v;
      s.value[i] = theta + v;
    }
  }
  shifted_ = false;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < std::min<std::size_t>(2, batch_size)) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

EpochMetrics train_epoch(const NetGraph& g, ParameterStore& store, const Dataset& split,
                         const TrainConfig& cfg, Rng& rng) {
  if (split.empty()) throw UsageError("train_epoch: the training split is empty");
  cfg.validate();
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) shuffle(std::span<std::size_t>(order), rng);

  NesterovMomentum opt(cfg);
  EpochMetrics m;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& idx : make_batches(order, cfg.batch_size)) {
    const Batch batch = split.batch(idx);
    store.zero_grad();
    opt.lookahead(store);
    const auto fwd = forward_pass(g, store, batch, Mode::kTraining, rng);
    backward_pass(g, store, fwd);
    opt.step(store);
    loss_sum += fwd.loss * static_cast<double>(idx.size());
    const auto pred = predicted_classes(fwd.probabilities);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
    m.samples += idx.size();
  }
  if (m.samples == 0) {
    throw UsageError(fmt::format("train_epoch: {} samples do not fill a batch of >= 2",
                                 split.size()));
  }
  m.loss = loss_sum / static_cast<double>(m.samples);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.samples);
  return m;
}

Evaluation evaluate(const NetGraph& g, ParameterStore& store, const Dataset& split,
                    std::size_t batch_size) {
  if (split.empty()) throw UsageError("evaluate: the split is empty");
  if (batch_size == 0) batch_size = split.size();
  Rng unused(0);
  Evaluation ev;
  std::vector<double> probs;
  std::size_t classes = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(split.size(), start + batch_size); ++i) {
      idx.push_back(i);
    }
    const auto fwd = forward_pass(g, store, split.batch(idx), Mode::kInference, unused);
    loss_sum += fwd.loss * static_cast<double>(idx.size());
    classes = fwd.probabilities.shape().c;
    probs.insert(probs.end(), fwd.probabilities.values().begin(),
                 fwd.probabilities.values().end());
  }
  ev.probabilities = Tensor(Shape4{split.size(), classes, 1, 1}, std::move(probs));
  ev.loss = loss_sum / static_cast<double>(split.size());
  ev.accuracy = accuracy(ev.probabilities, split.labels);
  return ev;
}

History fit(const NetGraph& g, ParameterStore& store, const Dataset& train, const Dataset& val,
            const TrainConfig& cfg) {
  cfg.validate_for(g);
  if (train.empty()) throw UsageError("fit: the training split is empty");
  if (val.empty()) throw UsageError("fit: the validation split is empty");
  Rng rng(cfg.seed);
  History history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto m = train_epoch(g, store, train, cfg, rng);
    const auto ev = evaluate(g, store, val, std::max<std::size_t>(cfg.batch_size, 1));
    history.push_back(HistoryRow{epoch, m.loss, m.accuracy, ev.loss, ev.accuracy});
  }
  return history;
}

}  // namespace transnet
