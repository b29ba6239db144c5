#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/netgraph.hpp"

namespace transnet {

ParamSlot& ParameterStore::add_slot(std::string name, Tensor value) {
  if (slot_index_.contains(name)) throw GraphError(fmt::format("duplicate slot '{}'", name));
  slot_index_.emplace(name, slots_.size());
  const Shape4 shape = value.shape();
  slots_.push_back(ParamSlot{std::move(name), std::move(value), Tensor(shape), Tensor(shape)});
  return slots_.back();
}

void ParameterStore::add_buffer(std::string name, Tensor value) {
  if (buffer_index_.contains(name)) throw GraphError(fmt::format("duplicate buffer '{}'", name));
  buffer_index_.emplace(name, buffers_.size());
  buffers_.emplace_back(std::move(name), std::move(value));
}

ParamSlot* ParameterStore::find_slot(std::string_view name) {
  auto it = slot_index_.find(name);
  return it == slot_index_.end() ? nullptr : &slots_[it->second];
}

ParamSlot& ParameterStore::slot(std::string_view name) {
  auto* s = find_slot(name);
  if (s == nullptr) throw GraphError(fmt::format("no parameter slot '{}'", name));
  return *s;
}

const ParamSlot& ParameterStore::slot(std::string_view name) const {
  auto it = slot_index_.find(name);
  if (it == slot_index_.end()) throw GraphError(fmt::format("no parameter slot '{}'", name));
  return slots_[it->second];
}

Tensor* ParameterStore::find_buffer(std::string_view name) {
  auto it = buffer_index_.find(name);
  return it == buffer_index_.end() ? nullptr : &buffers_[it->second].second;
}

Tensor& ParameterStore::buffer(std::string_view name) {
  auto* b = find_buffer(name);
  if (b == nullptr) throw GraphError(fmt::format("no buffer '{}'", name));
  return *b;
}

void ParameterStore::zero_grad() {
  for (auto& s : slots_) s.grad.fill(0.0);
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : slots_) total += s.value.size();
  return total;
}

}  // namespace transnet
