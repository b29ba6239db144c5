#include "transnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "transnet/data.hpp"
#include "transnet/error.hpp"

namespace transnet {

void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.txt", std::ios::trunc);
  if (!index) throw DataError(fmt::format("cannot write '{}'", (dir / "index.txt").string()));
  std::size_t file_no = 0;
  auto emit = [&](std::string_view kind, const std::string& name, const Tensor& t) {
    const std::string file = fmt::format("{:04}.rawf32", file_no++);
    write_rawf32(dir / file, t);
    const auto& s = t.shape();
    fmt::print(index, "{} {} {} {} {} {} {}\n", kind, name, s.n, s.c, s.h, s.w, file);
  };
  for (const auto& slot : store.slots()) emit("param", slot.name, slot.value);
  for (const auto& slot : store.slots()) emit("velocity", slot.name, slot.velocity);
  for (const auto& [name, t] : store.buffers()) emit("buffer", name, t);
}

void load_checkpoint(const std::filesystem::path& dir, ParameterStore& store) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw DataError(fmt::format("cannot open '{}'", (dir / "index.txt").string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind, name, file;
    Shape4 shape;
    if (!(fields >> kind >> name >> shape.n >> shape.c >> shape.h >> shape.w >> file)) {
      throw DataError(fmt::format("checkpoint index line {} is malformed", line_no));
    }
    Tensor* target = nullptr;
    if (kind == "param" || kind == "velocity") {
      auto* slot = store.find_slot(name);
      if (slot != nullptr) target = kind == "param" ? &slot->value : &slot->velocity;
    } else if (kind == "buffer") {
      target = store.find_buffer(name);
    } else {
      throw DataError(fmt::format("checkpoint index line {}: unknown kind '{}'", line_no, kind));
    }
    if (target == nullptr) {
      throw DataError(fmt::format("checkpoint tensor '{}' has no slot in the store", name));
    }
    if (target->shape() != shape) {
      throw DataError(fmt::format("checkpoint tensor '{}' is {}, store expects {}", name,
                                  shape.to_string(), target->shape().to_string()));
    }
    Tensor t = load_patch(dir / file);
    *target = std::move(t).reshaped(shape);
  }
}

}  // namespace transnet
