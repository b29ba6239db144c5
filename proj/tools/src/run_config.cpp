#include "transnet_cli/run_config.hpp"

#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/netgraph.hpp"

namespace transnet::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", what, text));
  }
  return v;
}

double parse_real(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: '{}' is not a number", what, text));
}

}  // namespace

SynthSpec parse_synth_spec(std::string_view text) {
  SynthSpec spec;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos ? comma : comma - start));
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("--synth: expected key=value, got '{}'", item));
    }
    const auto key = trim(item.substr(0, eq));
    const auto value = trim(item.substr(eq + 1));
    if (key == "n") {
      spec.n = parse_count(value, "--synth n");
    } else if (key == "size") {
      spec.size = parse_count(value, "--synth size");
    } else if (key == "noise") {
      spec.noise = parse_real(value, "--synth noise");
    } else {
      throw ConfigError(fmt::format("--synth: unknown key '{}' (known: n, size, noise)", key));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (spec.n < 2) throw ConfigError("--synth: n must be at least 2");
  if (spec.size < 16) throw ConfigError("--synth: size must be at least 16");
  if (spec.noise < 0.0) throw ConfigError("--synth: noise must be >= 0");
  return spec;
}

Shape4 parse_input_shape(std::string_view text) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (true) {
    const auto x = text.find('x', start);
    dims.push_back(parse_count(text.substr(start, x == std::string_view::npos ? x : x - start),
                               "--input"));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  if (dims.size() != 3 || dims[0] == 0 || dims[1] == 0 || dims[2] == 0) {
    throw ConfigError(fmt::format("--input: expected CxHxW with positive extents, got '{}'", text));
  }
  return Shape4{1, dims[0], dims[1], dims[2]};
}

void RunConfig::validate() const {
  if (data.has_value() == synth.has_value()) {
    throw ConfigError("exactly one of --data and --synth is required");
  }
  if (k < 2) throw ConfigError(fmt::format("--k must be at least 2, got {}", k));
  if (out.empty()) throw ConfigError("--out is required");
  if (jobs == 0) throw ConfigError("--jobs must be at least 1");
  if (train.epochs == 0) throw ConfigError("--epochs must be at least 1");
  train.validate(false);
}

std::string RunConfig::preset_name() const {
  PresetSpec p = parse_preset(preset);
  const VariantFlags extra = parse_variant(variant);
  p.variant.transition |= extra.transition;
  p.variant.nogap |= extra.nogap;
  p.variant.dropout |= extra.dropout;
  p.variant.lrn |= extra.lrn;
  const auto v = variant_name(p.variant);
  return v == "baseline" ? p.base : fmt::format("{}+{}", p.base, v);
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos || trim(t.substr(0, eq)).empty()) {
      throw ConfigError(
          fmt::format("{}:{}: expected key=value, got '{}'", path.string(), lineno, t));
    }
    entries.emplace_back(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  return entries;
}

std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string_view a = args[i];
    std::optional<std::string> file;
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file argument");
      file = args[++i];
    } else if (a.starts_with("--config=")) {
      file = std::string(a.substr(9));
    }
    if (!file) {
      rest.push_back(args[i]);
      continue;
    }
    for (const auto& [key, value] : read_config_file(*file)) {
      from_file.push_back(fmt::format("--{}={}", key, value));
    }
  }
  if (rest.empty()) return from_file;
  std::vector<std::string> merged{rest.front()};
  merged.insert(merged.end(), from_file.begin(), from_file.end());
  merged.insert(merged.end(), rest.begin() + 1, rest.end());
  return merged;
}

}  // namespace transnet::cli
