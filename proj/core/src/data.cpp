#include "transnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/rng.hpp"

namespace transnet {

Shape4 Dataset::sample_shape() const {
  if (samples.empty()) throw DataError("dataset is empty");
  Shape4 s = samples.front().shape();
  for (const auto& t : samples) {
    if (t.shape() != s) {
      throw DataError(fmt::format("dataset mixes sample shapes {} and {}", s.to_string(),
                                  t.shape().to_string()));
    }
  }
  return s;
}

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.samples.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    out.samples.push_back(samples.at(i));
    out.labels.push_back(labels.at(i));
    if (!groups.empty()) out.groups.push_back(groups.at(i));
    if (!sources.empty()) out.sources.push_back(sources.at(i));
  }
  return out;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw UsageError("cannot build an empty batch");
  Shape4 s = samples.at(indices[0]).shape();
  const std::size_t per = s.per_sample();
  s.n = indices.size();
  Batch b{Tensor(s), {}};
  b.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& t = samples.at(indices[k]);
    if (t.size() != per) throw DataError("batch mixes sample shapes");
    std::copy(t.values().begin(), t.values().end(), b.x.data() + k * per);
    b.labels.push_back(labels.at(indices[k]));
  }
  return b;
}

// ---------------------------------------------------------------------------

std::vector<std::string> Manifest::groups() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.group);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                        bool check_files) {
  Manifest m;
  m.base_dir = base_dir;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool has_group = false;
  std::set<std::string, std::less<>> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_csv(line);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "path" || fields[1] != "label" ||
          (fields.size() == 3 && fields[2] != "group") || fields.size() > 3) {
        throw DataError(fmt::format("manifest line {}: expected header 'path,label,group'",
                                    line_no));
      }
      has_group = fields.size() == 3;
      header_seen = true;
      continue;
    }
    if (fields.size() < 2 || fields.size() > (has_group ? 3u : 2u)) {
      throw DataError(fmt::format("manifest line {}: expected {} fields, got {}", line_no,
                                  has_group ? 3 : 2, fields.size()));
    }
    ManifestRow row;
    row.path = std::string(fields[0]);
    if (row.path.empty()) throw DataError(fmt::format("manifest line {}: empty path", line_no));
    const auto lab = fields[1];
    const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), row.label);
    if (res.ec != std::errc() || res.ptr != lab.data() + lab.size() || row.label < 0) {
      throw DataError(fmt::format("manifest line {}: label '{}' is not a non-negative integer",
                                  line_no, lab));
    }
    if (fields.size() == 3) row.group = std::string(fields[2]);
    if (!seen.insert(row.path).second) {
      throw DataError(fmt::format("manifest line {}: duplicate path '{}'", line_no, row.path));
    }
    if (check_files && !std::filesystem::exists(base_dir / row.path)) {
      throw DataError(fmt::format("manifest line {}: file '{}' does not exist", line_no,
                                  (base_dir / row.path).string()));
    }
    m.rows.push_back(std::move(row));
  }
  if (!header_seen) throw DataError("manifest is empty (missing 'path,label,group' header)");
  if (m.rows.empty()) throw DataError("manifest has no rows");

  std::set<int> labels;
  for (const auto& r : m.rows) labels.insert(r.label);
  if (*labels.begin() != 0 || static_cast<std::size_t>(*labels.rbegin()) + 1 != labels.size()) {
    throw DataError(fmt::format("labels must be contiguous from 0, found {} distinct up to {}",
                                labels.size(), *labels.rbegin()));
  }
  m.num_classes = labels.size();
  m.histogram.assign(m.num_classes, 0);
  for (const auto& r : m.rows) ++m.histogram[static_cast<std::size_t>(r.label)];
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open manifest '{}'", path.string()));
  return parse_manifest(in, path.parent_path(), check_files);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : assignment) ++sizes.at(f);
  return sizes;
}

std::vector<std::size_t> FoldPlan::validation_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan kfold_split(std::size_t rows, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError(fmt::format("k-fold split needs k >= 2, got {}", k));
  if (k > rows) throw UsageError(fmt::format("cannot split {} rows into {} folds", rows, k));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  FoldPlan plan{k, std::vector<std::size_t>(rows)};
  for (std::size_t pos = 0; pos < rows; ++pos) plan.assignment[order[pos]] = pos % k;
  return plan;
}

FoldPlan kfold_split_grouped(std::span<const std::string> groups, std::size_t k,
                             std::uint64_t seed) {
  if (k < 2) throw UsageError(fmt::format("k-fold split needs k >= 2, got {}", k));
  std::map<std::string, std::vector<std::size_t>> members;
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) {
      units.push_back({i});
    } else {
      members[groups[i]].push_back(i);
    }
  }
  for (auto& [name, rows] : members) units.push_back(std::move(rows));
  if (k > units.size()) {
    throw UsageError(fmt::format("cannot split {} groups into {} folds", units.size(), k));
  }
  Rng rng(seed);
  shuffle(std::span<std::vector<std::size_t>>(units), rng);
  std::stable_sort(units.begin(), units.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  FoldPlan plan{k, std::vector<std::size_t>(groups.size())};
  std::vector<std::size_t> load(k, 0);
  for (const auto& unit : units) {
    const auto fold = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    for (auto r : unit) plan.assignment[r] = fold;
    load[fold] += unit.size();
  }
  return plan;
}

FoldPlan kfold_split(const Manifest& manifest, std::size_t k, std::uint64_t seed, bool grouped) {
  if (!grouped) return kfold_split(manifest.size(), k, seed);
  const auto groups = manifest.groups();
  return kfold_split_grouped(groups, k, seed);
}

FoldPlan expand_to_samples(const FoldPlan& rows, const Dataset& data) {
  if (data.sources.empty()) return rows;
  FoldPlan out;
  out.k = rows.k;
  out.assignment.reserve(data.size());
  for (auto r : data.sources) out.assignment.push_back(rows.assignment.at(r));
  return out;
}

}  // namespace transnet
