#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transnet/netgraph.hpp"
#include "transnet/tensor.hpp"

namespace transnet {

/// Labelled patches held in memory. Each sample is (1, C, H, W).
struct Dataset {
  std::vector<Tensor> samples;
  std::vector<int> labels;
  std::vector<std::string> groups;  // optional; empty or one per sample
  /// Manifest row each sample came from (tiling maps several samples to one
  /// row); empty for generated data.
  std::vector<std::size_t> sources;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Per-sample shape (n == 1). Throws DataError on an empty or ragged set.
  Shape4 sample_shape() const;
  /// max(label) + 1.
  std::size_t num_classes() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Batch batch(std::span<const std::size_t> indices) const;
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string path;
  int label = 0;
  std::string group;
};

// CSV with header `path,label,group`; `#` lines are comments, group may be
// empty. Paths resolve relative to the manifest's directory.
struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;
  std::size_t num_classes = 0;
  std::vector<std::size_t> histogram;  // rows per label

  std::size_t size() const { return rows.size(); }
  std::filesystem::path resolve(const ManifestRow& row) const { return base_dir / row.path; }
  std::vector<std::string> groups() const;
};

/// Throws DataError for duplicate paths, bad labels or non-contiguous label
/// sets, and for a missing file when `check_files` is set.
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                        bool check_files = false);
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);

// ---------------------------------------------------------------------------
// Patch files
// ---------------------------------------------------------------------------

/// Reads binary PGM (P5), PPM (P6) with maxval 255, or RAWF32. 8-bit pixels
/// are divided by 255. Returns (1, C, H, W). Throws FormatError on a bad
/// header or a truncated payload, and ShapeError if `expect` is given and the
/// (C, H, W) extents differ.
Tensor load_patch(const std::filesystem::path& path, std::optional<Shape4> expect = std::nullopt);
Tensor decode_patch(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");

/// RAWF32: "TNT1", then u32 little-endian C, H, W, then C*H*W little-endian
/// float32 values, channel-major.
std::vector<std::uint8_t> encode_rawf32(const Tensor& x);
void write_rawf32(const std::filesystem::path& path, const Tensor& x);

/// P5 for one channel, P6 for three. Values are clamped to [0, 1] and
/// rounded to the nearest of 256 levels.
std::vector<std::uint8_t> encode_pnm(const Tensor& x);
void write_pnm(const std::filesystem::path& path, const Tensor& x);

enum class ResampleMode { kCenterCrop, kTileGrid, kBilinear };

ResampleMode parse_resample_mode(std::string_view text);

/// Center crop -> one window; tile grid -> non-overlapping windows left to
/// right, top to bottom, partial edges dropped; bilinear -> one resized
/// image (align-corners sampling). x is (1, C, H, W).
std::vector<Tensor> resample_patch(const Tensor& x, std::size_t out_h, std::size_t out_w,
                                   ResampleMode mode);

/// Loads every manifest row. With `target`, patches whose (H, W) differ are
/// brought to it with `mode` (crop or bilinear; tile grid expands a file into
/// several samples that inherit its label, group and source row).
Dataset load_dataset(const Manifest& manifest, std::optional<Shape4> target = std::nullopt,
                     ResampleMode mode = ResampleMode::kBilinear);

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;  // fold index per row

  std::vector<std::size_t> fold_sizes() const;
  std::vector<std::size_t> validation_indices(std::size_t fold) const;
  std::vector<std::size_t> training_indices(std::size_t fold) const;
};

/// Seeded shuffle, then round-robin assignment. Throws UsageError for k < 2
/// or k > rows.
FoldPlan kfold_split(std::size_t rows, std::size_t k, std::uint64_t seed);

/// Whole groups go to one fold each, largest first, onto the currently
/// smallest fold. Rows with an empty group id are groups of their own.
FoldPlan kfold_split_grouped(std::span<const std::string> groups, std::size_t k,
                             std::uint64_t seed);

FoldPlan kfold_split(const Manifest& manifest, std::size_t k, std::uint64_t seed, bool grouped);

/// Lifts a plan over manifest rows to the samples of `data` via its source
/// rows. Returns the plan itself when the dataset has no source rows.
FoldPlan expand_to_samples(const FoldPlan& rows, const Dataset& data);

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

struct SynthOptions {
  double noise_stdev = 0.08;
};

/// Two-class single-channel texture set, `n_per_class` samples of each class
/// interleaved (0, 1, 0, 1, ...), each (1, 1, size, size) with values in [0, 1].
///
/// Class 0: isotropic Gaussian blobs. 3-6 blobs with uniform centres, radius
/// sigma ~ U[size/16, size/8] and amplitude ~ U[0.3, 0.6], summed onto a
/// background level ~ U[0, 0.1]. The dark background keeps mean brightness
/// apart from class 1, which a small dense net can pick up from raw pixels.
/// Class 1: oriented stripes 0.5 + 0.5 sin(2 pi f (x cos t + y sin t) / size + phi)
/// with f ~ U[3, 6] cycles per image, t ~ U[0, pi), phi ~ U[0, 2 pi), scaled by a
/// contrast ~ U[0.5, 0.9] around 0.5.
/// Both classes get N(0, noise_stdev^2) pixel noise and are clamped to [0, 1].
///
/// Throws ParameterError for size < 16.
Dataset synth_generate(std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                       const SynthOptions& options = {});

/// Lower bound on synth_spectral_gap for sizes 16..64. The gap shrinks
/// roughly as 1/size because the spectrum is spread over size/2 bins; measured
/// minima over 40 seeds are about 0.14, 0.078 and 0.043 at sizes 16, 32, 64.
inline constexpr double kSynthSpectralGapThreshold = 0.02;

/// Radially binned power spectrum of a single-channel image (DC removed),
/// normalized to sum to 1. Bin r holds frequencies with round(|f|) == r, for
/// r = 1 .. size/2.
std::vector<double> radial_power_spectrum(const Tensor& image);

/// Mean absolute difference of the class-conditional mean radial spectra of
/// a two-class dataset.
double synth_spectral_gap(const Dataset& data);

}  // namespace transnet
