#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

#include "transnet/data.hpp"
#include "transnet/error.hpp"
#include "transnet/rng.hpp"

namespace transnet {

namespace {

Tensor blob_texture(std::size_t size, Rng& rng) {
  Tensor img(Shape4{1, 1, size, size}, rng.uniform(0.0, 0.1));
  const auto blobs = 3 + rng.uniform_index(4);
  const double s = static_cast<double>(size);
  for (std::uint64_t b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0.0, s);
    const double cx = rng.uniform(0.0, s);
    const double sigma = rng.uniform(s / 16.0, s / 8.0);
    const double amp = rng.uniform(0.3, 0.6);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        img.at(0, 0, y, x) += amp * std::exp(-(dy * dy + dx * dx) * inv);
      }
    }
  }
  return img;
}

Tensor stripe_texture(std::size_t size, Rng& rng) {
  Tensor img(Shape4{1, 1, size, size});
  const double freq = rng.uniform(3.0, 6.0);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double contrast = rng.uniform(0.5, 0.9);
  const double k = 2.0 * std::numbers::pi * freq / static_cast<double>(size);
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) * c + static_cast<double>(y) * s;
      img.at(0, 0, y, x) = 0.5 + 0.5 * contrast * std::sin(k * u + phase);
    }
  }
  return img;
}

}  // namespace

Dataset synth_generate(std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                       const SynthOptions& options) {
  if (size < 16) throw ParameterError(fmt::format("synthetic patch size must be >= 16, got {}", size));
  if (!(options.noise_stdev >= 0.0)) throw ParameterError("synthetic noise stdev must be >= 0");
  Rng rng(seed);
  Dataset d;
  d.samples.reserve(2 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (int label : {0, 1}) {
      Tensor img = label == 0 ? blob_texture(size, rng) : stripe_texture(size, rng);
      for (double& v : img.values()) {
        v = std::clamp(v + options.noise_stdev * rng.normal(), 0.0, 1.0);
      }
      d.samples.push_back(std::move(img));
      d.labels.push_back(label);
    }
  }
  return d;
}

std::vector<double> radial_power_spectrum(const Tensor& image) {
  const auto& s = image.shape();
  if (s.n != 1 || s.c != 1 || s.h != s.w || s.h < 2) {
    throw ShapeError("radial_power_spectrum expects a square (1, 1, N, N) image");
  }
  const std::size_t n = s.h;
  double mean = 0.0;
  for (double v : image.values()) mean += v;
  mean /= static_cast<double>(image.size());

  // Separable DFT: rows, then columns.
  std::vector<std::complex<double>> rows(n * n), full(n * n);
  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) /
                                     static_cast<double>(n));
  }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t kx = 0; kx < n; ++kx) {
      std::complex<double> acc = 0.0;
      for (std::size_t x = 0; x < n; ++x) acc += (image[y * n + x] - mean) * twiddle[(kx * x) % n];
      rows[y * n + kx] = acc;
    }
  }
  for (std::size_t kx = 0; kx < n; ++kx) {
    for (std::size_t ky = 0; ky < n; ++ky) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < n; ++y) acc += rows[y * n + kx] * twiddle[(ky * y) % n];
      full[ky * n + kx] = acc;
    }
  }

  const std::size_t bins = n / 2;
  std::vector<double> spectrum(bins, 0.0);
  double total = 0.0;
  for (std::size_t ky = 0; ky < n; ++ky) {
    for (std::size_t kx = 0; kx < n; ++kx) {
      const double fy = static_cast<double>(ky <= n / 2 ? ky : n - ky);
      const double fx = static_cast<double>(kx <= n / 2 ? kx : n - kx);
      const auto r = static_cast<std::size_t>(std::lround(std::hypot(fy, fx)));
      if (r == 0 || r > bins) continue;
      const double p = std::norm(full[ky * n + kx]);
      spectrum[r - 1] += p;
      total += p;
    }
  }
  if (total > 0.0) {
    for (double& v : spectrum) v /= total;
  }
  return spectrum;
}

double synth_spectral_gap(const Dataset& data) {
  std::vector<double> mean[2];
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int label = data.labels.at(i);
    if (label != 0 && label != 1) throw DataError("synth_spectral_gap expects labels 0 and 1");
    const auto spec = radial_power_spectrum(data.samples[i]);
    auto& m = mean[label];
    if (m.empty()) m.assign(spec.size(), 0.0);
    for (std::size_t b = 0; b < spec.size(); ++b) m[b] += spec[b];
    ++count[label];
  }
  if (count[0] == 0 || count[1] == 0) throw DataError("synth_spectral_gap needs both classes");
  double gap = 0.0;
  for (std::size_t b = 0; b < mean[0].size(); ++b) {
    gap += std::abs(mean[0][b] / static_cast<double>(count[0]) -
                    mean[1][b] / static_cast<double>(count[1]));
  }
  return gap / static_cast<double>(mean[0].size());
}

}  // namespace transnet
