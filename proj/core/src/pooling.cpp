#include <limits>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

MaxPoolResult maxpool_forward(const Tensor& x, const MaxPoolSpec& spec) {
  validate(spec);
  const auto& s = x.shape();
  const std::size_t ho = conv_output_size(s.h, spec.kernel, spec.stride, spec.padding);
  const std::size_t wo = conv_output_size(s.w, spec.kernel, spec.stride, spec.padding);
  MaxPoolResult result{Tensor(Shape4{s.n, s.c, ho, wo}), {}};
  result.argmax.resize(result.out.size());
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t plane = x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = std::numeric_limits<std::size_t>::max();
          // Row-major scan with strict '>' keeps the first maximum on ties.
          for (std::size_t u = 0; u < spec.kernel; ++u) {
            const auto y = static_cast<std::ptrdiff_t>(i * spec.stride + u) - pad;
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(s.h)) continue;
            for (std::size_t v = 0; v < spec.kernel; ++v) {
              const auto xx = static_cast<std::ptrdiff_t>(j * spec.stride + v) - pad;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(s.w)) continue;
              const std::size_t idx = plane + static_cast<std::size_t>(y) * s.w +
                                      static_cast<std::size_t>(xx);
              if (best_idx == std::numeric_limits<std::size_t>::max() || x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          if (best_idx == std::numeric_limits<std::size_t>::max()) {
            throw ShapeError("maxpool: a window lies entirely in the padding");
          }
          result.out[o] = best;
          result.argmax[o] = best_idx;
        }
      }
    }
  }
  return result;
}

Tensor maxpool_backward(const Shape4& input_shape, std::span<const std::size_t> argmax,
                        const Tensor& dy) {
  if (argmax.size() != dy.size()) {
    throw ShapeError(fmt::format("maxpool backward: {} argmax entries for {} gradients",
                                 argmax.size(), dy.size()));
  }
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  const auto& s = x.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const std::size_t area = s.h * s.w;
  Tensor out(Shape4{s.n, s.c, 1, 1});
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const double* src = x.data() + p * area;
    double sum = 0.0;
    for (std::size_t t = 0; t < area; ++t) sum += src[t];
    out[p] = sum / static_cast<double>(area);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape4& input_shape, const Tensor& dy) {
  if (dy.size() != input_shape.n * input_shape.c) {
    throw ShapeError("global_avg_pool backward: gradient does not match (N, C)");
  }
  const std::size_t area = input_shape.h * input_shape.w;
  const double inv = 1.0 / static_cast<double>(area);
  Tensor dx(input_shape);
  for (std::size_t p = 0; p < dy.size(); ++p) {
    std::fill_n(dx.data() + p * area, area, dy[p] * inv);
  }
  return dx;
}

}  // namespace transnet
