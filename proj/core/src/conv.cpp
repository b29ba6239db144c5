#include <vector>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t f, k, s, p;
  std::size_t ho, wo;
};

ConvGeometry check_conv(const Tensor& x, const Tensor& weight, const Tensor* bias,
                        const Conv2DSpec& spec) {
  validate(spec);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (ws.h != spec.kernel || ws.w != spec.kernel || ws.n != spec.out_channels) {
    throw ShapeError(fmt::format("conv2d: weight {} does not match F={} k={}", ws.to_string(),
                                 spec.out_channels, spec.kernel));
  }
  if (xs.c != ws.c) {
    throw ShapeError(
        fmt::format("conv2d: input has {} channels but weights expect {}", xs.c, ws.c));
  }
  if (spec.in_channels != 0 && spec.in_channels != xs.c) {
    throw ShapeError(fmt::format("conv2d: input has {} channels but spec says {}", xs.c,
                                 spec.in_channels));
  }
  if (bias != nullptr && bias->size() != spec.out_channels) {
    throw ShapeError(fmt::format("conv2d: bias has {} values, expected {}", bias->size(),
                                 spec.out_channels));
  }
  const std::size_t p = spec.pad();
  return {xs.n,
          xs.c,
          xs.h,
          xs.w,
          spec.out_channels,
          spec.kernel,
          spec.stride,
          p,
          conv_output_size(xs.h, spec.kernel, spec.stride, p),
          conv_output_size(xs.w, spec.kernel, spec.stride, p)};
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (in + 2 * padding < kernel) {
    throw ShapeError(fmt::format("window {} does not fit input {} with padding {}", kernel, in,
                                 padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

void im2col(const Tensor& x, std::size_t n, std::size_t kernel, std::size_t stride,
            std::size_t padding, MatrixView cols) {
  const auto& s = x.shape();
  const std::size_t ho = conv_output_size(s.h, kernel, stride, padding);
  const std::size_t wo = conv_output_size(s.w, kernel, stride, padding);
  const auto src = x.sample(n);
  const auto ih = static_cast<std::ptrdiff_t>(s.h);
  const auto iw = static_cast<std::ptrdiff_t>(s.w);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.c; ++c) {
    const double* plane = src.data() + c * s.h * s.w;
    for (std::size_t u = 0; u < kernel; ++u) {
      for (std::size_t v = 0; v < kernel; ++v, ++row) {
        double* out = cols.data.data() + row * cols.cols;
        for (std::size_t i = 0; i < ho; ++i) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * stride + u) - pad;
          double* orow = out + i * wo;
          if (y < 0 || y >= ih) {
            std::fill(orow, orow + wo, 0.0);
            continue;
          }
          const double* irow = plane + y * iw;
          for (std::size_t j = 0; j < wo; ++j) {
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(j * stride + v) - pad;
            orow[j] = (xx < 0 || xx >= iw) ? 0.0 : irow[xx];
          }
        }
      }
    }
  }
}

void col2im(ConstMatrixView cols, std::size_t kernel, std::size_t stride, std::size_t padding,
            std::size_t n, Tensor& dx) {
  const auto& s = dx.shape();
  const std::size_t ho = conv_output_size(s.h, kernel, stride, padding);
  const std::size_t wo = conv_output_size(s.w, kernel, stride, padding);
  auto dst = dx.sample(n);
  const auto ih = static_cast<std::ptrdiff_t>(s.h);
  const auto iw = static_cast<std::ptrdiff_t>(s.w);
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.c; ++c) {
    double* plane = dst.data() + c * s.h * s.w;
    for (std::size_t u = 0; u < kernel; ++u) {
      for (std::size_t v = 0; v < kernel; ++v, ++row) {
        const double* in = cols.data.data() + row * cols.cols;
        for (std::size_t i = 0; i < ho; ++i) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * stride + u) - pad;
          if (y < 0 || y >= ih) continue;
          double* drow = plane + y * iw;
          const double* crow = in + i * wo;
          for (std::size_t j = 0; j < wo; ++j) {
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(j * stride + v) - pad;
            if (xx >= 0 && xx < iw) drow[xx] += crow[j];
          }
        }
      }
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                      const Conv2DSpec& spec) {
  const auto g = check_conv(x, weight, bias, spec);
  Tensor out(Shape4{g.n, g.f, g.ho, g.wo});
  const std::size_t patch = g.c * g.k * g.k;
  const std::size_t spatial = g.ho * g.wo;
  std::vector<double> cols(patch * spatial);
  const ConstMatrixView wmat{weight.values(), g.f, patch};
  for (std::size_t n = 0; n < g.n; ++n) {
    MatrixView colv{cols, patch, spatial};
    im2col(x, n, g.k, g.s, g.p, colv);
    MatrixView omat{out.sample(n), g.f, spatial};
    if (bias != nullptr) {
      for (std::size_t f = 0; f < g.f; ++f) {
        std::fill_n(omat.data.data() + f * spatial, spatial, (*bias)[f]);
      }
    }
    gemm_nn(wmat, colv, omat, bias != nullptr);
  }
  return out;
}

Tensor conv2d_reference(const Tensor& x, const Tensor& weight, const Tensor* bias,
                        const Conv2DSpec& spec) {
  const auto g = check_conv(x, weight, bias, spec);
  Tensor out(Shape4{g.n, g.f, g.ho, g.wo});
  const auto pad = static_cast<std::ptrdiff_t>(g.p);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t f = 0; f < g.f; ++f) {
      for (std::size_t i = 0; i < g.ho; ++i) {
        for (std::size_t j = 0; j < g.wo; ++j) {
          double acc = bias != nullptr ? (*bias)[f] : 0.0;
          for (std::size_t c = 0; c < g.c; ++c) {
            for (std::size_t u = 0; u < g.k; ++u) {
              for (std::size_t v = 0; v < g.k; ++v) {
                const auto y = static_cast<std::ptrdiff_t>(i * g.s + u) - pad;
                const auto xx = static_cast<std::ptrdiff_t>(j * g.s + v) - pad;
                if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(g.h) ||
                    xx >= static_cast<std::ptrdiff_t>(g.w)) {
                  continue;
                }
                acc += x.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) *
                       weight.at(f, c, u, v);
              }
            }
          }
          out.at(n, f, i, j) = acc;
        }
      }
    }
  }
  return out;
}

Conv2DGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Conv2DSpec& spec,
                            const Tensor& dy) {
  const auto g = check_conv(x, weight, nullptr, spec);
  if (dy.shape() != Shape4{g.n, g.f, g.ho, g.wo}) {
    throw ShapeError(fmt::format("conv2d backward: upstream gradient {} != output {}",
                                 dy.shape().to_string(),
                                 Shape4{g.n, g.f, g.ho, g.wo}.to_string()));
  }
  Conv2DGrads grads{Tensor(x.shape()), Tensor(weight.shape()), Tensor()};
  if (spec.has_bias) grads.dbias = Tensor(Shape4{g.f, 1, 1, 1});

  const std::size_t patch = g.c * g.k * g.k;
  const std::size_t spatial = g.ho * g.wo;
  std::vector<double> cols(patch * spatial);
  std::vector<double> dcols(patch * spatial);
  const ConstMatrixView wmat{weight.values(), g.f, patch};
  MatrixView dwmat{grads.dweight.values(), g.f, patch};
  for (std::size_t n = 0; n < g.n; ++n) {
    const ConstMatrixView dymat{dy.sample(n), g.f, spatial};
    MatrixView colv{cols, patch, spatial};
    im2col(x, n, g.k, g.s, g.p, colv);
    gemm_nt(dymat, colv, dwmat, /*accumulate=*/true);
    MatrixView dcolv{dcols, patch, spatial};
    gemm_tn(wmat, dymat, dcolv);
    col2im(dcolv, g.k, g.s, g.p, n, grads.dx);
    if (spec.has_bias) {
      for (std::size_t f = 0; f < g.f; ++f) {
        double sum = 0.0;
        for (std::size_t t = 0; t < spatial; ++t) sum += dymat(f, t);
        grads.dbias[f] += sum;
      }
    }
  }
  return grads;
}

}  // namespace transnet
