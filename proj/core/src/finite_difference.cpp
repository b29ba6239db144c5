#include <algorithm>
#include <cmath>

#include "transnet/error.hpp"
#include "transnet/layers.hpp"

namespace transnet {

double finite_difference_at(const ScalarFunction& f, const Tensor& x, std::size_t i,
                            double step) {
  if (!(step > 0.0)) throw ParameterError("finite difference step must be > 0");
  Tensor probe = x;
  const double orig = probe[i];
  probe[i] = orig + step;
  const double plus = f(probe);
  probe[i] = orig - step;
  const double minus = f(probe);
  return (plus - minus) / (2.0 * step);
}

Tensor finite_difference_grad(const ScalarFunction& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ParameterError("finite difference step must be > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double plus = f(probe);
    probe[i] = orig - step;
    const double minus = f(probe);
    probe[i] = orig;
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) throw ShapeError("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

}  // namespace transnet
