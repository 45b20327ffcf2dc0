#include "fxptrain/tensor.hpp"

#include <cmath>

namespace fxptrain {

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor randn(std::vector<int> shape, std::mt19937_64& gen, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data) v = dist(gen);
  return t;
}

Tensor rand_uniform(std::vector<int> shape, std::mt19937_64& gen, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data) v = dist(gen);
  return t;
}

Tensor rand_laplace(std::vector<int> shape, std::mt19937_64& gen, double scale) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (auto& v : t.data) {
    const double u = dist(gen);
    v = -scale * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
  }
  return t;
}

}  // namespace fxptrain
