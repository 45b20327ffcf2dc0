#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fxptrain {

// Dense row-major tensor of doubles. Desk-scale engine: value semantics,
// no strides or views. Shape [] with one element is a scalar.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor of(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  bool all_finite() const;
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

Tensor randn(std::vector<int> shape, std::mt19937_64& gen, double stddev = 1.0);
Tensor rand_uniform(std::vector<int> shape, std::mt19937_64& gen, double lo, double hi);
// Zero-centered Laplace draws; heavy-tailed, handy stand-in for gradients.
Tensor rand_laplace(std::vector<int> shape, std::mt19937_64& gen, double scale = 1.0);

}  // namespace fxptrain
