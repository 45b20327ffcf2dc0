#include "fxptrain/grad_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace fxptrain {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::domain_error("grad_metrics: alpha must lie in (0, 1)");
  }
}

void check_bits(int bits) {
  if (bits < 2) {
    throw std::domain_error("grad_metrics: bit-width must be at least 2");
  }
}

// Rank of the order statistic defining G_L: the smallest k with k/N >= alpha.
// The epsilon absorbs decimal alphas like 1e-3 whose product with N lands a
// hair above an integer.
std::int64_t large_count(double alpha, std::int64_t n) {
  const std::int64_t k =
      static_cast<std::int64_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
  return std::min(std::max<std::int64_t>(k, 1), n);
}

}  // namespace

double max_abs(const Tensor& g) {
  if (g.numel() == 0) {
    throw std::invalid_argument("grad_metrics: empty tensor");
  }
  double m = 0.0;
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    m = std::max(m, std::abs(g[i]));
  }
  return m;
}

double large_grad_threshold(const Tensor& g, double alpha) {
  check_alpha(alpha);
  if (g.numel() == 0) {
    throw std::invalid_argument("grad_metrics: empty tensor");
  }
  const std::int64_t n = g.numel();
  const std::int64_t k = large_count(alpha, n);
  std::vector<double> mags(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) mags[static_cast<std::size_t>(i)] = std::abs(g[i]);
  auto kth = mags.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(mags.begin(), kth, mags.end(), std::greater<double>());
  return *kth;
}

double error_entire(const Tensor& g, const Tensor& q, double g_max) {
  if (!g.same_shape(q)) {
    throw std::invalid_argument("grad_metrics: shape mismatch between g and Q(g)");
  }
  if (g_max == 0.0) return 0.0;
  double sum = 0.0;
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    sum += std::abs(g[i] - q[i]);
  }
  return sum / (static_cast<double>(g.numel()) * g_max);
}

double error_large(const Tensor& g, const Tensor& q, double alpha, double g_max) {
  if (!g.same_shape(q)) {
    throw std::invalid_argument("grad_metrics: shape mismatch between g and Q(g)");
  }
  if (g_max == 0.0) return 0.0;
  const double t = large_grad_threshold(g, alpha);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    if (std::abs(g[i]) >= t) {
      sum += std::abs(g[i] - q[i]);
      ++count;
    }
  }
  if (count == 0) return 0.0;
  return sum / (static_cast<double>(count) * g_max);
}

ClipRatios clip_ratios(const Tensor& g, double gamma, double alpha) {
  check_alpha(alpha);
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::domain_error("grad_metrics: gamma must lie in (0, 1]");
  }
  const double g_max = max_abs(g);
  ClipRatios r;
  if (g_max == 0.0) return r;
  const double t = large_grad_threshold(g, alpha);
  const double cg = gamma * g_max;
  std::int64_t n_in = 0;
  std::int64_t n_out = 0;
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    const double m = std::abs(g[i]);
    if (m >= t) {
      if (m > cg) {
        ++n_out;
      } else {
        ++n_in;
      }
    }
  }
  const double n = static_cast<double>(g.numel());
  r.r_in = static_cast<double>(n_in) / n;
  r.r_out = static_cast<double>(n_out) / n;
  return r;
}

double ulg(double gamma, int bits, double r_in, double r_out, double alpha) {
  check_bits(bits);
  const double levels = static_cast<double>((std::int64_t{1} << bits) - 2);
  return (gamma / levels * r_in + (1.0 - gamma) * r_out) / alpha;
}

double ulg_derivative(double gamma, int bits, double r_in, double r_out, double alpha) {
  check_bits(bits);
  (void)gamma;
  const double levels = static_cast<double>((std::int64_t{1} << bits) - 2);
  return (r_in / levels - r_out) / alpha;
}

GradErrorReport compute_report(const Tensor& g, const Tensor& q, double gamma,
                               double alpha, int bits) {
  GradErrorReport rep;
  rep.g_max = max_abs(g);
  if (rep.g_max == 0.0) return rep;
  rep.t_alpha = large_grad_threshold(g, alpha);
  rep.e_entire = error_entire(g, q, rep.g_max);
  rep.e_large = error_large(g, q, alpha, rep.g_max);
  const ClipRatios r = clip_ratios(g, gamma, alpha);
  rep.r_in = r.r_in;
  rep.r_out = r.r_out;
  const double alpha_eff = r.r_in + r.r_out;
  rep.ulg = ulg(gamma, bits, r.r_in, r.r_out, alpha_eff);
  return rep;
}

}  // namespace fxptrain
