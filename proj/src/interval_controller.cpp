#include "fxptrain/interval_controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fxptrain/grad_metrics.hpp"

namespace fxptrain {

std::vector<double> dsgc_default_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) {
    grid.push_back(static_cast<double>(i) * 0.05);
  }
  return grid;
}

double t_statistic(double r_out, double alpha, int bits) {
  if (bits < 2) {
    throw std::domain_error("interval_controller: bit-width must be at least 2");
  }
  const double denom = static_cast<double>((std::int64_t{1} << bits) - 1);
  return r_out - alpha / denom;
}

GradClipState update_gamma(const GradClipState& state, const Tensor& g) {
  const double g_max = max_abs(g);
  if (g_max == 0.0) return state;

  const std::int64_t n = g.numel();
  const double cg = state.gamma * g_max;
  std::int64_t n_strict = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (std::abs(g[i]) > cg) ++n_strict;
  }
  const std::int64_t k = std::min<std::int64_t>(
      std::max<std::int64_t>(
          static_cast<std::int64_t>(
              std::ceil(state.alpha * static_cast<double>(n) - 1e-9)),
          1),
      n);

  double t;
  if (n_strict >= k) {
    // The whole of G_L sits beyond the interval, so r_out >= alpha and the
    // statistic is positive without knowing the quantile.
    t = 1.0;
  } else {
    const double r_out = static_cast<double>(n_strict) / static_cast<double>(n);
    t = t_statistic(r_out, state.alpha, state.bits);
  }

  GradClipState next = state;
  const double step = t > 0.0 ? state.beta : (t < 0.0 ? -state.beta : 0.0);
  next.gamma = std::clamp(state.gamma + step, state.gamma_min(), 1.0);
  return next;
}

std::pair<double, double> optimality_residual(const GradClipState& state, const Tensor& g) {
  const double g_max = max_abs(g);
  if (g_max == 0.0) return {0.0, 0.0};
  const ClipRatios r = clip_ratios(g, state.gamma, state.alpha);
  const double levels = static_cast<double>((std::int64_t{1} << state.bits) - 1);
  const double target_in = (levels - 1.0) / levels * state.alpha;
  const double target_out = state.alpha / levels;
  return {r.r_in - target_in, r.r_out - target_out};
}

double dsgc_select_gamma(const Tensor& g, const QuantizerSpec& spec,
                         const std::vector<double>& grid) {
  if (grid.empty()) {
    throw std::invalid_argument("dsgc_select_gamma: empty gamma grid");
  }
  const double g_max = max_abs(g);
  if (g_max == 0.0) return 1.0;

  std::vector<double> gammas(grid);
  std::sort(gammas.begin(), gammas.end());

  QuantizerSpec nearest = spec;
  nearest.rounding = QRounding::kNearest;

  double g_norm_sq = 0.0;
  for (std::int64_t i = 0; i < g.numel(); ++i) g_norm_sq += g[i] * g[i];

  double best_gamma = gammas.front();
  double best_cos = -2.0;
  for (const double gamma : gammas) {
    if (!(gamma > 0.0) || gamma > 1.0) {
      throw std::invalid_argument("dsgc_select_gamma: grid values must lie in (0, 1]");
    }
    const Tensor q = fake_quantize(g, gamma * g_max, nearest);
    double dot = 0.0;
    double q_norm_sq = 0.0;
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      dot += g[i] * q[i];
      q_norm_sq += q[i] * q[i];
    }
    if (q_norm_sq == 0.0) continue;  // everything rounded to zero
    const double cosine = dot / std::sqrt(g_norm_sq * q_norm_sq);
    if (cosine >= best_cos) {  // >= prefers the larger gamma on ties
      best_cos = cosine;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

GradClipState policy_step(const IntervalPolicy& policy, const GradClipState& state,
                          const Tensor& g) {
  GradClipState next = state;
  switch (policy.kind) {
    case PolicyKind::kOurs:
      return update_gamma(state, g);
    case PolicyKind::kMinMax:
      next.gamma = 1.0;
      return next;
    case PolicyKind::kFixedGamma:
      if (!(policy.fixed_gamma > 0.0) || policy.fixed_gamma > 1.0) {
        throw std::invalid_argument("policy_step: fixed gamma must lie in (0, 1]");
      }
      next.gamma = policy.fixed_gamma;
      return next;
    case PolicyKind::kDsgc: {
      QuantizerSpec spec;
      spec.bits = state.bits;
      spec.mode = QMode::kSymmetric;
      spec.rounding = QRounding::kNearest;
      next.gamma = dsgc_select_gamma(
          g, spec, policy.grid.empty() ? dsgc_default_grid() : policy.grid);
      return next;
    }
  }
  return next;
}

}  // namespace fxptrain
