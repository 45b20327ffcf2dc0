#pragma once

#include <utility>
#include <vector>

#include "fxptrain/quantizer.hpp"
#include "fxptrain/tensor.hpp"

namespace fxptrain {

// Per-layer clipping-factor state. The gradient quantizer clips at
// c_g = gamma * g_max; gamma is nudged by +/-beta each iteration toward the
// point where the clip-out ratio meets alpha/(2^b - 1).
struct GradClipState {
  double gamma = 1.0;  // clipping factor, kept in [gamma_min(), 1]
  double beta = 1e-3;  // update step
  double alpha = 1e-3; // large-gradient ratio hyperparameter
  int bits = 4;

  // Lower clamp; keeps the interval from collapsing on degenerate layers.
  double gamma_min() const { return 10.0 * beta; }
};

enum class PolicyKind { kOurs, kMinMax, kFixedGamma, kDsgc };

struct IntervalPolicy {
  PolicyKind kind = PolicyKind::kOurs;
  double fixed_gamma = 1.0;       // FixedGamma only
  std::vector<double> grid;       // DSGC only; ascending values in (0,1]

  static IntervalPolicy ours() { return {PolicyKind::kOurs, 1.0, {}}; }
  static IntervalPolicy min_max() { return {PolicyKind::kMinMax, 1.0, {}}; }
  static IntervalPolicy fixed(double gamma0) { return {PolicyKind::kFixedGamma, gamma0, {}}; }
  static IntervalPolicy dsgc(std::vector<double> g = {}) {
    return {PolicyKind::kDsgc, 1.0, std::move(g)};
  }
};

// {0.05, 0.10, ..., 1.00}
std::vector<double> dsgc_default_grid();

// T = r_out - alpha/(2^b - 1); its sign is the update direction.
double t_statistic(double r_out, double alpha, int bits);

// One sign-based update with c_g = gamma * g_max. sign(0) leaves gamma
// unchanged, as does an all-zero tensor. Only needs one magnitude pass: when
// the count strictly above gamma*g_max reaches the G_L rank, T is positive
// regardless of the exact quantile, so no order statistic is computed.
GradClipState update_gamma(const GradClipState& state, const Tensor& g);

// (r_in - (2^b-2)/(2^b-1)*alpha, r_out - alpha/(2^b-1)); both vanish at an
// optimal clipping factor.
std::pair<double, double> optimality_residual(const GradClipState& state, const Tensor& g);

// Grid argmax of cosine(g, Q_gamma(g)) with nearest rounding and
// c = gamma*g_max. Ties break toward the larger gamma; an all-zero tensor
// returns 1.0.
double dsgc_select_gamma(const Tensor& g, const QuantizerSpec& spec,
                         const std::vector<double>& grid);

GradClipState policy_step(const IntervalPolicy& policy, const GradClipState& state,
                          const Tensor& g);

}  // namespace fxptrain
