#pragma once

#include "fxptrain/tensor.hpp"

namespace fxptrain {

// Per-layer, per-iteration gradient quantization statistics.
//
// Conventions (shared by the interval controller):
//  - g_max is the max |g| of the pre-quantization tensor.
//  - The large-gradient set G_L is {|g| >= t_alpha} with t_alpha an order
//    statistic: the smallest attainable fraction >= alpha ends up above it.
//    Under ties N(G_L) can exceed ceil(alpha*N); ratios are then reported
//    against the effective alpha = N(G_L)/N so r_in + r_out stays an exact
//    partition.
//  - All reductions run serially in linear index order, so results are
//    reproducible bit for bit.
struct GradErrorReport {
  double g_max = 0.0;
  double t_alpha = 0.0;
  double e_entire = 0.0;  // mean |g - Q(g)| / g_max over all gradients
  double e_large = 0.0;   // same, restricted to G_L
  double r_in = 0.0;      // |{g in G_L : |g| <= gamma*g_max}| / N
  double r_out = 0.0;     // |{g in G_L : |g| >  gamma*g_max}| / N
  double ulg = 0.0;       // upper bound of e_large given (gamma, bits, ratios)
};

double max_abs(const Tensor& g);  // throws std::invalid_argument on empty input

// Magnitude threshold defining G_L. alpha must lie in (0,1).
double large_grad_threshold(const Tensor& g, double alpha);

// All-zero tensors (g_max == 0) quantize exactly; both error metrics are
// defined as 0 in that case.
double error_entire(const Tensor& g, const Tensor& q, double g_max);
double error_large(const Tensor& g, const Tensor& q, double alpha, double g_max);

struct ClipRatios {
  double r_in = 0.0;
  double r_out = 0.0;
};
ClipRatios clip_ratios(const Tensor& g, double gamma, double alpha);

// U(G_L) = (gamma/(2^b-2) * r_in + (1-gamma) * r_out) / alpha.
double ulg(double gamma, int bits, double r_in, double r_out, double alpha);

// d ULG / d gamma under the flat-tail approximation:
// (r_in/(2^b-2) - r_out) / alpha.
double ulg_derivative(double gamma, int bits, double r_in, double r_out, double alpha);

// Full report on the pre-quantization gradient tensor g and its dequantized
// quantization q (produced with c = gamma*g_max). ULG uses the effective
// alpha, so e_large <= ulg holds exactly for nearest rounding.
GradErrorReport compute_report(const Tensor& g, const Tensor& q, double gamma,
                               double alpha, int bits);

}  // namespace fxptrain
