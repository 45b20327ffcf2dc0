#pragma once

#include <cstdint>
#include <vector>

#include "fxptrain/rng.hpp"
#include "fxptrain/tensor.hpp"

namespace fxptrain {

// Layer-wise uniform fixed-point quantizer.
//
// Symmetric mode covers zero-centered data (weights, gradients); codes span
// [-(2^(b-1)-1), 2^(b-1)-1]. HalfNormal covers nonnegative data such as
// post-ReLU activations; codes span [0, 2^b-1].

enum class QMode { kSymmetric, kHalfNormal };
enum class QRounding { kNearest, kStochastic };

struct QuantizerSpec {
  int bits = 4;
  QMode mode = QMode::kSymmetric;
  QRounding rounding = QRounding::kNearest;
};

// Configs accept bits in [2, 8]; the kernels themselves work for any
// bits >= 2 (transparency tests run them at 16).
void validate_config_bits(const QuantizerSpec& spec);

std::int64_t code_min(const QuantizerSpec& spec);
std::int64_t code_max(const QuantizerSpec& spec);

// Integer codes plus the scale factor that maps them back to reals.
// Codes are kept in widest-native integers with a declared logical
// bit-width; value exactness is the contract, storage packing is not.
struct QTensor {
  std::vector<int> shape;
  std::vector<std::int64_t> codes;
  double scale = 1.0;
  QuantizerSpec spec;

  std::int64_t numel() const { return static_cast<std::int64_t>(codes.size()); }
};

// Clipping value c for a weight or activation quantizer. The gradient
// clipping value gamma * g_max is computed per iteration, never stored here.
struct ClipParam {
  double value = 1.0;
  bool learnable = false;
};

// s = c/(2^(b-1)-1) in Symmetric mode, c/(2^b-1) in HalfNormal mode.
// Throws std::domain_error for c <= 0.
double scale_factor(double c, const QuantizerSpec& spec);

// Symmetric: min(max(x,-c),c). HalfNormal: min(max(x,0),c).
Tensor clip(const Tensor& x, double c, QMode mode);

// floor(x_n)+1 with probability frac(x_n), else floor(x_n); expectation
// equals x_n. Consumes exactly one draw.
std::int64_t stochastic_round(double x_n, StreamRng& rng);

// codes = round(clip(x,c)/s). Nearest rounding breaks ties away from zero.
// Stochastic rounding requires rng and consumes numel(x) draws (indexed, so
// the parallel path is bit-identical to the serial one).
QTensor quantize(const Tensor& x, double c, const QuantizerSpec& spec,
                 StreamRng* rng = nullptr);

Tensor dequantize(const QTensor& q);

// dequantize(quantize(x)) fused into one pass; the training hot path.
Tensor fake_quantize(const Tensor& x, double c, const QuantizerSpec& spec,
                     StreamRng* rng = nullptr);

// Straight-through backward for a learned clipping value: upstream passes
// where x is strictly inside the clipping interval, and grad_c collects
// +/-upstream over saturated elements (sign of the saturated boundary; the
// HalfNormal lower boundary is 0 and contributes nothing).
struct SteGrads {
  Tensor grad_x;
  double grad_c = 0.0;
};
SteGrads ste_backward(const Tensor& x, const ClipParam& c, const Tensor& upstream,
                      const QuantizerSpec& spec);

}  // namespace fxptrain
