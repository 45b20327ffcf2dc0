#include "fxptrain/quantizer.hpp"

#include <cmath>
#include <stdexcept>

#include "fxptrain/parallel.hpp"

namespace fxptrain {

namespace {

double clip_scalar(double v, double c, QMode mode) {
  const double lo = mode == QMode::kSymmetric ? -c : 0.0;
  return std::min(std::max(v, lo), c);
}

void check_clip_value(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::domain_error("quantizer: clipping value must be positive and finite");
  }
}

void check_finite(const Tensor& x, const char* what) {
  if (!x.all_finite()) {
    throw std::invalid_argument(std::string("quantizer: non-finite element in ") + what);
  }
}

}  // namespace

void validate_config_bits(const QuantizerSpec& spec) {
  if (spec.bits < 2 || spec.bits > 8) {
    throw std::domain_error("quantizer: bit-width must be in [2, 8]");
  }
}

std::int64_t code_min(const QuantizerSpec& spec) {
  if (spec.mode == QMode::kSymmetric) {
    return -((std::int64_t{1} << (spec.bits - 1)) - 1);
  }
  return 0;
}

std::int64_t code_max(const QuantizerSpec& spec) {
  if (spec.mode == QMode::kSymmetric) {
    return (std::int64_t{1} << (spec.bits - 1)) - 1;
  }
  return (std::int64_t{1} << spec.bits) - 1;
}

double scale_factor(double c, const QuantizerSpec& spec) {
  check_clip_value(c);
  if (spec.bits < 2) {
    throw std::domain_error("quantizer: bit-width must be at least 2");
  }
  return c / static_cast<double>(code_max(spec));
}

Tensor clip(const Tensor& x, double c, QMode mode) {
  check_clip_value(c);
  Tensor out(x.shape);
  par::parallel_for(x.numel(), [&](std::int64_t i) {
    out[i] = clip_scalar(x[i], c, mode);
  });
  return out;
}

std::int64_t stochastic_round(double x_n, StreamRng& rng) {
  const double f = std::floor(x_n);
  const double frac = x_n - f;
  const double u = rng.next();
  return static_cast<std::int64_t>(f) + (u < frac ? 1 : 0);
}

namespace {

// Shared elementwise body: code for element value v, drawing u(i) when
// stochastic. Codes are clamped to the representable range so the code-range
// invariant holds even when clip(x)/s lands a last-ulp outside it.
struct QuantizeBody {
  double c;
  double scale;
  QMode mode;
  QRounding rounding;
  std::int64_t qmin, qmax;
  const StreamRng* rng;

  std::int64_t code_at(double v, std::int64_t i) const {
    const double x_n = clip_scalar(v, c, mode) / scale;
    std::int64_t code;
    if (rounding == QRounding::kNearest) {
      code = static_cast<std::int64_t>(std::llround(x_n));
    } else {
      const double f = std::floor(x_n);
      const double frac = x_n - f;
      const double u = rng->uniform_at(static_cast<std::uint64_t>(i));
      code = static_cast<std::int64_t>(f) + (u < frac ? 1 : 0);
    }
    return std::min(std::max(code, qmin), qmax);
  }
};

QuantizeBody make_body(const Tensor& x, double c, const QuantizerSpec& spec,
                       StreamRng* rng) {
  check_finite(x, "input tensor");
  if (spec.rounding == QRounding::kStochastic && rng == nullptr) {
    throw std::invalid_argument("quantizer: stochastic rounding requires a random stream");
  }
  QuantizeBody body;
  body.c = c;
  body.scale = scale_factor(c, spec);
  body.mode = spec.mode;
  body.rounding = spec.rounding;
  body.qmin = code_min(spec);
  body.qmax = code_max(spec);
  body.rng = rng;
  return body;
}

}  // namespace

QTensor quantize(const Tensor& x, double c, const QuantizerSpec& spec, StreamRng* rng) {
  const QuantizeBody body = make_body(x, c, spec, rng);
  QTensor q;
  q.shape = x.shape;
  q.scale = body.scale;
  q.spec = spec;
  q.codes.assign(static_cast<std::size_t>(x.numel()), 0);
  par::parallel_for(x.numel(), [&](std::int64_t i) {
    q.codes[static_cast<std::size_t>(i)] = body.code_at(x[i], i);
  });
  if (rng != nullptr && spec.rounding == QRounding::kStochastic) {
    rng->advance(static_cast<std::uint64_t>(x.numel()));
  }
  return q;
}

Tensor dequantize(const QTensor& q) {
  Tensor out(q.shape);
  par::parallel_for(q.numel(), [&](std::int64_t i) {
    out[i] = static_cast<double>(q.codes[static_cast<std::size_t>(i)]) * q.scale;
  });
  return out;
}

Tensor fake_quantize(const Tensor& x, double c, const QuantizerSpec& spec, StreamRng* rng) {
  const QuantizeBody body = make_body(x, c, spec, rng);
  Tensor out(x.shape);
  par::parallel_for(x.numel(), [&](std::int64_t i) {
    out[i] = static_cast<double>(body.code_at(x[i], i)) * body.scale;
  });
  if (rng != nullptr && spec.rounding == QRounding::kStochastic) {
    rng->advance(static_cast<std::uint64_t>(x.numel()));
  }
  return out;
}

SteGrads ste_backward(const Tensor& x, const ClipParam& c, const Tensor& upstream,
                      const QuantizerSpec& spec) {
  if (!x.same_shape(upstream)) {
    throw std::invalid_argument("ste_backward: shape mismatch between x and upstream");
  }
  check_clip_value(c.value);
  SteGrads out;
  out.grad_x = Tensor(x.shape);
  double grad_c = 0.0;
  const double cv = c.value;
  // Serial: grad_c is a linear-index-order reduction.
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    if (spec.mode == QMode::kSymmetric) {
      if (v >= cv) {
        grad_c += upstream[i];
      } else if (v <= -cv) {
        grad_c -= upstream[i];
      } else {
        out.grad_x[i] = upstream[i];
      }
    } else {
      if (v >= cv) {
        grad_c += upstream[i];
      } else if (v > 0.0) {
        out.grad_x[i] = upstream[i];
      }
      // v <= 0 saturates at the fixed lower boundary; no gradient to c.
    }
  }
  out.grad_c = grad_c;
  return out;
}

}  // namespace fxptrain
