#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fxptrain/quantizer.hpp"

using namespace fxptrain;

namespace {

QuantizerSpec spec_of(int bits, QMode mode, QRounding r) {
  QuantizerSpec s;
  s.bits = bits;
  s.mode = mode;
  s.rounding = r;
  return s;
}

// Independent scalar reference: Eqs. written out one value at a time, with
// half-away-from-zero nearest rounding done via floor.
double ref_fake_quantize_nearest(double x, double c, int bits, QMode mode) {
  const double qmax = mode == QMode::kSymmetric
                          ? static_cast<double>((1 << (bits - 1)) - 1)
                          : static_cast<double>((1 << bits) - 1);
  const double lo = mode == QMode::kSymmetric ? -c : 0.0;
  const double clipped = std::min(std::max(x, lo), c);
  const double s = c / qmax;
  const double xn = clipped / s;
  const double rounded = std::floor(std::abs(xn) + 0.5) * (xn < 0.0 ? -1.0 : 1.0);
  return rounded * s;
}

}  // namespace

TEST_CASE("scale_factor follows the mode-specific denominator") {
  CHECK(scale_factor(0.7, spec_of(4, QMode::kSymmetric, QRounding::kNearest)) ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(scale_factor(2.55, spec_of(8, QMode::kHalfNormal, QRounding::kNearest)) ==
        doctest::Approx(0.01).epsilon(1e-12));
  CHECK(scale_factor(1.0, spec_of(2, QMode::kSymmetric, QRounding::kNearest)) == 1.0);

  CHECK_THROWS_AS(scale_factor(0.0, spec_of(4, QMode::kSymmetric, QRounding::kNearest)),
                  std::domain_error);
  CHECK_THROWS_AS(scale_factor(-0.5, spec_of(4, QMode::kSymmetric, QRounding::kNearest)),
                  std::domain_error);
}

TEST_CASE("clip saturates at the mode-specific interval") {
  const Tensor sym = clip(Tensor::of({-5.0, 0.3, 5.0}), 1.0, QMode::kSymmetric);
  CHECK(sym[0] == -1.0);
  CHECK(sym[1] == 0.3);
  CHECK(sym[2] == 1.0);

  const Tensor hn = clip(Tensor::of({-0.2, 0.5}), 1.0, QMode::kHalfNormal);
  CHECK(hn[0] == 0.0);
  CHECK(hn[1] == 0.5);

  const Tensor boundary = clip(Tensor::of({0.99}), 0.99, QMode::kSymmetric);
  CHECK(boundary[0] == 0.99);
}

TEST_CASE("quantize nearest: worked scalars") {
  const auto spec = spec_of(4, QMode::kSymmetric, QRounding::kNearest);

  QTensor q0 = quantize(Tensor::of({0.0}), 1.0, spec);
  CHECK(q0.codes[0] == 0);
  CHECK(dequantize(q0)[0] == 0.0);

  // x_n = 0.3 * 7 = 2.1 -> code 2 -> 2/7.
  QTensor q1 = quantize(Tensor::of({0.3}), 1.0, spec);
  CHECK(q1.codes[0] == 2);
  CHECK(dequantize(q1)[0] == doctest::Approx(2.0 / 7.0).epsilon(1e-15));

  // Clipped to c first, then exact at the top code.
  QTensor q2 = quantize(Tensor::of({10.0}), 1.0, spec);
  CHECK(q2.codes[0] == 7);
  CHECK(dequantize(q2)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dequantize is code times scale") {
  QTensor q;
  q.shape = {1};
  q.spec = spec_of(4, QMode::kSymmetric, QRounding::kNearest);

  q.codes = {7};
  q.scale = 1.0 / 7.0;
  CHECK(dequantize(q)[0] == doctest::Approx(1.0).epsilon(1e-15));

  q.codes = {-4};
  q.scale = 0.5 / 7.0;
  CHECK(dequantize(q)[0] == doctest::Approx(-2.0 / 7.0).epsilon(1e-15));

  q.codes = {0};
  q.scale = 0.123;
  CHECK(dequantize(q)[0] == 0.0);
}

TEST_CASE("quantize matches the scalar reference on random inputs") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> xs(-3.0, 3.0);
  std::uniform_real_distribution<double> cs(0.05, 2.5);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 2 + static_cast<int>(gen() % 7);
    const QMode mode = (gen() % 2 == 0) ? QMode::kSymmetric : QMode::kHalfNormal;
    const auto spec = spec_of(bits, mode, QRounding::kNearest);
    const double c = cs(gen);
    const double x = xs(gen);
    const Tensor out = fake_quantize(Tensor::of({x}), c, spec);
    CHECK(out[0] == doctest::Approx(ref_fake_quantize_nearest(x, c, bits, mode))
                        .epsilon(1e-12));
  }
}

TEST_CASE("stochastic_round: integers are exact, fractions split by frac") {
  StreamRng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    CHECK(stochastic_round(2.0, rng) == 2);
  }

  const int n = 100000;
  auto run = [&](double xn, std::int64_t lo, double p_up) {
    int ups = 0;
    for (int i = 0; i < n; ++i) {
      const std::int64_t r = stochastic_round(xn, rng);
      CHECK((r == lo || r == lo + 1));
      if (r == lo + 1) ++ups;
    }
    const double se = std::sqrt(p_up * (1.0 - p_up) / n);
    CHECK(std::abs(static_cast<double>(ups) / n - p_up) <= 4.0 * se);
  };
  run(2.25, 2, 0.25);
  run(-1.5, -2, 0.5);
}

TEST_CASE("stochastic_round is unbiased over a grid of inputs") {
  StreamRng rng(99);
  const int n = 100000;
  for (const double xn : {-2.75, -1.5, -0.3, 0.0, 0.1, 0.25, 1.9, 3.5}) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(stochastic_round(xn, rng));
    const double p = xn - std::floor(xn);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n);
    CHECK(std::abs(sum / n - xn) <= 4.0 * se + 1e-9);
  }
}

TEST_CASE("ste_backward: pass-through inside, boundary sign outside") {
  const auto spec = spec_of(4, QMode::kSymmetric, QRounding::kNearest);
  ClipParam c{1.0, true};

  SteGrads g1 = ste_backward(Tensor::of({0.5}), c, Tensor::of({1.0}), spec);
  CHECK(g1.grad_x[0] == 1.0);
  CHECK(g1.grad_c == 0.0);

  SteGrads g2 = ste_backward(Tensor::of({2.0}), c, Tensor::of({1.0}), spec);
  CHECK(g2.grad_x[0] == 0.0);
  CHECK(g2.grad_c == 1.0);

  SteGrads g3 = ste_backward(Tensor::of({-2.0, 0.1}), c, Tensor::of({1.0, 1.0}), spec);
  CHECK(g3.grad_x[0] == 0.0);
  CHECK(g3.grad_x[1] == 1.0);
  CHECK(g3.grad_c == -1.0);

  CHECK_THROWS_AS(ste_backward(Tensor::of({1.0, 2.0}), c, Tensor::of({1.0}), spec),
                  std::invalid_argument);
}

TEST_CASE("ste_backward: half-normal lower boundary contributes nothing") {
  const auto spec = spec_of(4, QMode::kHalfNormal, QRounding::kNearest);
  ClipParam c{1.0, true};
  SteGrads g = ste_backward(Tensor::of({-0.5, 0.5, 2.0}), c,
                            Tensor::of({1.0, 1.0, 1.0}), spec);
  CHECK(g.grad_x[0] == 0.0);
  CHECK(g.grad_x[1] == 1.0);
  CHECK(g.grad_x[2] == 0.0);
  CHECK(g.grad_c == 1.0);
}

TEST_CASE("property: codes stay in range for every mode/rounding/bit-width") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (const int bits : {2, 4, 8}) {
    for (const QMode mode : {QMode::kSymmetric, QMode::kHalfNormal}) {
      for (const QRounding r : {QRounding::kNearest, QRounding::kStochastic}) {
        const auto spec = spec_of(bits, mode, r);
        Tensor x({257});
        for (auto& v : x.data) v = 3.0 * dist(gen);
        StreamRng rng(substream(5, bits, static_cast<int>(mode), static_cast<int>(r)));
        const QTensor q = quantize(x, 0.8, spec, &rng);
        for (const auto code : q.codes) {
          CHECK(code >= code_min(spec));
          CHECK(code <= code_max(spec));
        }
      }
    }
  }
}

TEST_CASE("property: rounding error bounded by s/2 (nearest) and s (stochastic)") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (const int bits : {2, 4, 8}) {
    const auto nearest = spec_of(bits, QMode::kSymmetric, QRounding::kNearest);
    const auto stoch = spec_of(bits, QMode::kSymmetric, QRounding::kStochastic);
    Tensor x({1000});
    for (auto& v : x.data) v = 2.0 * dist(gen);
    const double c = 1.3;
    const double s = scale_factor(c, nearest);
    const Tensor clipped = clip(x, c, QMode::kSymmetric);

    const Tensor qn = fake_quantize(x, c, nearest);
    StreamRng rng(31337);
    const Tensor qs = fake_quantize(x, c, stoch, &rng);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      CHECK(std::abs(qn[i] - clipped[i]) <= 0.5 * s * (1.0 + 1e-12));
      CHECK(std::abs(qs[i] - clipped[i]) <= s * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("property: idempotence under nearest re-quantization") {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (const int bits : {2, 4, 8}) {
    for (const QMode mode : {QMode::kSymmetric, QMode::kHalfNormal}) {
      const auto spec = spec_of(bits, mode, QRounding::kNearest);
      Tensor x({513});
      for (auto& v : x.data) v = dist(gen);
      const double c = 0.9;
      const QTensor q = quantize(x, c, spec);
      const QTensor q2 = quantize(dequantize(q), c, spec);
      CHECK(q2.codes == q.codes);
      CHECK(q2.scale == q.scale);
    }
  }
}

TEST_CASE("property: symmetric nearest quantization is odd") {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (const int bits : {2, 4, 8}) {
    const auto spec = spec_of(bits, QMode::kSymmetric, QRounding::kNearest);
    Tensor x({400});
    for (auto& v : x.data) v = 1.5 * dist(gen);
    Tensor neg(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) neg[i] = -x[i];
    const QTensor qp = quantize(x, 0.77, spec);
    const QTensor qn = quantize(neg, 0.77, spec);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      CHECK(qn.codes[static_cast<std::size_t>(i)] ==
            -qp.codes[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("fake_quantize agrees with quantize+dequantize, including stochastic") {
  std::mt19937_64 gen(15);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor x({321});
  for (auto& v : x.data) v = dist(gen);
  const auto spec = spec_of(4, QMode::kSymmetric, QRounding::kStochastic);
  StreamRng r1(77, 100);
  StreamRng r2(77, 100);
  const Tensor a = fake_quantize(x, 0.6, spec, &r1);
  const Tensor b = dequantize(quantize(x, 0.6, spec, &r2));
  CHECK(r1.counter() == r2.counter());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("errors: degenerate clip, missing rng, non-finite input") {
  const auto nearest = spec_of(4, QMode::kSymmetric, QRounding::kNearest);
  const auto stoch = spec_of(4, QMode::kSymmetric, QRounding::kStochastic);
  CHECK_THROWS_AS(quantize(Tensor::of({1.0}), 0.0, nearest), std::domain_error);
  CHECK_THROWS_AS(quantize(Tensor::of({1.0}), 1.0, stoch, nullptr), std::invalid_argument);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(quantize(Tensor::of({inf}), 1.0, nearest), std::invalid_argument);
  CHECK_THROWS_AS(quantize(Tensor::of({std::nan("")}), 1.0, nearest),
                  std::invalid_argument);
}

TEST_CASE("config bit-width validation covers [2,8] only") {
  CHECK_NOTHROW(validate_config_bits(spec_of(2, QMode::kSymmetric, QRounding::kNearest)));
  CHECK_NOTHROW(validate_config_bits(spec_of(8, QMode::kSymmetric, QRounding::kNearest)));
  CHECK_THROWS_AS(validate_config_bits(spec_of(1, QMode::kSymmetric, QRounding::kNearest)),
                  std::domain_error);
  CHECK_THROWS_AS(validate_config_bits(spec_of(9, QMode::kSymmetric, QRounding::kNearest)),
                  std::domain_error);
}
