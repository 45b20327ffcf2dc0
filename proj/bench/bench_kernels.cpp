// Timing harness: OpenMP kernels vs the serial reference implementations.
// Also double-checks bitwise equality on the benchmarked shapes.

#include <chrono>
#include <cstdio>
#include <random>

#include "fxptrain/kernels.hpp"
#include "fxptrain/parallel.hpp"
#include "fxptrain/quantizer.hpp"
#include "fxptrain/tensor.hpp"

using namespace fxptrain;
using Clock = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& f, int reps) {
  f();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.data.size() != b.data.size()) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

void report(const char* name, double par_ms, double ser_ms, bool equal) {
  std::printf("%-24s par %8.3f ms   serial %8.3f ms   speedup %5.2fx   %s\n", name,
              par_ms, ser_ms, ser_ms / par_ms, equal ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", par::max_threads());
  std::mt19937_64 gen(7);
  const int reps = 5;

  {
    const Tensor a = randn({256, 512}, gen), b = randn({512, 256}, gen);
    Tensor yp({256, 256}), ys({256, 256});
    const double tp = time_ms([&] { matmul(a, b, yp); }, reps);
    const double ts = time_ms([&] { ref::matmul(a, b, ys); }, reps);
    report("matmul 256x512x256", tp, ts, bitwise_equal(yp, ys));
  }
  {
    Conv2dShape s{8, 16, 32, 32, 32, 3, 3, 1, 1};
    const Tensor x = randn({s.n, s.c_in, s.h, s.w}, gen);
    const Tensor w = randn({s.c_out, s.c_in, s.kh, s.kw}, gen);
    Tensor yp({s.n, s.c_out, s.h_out(), s.w_out()}), ys = yp;
    const double tp = time_ms([&] { conv2d_forward(x, w, s, yp); }, reps);
    const double ts = time_ms([&] { ref::conv2d_forward(x, w, s, ys); }, reps);
    report("conv2d fwd 8x16x32x32", tp, ts, bitwise_equal(yp, ys));

    const Tensor gy = randn({s.n, s.c_out, s.h_out(), s.w_out()}, gen);
    Tensor gxp({s.n, s.c_in, s.h, s.w}), gxs = gxp;
    const double tbi = time_ms([&] { conv2d_backward_input(gy, w, s, gxp); }, reps);
    const double tbs = time_ms([&] { ref::conv2d_backward_input(gy, w, s, gxs); }, reps);
    report("conv2d bwd-input", tbi, tbs, bitwise_equal(gxp, gxs));

    Tensor gwp({s.c_out, s.c_in, s.kh, s.kw}), gws = gwp;
    const double twi = time_ms([&] { conv2d_backward_weight(gy, x, s, gwp); }, reps);
    const double tws =
        time_ms([&] { ref::conv2d_backward_weight(gy, x, s, gws); }, reps);
    report("conv2d bwd-weight", twi, tws, bitwise_equal(gwp, gws));
  }
  {
    const Tensor g = randn({1 << 20}, gen);
    QuantizerSpec spec;  // 4-bit symmetric nearest
    Tensor qp, qs;
    const double tp = time_ms([&] { qp = fake_quantize(g, 0.8, spec); }, reps);
    par::set_enabled(false);
    const double ts = time_ms([&] { qs = fake_quantize(g, 0.8, spec); }, reps);
    par::set_enabled(true);
    report("fake_quantize 1M", tp, ts, bitwise_equal(qp, qs));
  }
  return 0;
}
