#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "fxptrain/kernels.hpp"
#include "fxptrain/parallel.hpp"
#include "fxptrain/tensor.hpp"

using namespace fxptrain;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

struct ParRestore {
  ~ParRestore() {
    par::set_enabled(true);
    par::set_threads(0);
  }
};

}  // namespace

TEST_CASE("matmul small example") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor y({2, 2});
  matmul(a, b, y);
  CHECK(y.data == std::vector<double>{58, 64, 139, 154});

  Tensor ys({2, 2});
  ref::matmul(a, b, ys);
  CHECK(bitwise_equal(y, ys));
}

TEST_CASE("transposed matmuls agree with explicit transposition") {
  std::mt19937_64 gen(11);
  const int m = 9, k = 7, n = 5;
  const Tensor a = randn({m, k}, gen);
  const Tensor b = randn({m, n}, gen);

  Tensor at({k, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];

  // Inner reductions run in the same index order, so this is exact.
  Tensor via_t({k, n}), direct({k, n});
  ref::matmul(at, b, via_t);
  matmul_a_t(a, b, direct);
  CHECK(bitwise_equal(via_t, direct));

  const Tensor c = randn({n, k}, gen);
  Tensor ct({k, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) ct[j * n + i] = c[i * k + j];
  Tensor via_t2({m, n}), direct2({m, n});
  ref::matmul(a, ct, via_t2);
  matmul_b_t(a, c, direct2);
  CHECK(bitwise_equal(via_t2, direct2));
}

TEST_CASE("conv2d hand example: all-ones 3x3, pad 1") {
  Conv2dShape s{1, 1, 3, 3, 1, 3, 3, 1, 1};
  Tensor x({1, 1, 3, 3});
  x.fill(1.0);
  Tensor w({1, 1, 3, 3});
  w.fill(1.0);
  Tensor y({1, 1, 3, 3});
  conv2d_forward(x, w, s, y);
  CHECK(y.data == std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4});
}

TEST_CASE("parallel kernels are bitwise equal to the serial reference") {
  ParRestore restore;
  std::mt19937_64 gen(23);

  const Tensor a = randn({17, 33}, gen), b = randn({33, 13}, gen);
  const Tensor gy_mm = randn({17, 13}, gen);

  Conv2dShape s{2, 3, 7, 5, 4, 3, 3, 2, 1};
  const Tensor x = randn({s.n, s.c_in, s.h, s.w}, gen);
  const Tensor w = randn({s.c_out, s.c_in, s.kh, s.kw}, gen);
  const Tensor gy = randn({s.n, s.c_out, s.h_out(), s.w_out()}, gen);

  Conv2dShape s1{3, 4, 6, 6, 8, 1, 1, 1, 0};
  const Tensor x1 = randn({s1.n, s1.c_in, s1.h, s1.w}, gen);
  const Tensor w1 = randn({s1.c_out, s1.c_in, 1, 1}, gen);
  const Tensor gy1 = randn({s1.n, s1.c_out, s1.h_out(), s1.w_out()}, gen);

  Tensor mm_ref({17, 13}), at_ref({33, 13}), bt_ref({17, 33});
  ref::matmul(a, b, mm_ref);
  ref::matmul_a_t(a, gy_mm, at_ref);
  ref::matmul_b_t(gy_mm, b, bt_ref);
  Tensor cf_ref({s.n, s.c_out, s.h_out(), s.w_out()});
  Tensor ci_ref({s.n, s.c_in, s.h, s.w});
  Tensor cw_ref({s.c_out, s.c_in, s.kh, s.kw});
  ref::conv2d_forward(x, w, s, cf_ref);
  ref::conv2d_backward_input(gy, w, s, ci_ref);
  ref::conv2d_backward_weight(gy, x, s, cw_ref);
  Tensor c1_ref({s1.n, s1.c_out, s1.h_out(), s1.w_out()});
  ref::conv2d_forward(x1, w1, s1, c1_ref);
  Tensor gp_ref({s.n, s.c_in});
  ref::global_avgpool_forward(x, gp_ref);
  Tensor gpb_ref({s.n, s.c_in, s.h, s.w});
  ref::global_avgpool_backward(gp_ref, s.h, s.w, gpb_ref);

  for (int threads : {1, 2, 3, 8}) {
    CAPTURE(threads);
    par::set_enabled(true);
    par::set_threads(threads);

    Tensor out({17, 13});
    matmul(a, b, out);
    CHECK(bitwise_equal(out, mm_ref));
    Tensor out_at({33, 13});
    matmul_a_t(a, gy_mm, out_at);
    CHECK(bitwise_equal(out_at, at_ref));
    Tensor out_bt({17, 33});
    matmul_b_t(gy_mm, b, out_bt);
    CHECK(bitwise_equal(out_bt, bt_ref));

    Tensor cf({s.n, s.c_out, s.h_out(), s.w_out()});
    conv2d_forward(x, w, s, cf);
    CHECK(bitwise_equal(cf, cf_ref));
    Tensor ci({s.n, s.c_in, s.h, s.w});
    conv2d_backward_input(gy, w, s, ci);
    CHECK(bitwise_equal(ci, ci_ref));
    Tensor cw({s.c_out, s.c_in, s.kh, s.kw});
    conv2d_backward_weight(gy, x, s, cw);
    CHECK(bitwise_equal(cw, cw_ref));

    Tensor c1({s1.n, s1.c_out, s1.h_out(), s1.w_out()});
    conv2d_forward(x1, w1, s1, c1);
    CHECK(bitwise_equal(c1, c1_ref));

    Tensor gp({s.n, s.c_in});
    global_avgpool_forward(x, gp);
    CHECK(bitwise_equal(gp, gp_ref));
    Tensor gpb({s.n, s.c_in, s.h, s.w});
    global_avgpool_backward(gp, s.h, s.w, gpb);
    CHECK(bitwise_equal(gpb, gpb_ref));
  }

  par::set_enabled(false);
  Tensor out({17, 13});
  matmul(a, b, out);
  CHECK(bitwise_equal(out, mm_ref));
}

TEST_CASE("conv2d backward passes are adjoints of the forward") {
  std::mt19937_64 gen(31);
  Conv2dShape s{2, 3, 8, 6, 5, 3, 3, 2, 1};
  const Tensor x = randn({s.n, s.c_in, s.h, s.w}, gen);
  const Tensor w = randn({s.c_out, s.c_in, s.kh, s.kw}, gen);
  const Tensor gy = randn({s.n, s.c_out, s.h_out(), s.w_out()}, gen);

  Tensor y({s.n, s.c_out, s.h_out(), s.w_out()});
  conv2d_forward(x, w, s, y);
  Tensor gx({s.n, s.c_in, s.h, s.w});
  conv2d_backward_input(gy, w, s, gx);
  Tensor gw({s.c_out, s.c_in, s.kh, s.kw});
  conv2d_backward_weight(gy, x, s, gw);

  // <conv(x, w), gy> = <x, conv_bwd_input(gy, w)> = <w, conv_bwd_weight(gy, x)>
  const double lhs = dot(y, gy);
  CHECK(dot(x, gx) == doctest::Approx(lhs).epsilon(1e-10));
  CHECK(dot(w, gw) == doctest::Approx(lhs).epsilon(1e-10));
}

TEST_CASE("row bias helpers") {
  Tensor y({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor bias({3}, {10, 20, 30});
  add_row_bias(y, bias);
  CHECK(y.data == std::vector<double>{11, 22, 33, 14, 25, 36});

  Tensor gb({3});
  row_bias_grad(y, gb);
  CHECK(gb.data == std::vector<double>{25, 47, 69});
}

TEST_CASE("global average pool forward and backward") {
  Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor y({1, 2});
  global_avgpool_forward(x, y);
  CHECK(y.data == std::vector<double>{2.5, 25.0});

  Tensor gy({1, 2}, {4.0, 8.0});
  Tensor gx({1, 2, 2, 2});
  global_avgpool_backward(gy, 2, 2, gx);
  CHECK(gx.data == std::vector<double>{1, 1, 1, 1, 2, 2, 2, 2});
}

TEST_CASE("shape mismatches are rejected") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({2, 2}, {1, 2, 3, 4});
  Tensor y({2, 2});
  CHECK_THROWS_AS(matmul(a, b, y), std::invalid_argument);

  Conv2dShape s{1, 1, 3, 3, 1, 3, 3, 1, 1};
  const Tensor x({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  const Tensor w_bad({1, 1, 2, 2}, std::vector<double>(4, 1.0));
  Tensor out({1, 1, 3, 3});
  CHECK_THROWS_AS(conv2d_forward(x, w_bad, s, out), std::invalid_argument);
}
