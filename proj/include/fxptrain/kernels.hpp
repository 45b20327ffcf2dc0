#pragma once

#include "fxptrain/tensor.hpp"

namespace fxptrain {

// Dense/conv compute kernels. The default entry points parallelize across
// output elements; every output element's reduction runs in the same fixed
// order as the serial versions in kernels::ref, so results are bitwise equal
// regardless of thread count.

struct Conv2dShape {
  int n = 0, c_in = 0, h = 0, w = 0;
  int c_out = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;

  int h_out() const { return (h + 2 * pad - kh) / stride + 1; }
  int w_out() const { return (w + 2 * pad - kw) / stride + 1; }
};

// out[m,n] = a[m,k] . b[k,n]
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
// out[k_a_cols, n] = a^T . b with a[m, k_a_cols], b[m, n]
void matmul_a_t(const Tensor& a, const Tensor& b, Tensor& out);
// out[m, k] = a[m, n] . b^T with b[k, n]
void matmul_b_t(const Tensor& a, const Tensor& b, Tensor& out);

void add_row_bias(Tensor& y, const Tensor& bias);          // y[m,n] += bias[n]
void row_bias_grad(const Tensor& gy, Tensor& gbias);       // gbias[n] = sum_m gy[m,n]

// NCHW direct convolution, no bias (conv layers here are bias-free; BN follows).
void conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dShape& s, Tensor& y);
void conv2d_backward_input(const Tensor& gy, const Tensor& w, const Conv2dShape& s,
                           Tensor& gx);
void conv2d_backward_weight(const Tensor& gy, const Tensor& x, const Conv2dShape& s,
                            Tensor& gw);

// Global average pool: [n,c,h,w] -> [n,c] and its adjoint.
void global_avgpool_forward(const Tensor& x, Tensor& y);
void global_avgpool_backward(const Tensor& gy, int h, int w, Tensor& gx);

namespace ref {
// Plain serial loops; the oracle the parallel kernels are tested against.
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_a_t(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_b_t(const Tensor& a, const Tensor& b, Tensor& out);
void conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dShape& s, Tensor& y);
void conv2d_backward_input(const Tensor& gy, const Tensor& w, const Conv2dShape& s,
                           Tensor& gx);
void conv2d_backward_weight(const Tensor& gy, const Tensor& x, const Conv2dShape& s,
                            Tensor& gw);
void global_avgpool_forward(const Tensor& x, Tensor& y);
void global_avgpool_backward(const Tensor& gy, int h, int w, Tensor& gx);
}  // namespace ref

}  // namespace fxptrain
