#include "fxptrain/kernels.hpp"

#include <stdexcept>

#include "fxptrain/parallel.hpp"

namespace fxptrain {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_matmul(const Tensor& a, const Tensor& b, Tensor& out, int m, int k, int n) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be rank 2");
  require(static_cast<std::int64_t>(m) * k == a.numel() &&
              static_cast<std::int64_t>(k) * n == b.numel(),
          "matmul: inner dimensions disagree");
  if (out.shape != std::vector<int>{m, n}) out = Tensor({m, n});
}

void check_conv(const Tensor& x, const Tensor& w, const Conv2dShape& s) {
  require(x.numel() == static_cast<std::int64_t>(s.n) * s.c_in * s.h * s.w,
          "conv2d: input shape disagrees with Conv2dShape");
  require(w.numel() == static_cast<std::int64_t>(s.c_out) * s.c_in * s.kh * s.kw,
          "conv2d: weight shape disagrees with Conv2dShape");
  require(s.h_out() > 0 && s.w_out() > 0, "conv2d: empty output");
}

}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions disagree");
  check_matmul(a, b, out, m, k, n);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  par::parallel_for(static_cast<std::int64_t>(m) * n, [=](std::int64_t idx) {
    const int i = static_cast<int>(idx / n);
    const int j = static_cast<int>(idx % n);
    double acc = 0.0;
    for (int l = 0; l < k; ++l) acc += pa[static_cast<std::int64_t>(i) * k + l] *
                                       pb[static_cast<std::int64_t>(l) * n + j];
    po[idx] = acc;
  });
}

void matmul_a_t(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), ka = a.dim(1), n = b.dim(1);
  require(b.dim(0) == m, "matmul_a_t: leading dimensions disagree");
  check_matmul(a, b, out, ka, m, n);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  par::parallel_for(static_cast<std::int64_t>(ka) * n, [=](std::int64_t idx) {
    const int i = static_cast<int>(idx / n);
    const int j = static_cast<int>(idx % n);
    double acc = 0.0;
    for (int l = 0; l < m; ++l) acc += pa[static_cast<std::int64_t>(l) * ka + i] *
                                       pb[static_cast<std::int64_t>(l) * n + j];
    po[idx] = acc;
  });
}

void matmul_b_t(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), n = a.dim(1), kb = b.dim(0);
  require(b.dim(1) == n, "matmul_b_t: trailing dimensions disagree");
  if (out.shape != std::vector<int>{m, kb}) out = Tensor({m, kb});
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  par::parallel_for(static_cast<std::int64_t>(m) * kb, [=](std::int64_t idx) {
    const int i = static_cast<int>(idx / kb);
    const int j = static_cast<int>(idx % kb);
    double acc = 0.0;
    for (int l = 0; l < n; ++l) acc += pa[static_cast<std::int64_t>(i) * n + l] *
                                       pb[static_cast<std::int64_t>(j) * n + l];
    po[idx] = acc;
  });
}

void add_row_bias(Tensor& y, const Tensor& bias) {
  const int m = y.dim(0), n = y.dim(1);
  require(bias.numel() == n, "add_row_bias: bias length mismatch");
  double* py = y.data.data();
  const double* pb = bias.data.data();
  par::parallel_for(static_cast<std::int64_t>(m) * n,
                    [=](std::int64_t idx) { py[idx] += pb[idx % n]; });
}

void row_bias_grad(const Tensor& gy, Tensor& gbias) {
  const int m = gy.dim(0), n = gy.dim(1);
  if (gbias.shape != std::vector<int>{n}) gbias = Tensor({n});
  const double* pg = gy.data.data();
  double* pb = gbias.data.data();
  par::parallel_for(n, [=](std::int64_t j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += pg[static_cast<std::int64_t>(i) * n + j];
    pb[j] = acc;
  });
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dShape& s, Tensor& y) {
  check_conv(x, w, s);
  const int ho = s.h_out(), wo = s.w_out();
  if (y.shape != std::vector<int>{s.n, s.c_out, ho, wo})
    y = Tensor({s.n, s.c_out, ho, wo});
  const double* px = x.data.data();
  const double* pw = w.data.data();
  double* py = y.data.data();
  const Conv2dShape sh = s;
  par::parallel_for(y.numel(), [=](std::int64_t idx) {
    const int ow = static_cast<int>(idx % wo);
    const int oh = static_cast<int>((idx / wo) % ho);
    const int co = static_cast<int>((idx / (static_cast<std::int64_t>(wo) * ho)) % sh.c_out);
    const int nb = static_cast<int>(idx / (static_cast<std::int64_t>(wo) * ho * sh.c_out));
    double acc = 0.0;
    for (int ci = 0; ci < sh.c_in; ++ci) {
      for (int r = 0; r < sh.kh; ++r) {
        const int ih = oh * sh.stride - sh.pad + r;
        if (ih < 0 || ih >= sh.h) continue;
        for (int c = 0; c < sh.kw; ++c) {
          const int iw = ow * sh.stride - sh.pad + c;
          if (iw < 0 || iw >= sh.w) continue;
          const std::int64_t xi =
              ((static_cast<std::int64_t>(nb) * sh.c_in + ci) * sh.h + ih) * sh.w + iw;
          const std::int64_t wi =
              ((static_cast<std::int64_t>(co) * sh.c_in + ci) * sh.kh + r) * sh.kw + c;
          acc += px[xi] * pw[wi];
        }
      }
    }
    py[idx] = acc;
  });
}

void conv2d_backward_input(const Tensor& gy, const Tensor& w, const Conv2dShape& s,
                           Tensor& gx) {
  const int ho = s.h_out(), wo = s.w_out();
  require(w.numel() == static_cast<std::int64_t>(s.c_out) * s.c_in * s.kh * s.kw,
          "conv2d_backward_input: weight shape mismatch");
  require(gy.numel() == static_cast<std::int64_t>(s.n) * s.c_out * ho * wo,
          "conv2d_backward_input: gy shape mismatch");
  if (gx.shape != std::vector<int>{s.n, s.c_in, s.h, s.w})
    gx = Tensor({s.n, s.c_in, s.h, s.w});
  const double* pg = gy.data.data();
  const double* pw = w.data.data();
  double* px = gx.data.data();
  const Conv2dShape sh = s;
  par::parallel_for(gx.numel(), [=](std::int64_t idx) {
    const int iw = static_cast<int>(idx % sh.w);
    const int ih = static_cast<int>((idx / sh.w) % sh.h);
    const int ci = static_cast<int>((idx / (static_cast<std::int64_t>(sh.w) * sh.h)) % sh.c_in);
    const int nb = static_cast<int>(idx / (static_cast<std::int64_t>(sh.w) * sh.h * sh.c_in));
    double acc = 0.0;
    for (int co = 0; co < sh.c_out; ++co) {
      for (int r = 0; r < sh.kh; ++r) {
        const int oh_num = ih + sh.pad - r;
        if (oh_num < 0 || oh_num % sh.stride != 0) continue;
        const int oh = oh_num / sh.stride;
        if (oh >= ho) continue;
        for (int c = 0; c < sh.kw; ++c) {
          const int ow_num = iw + sh.pad - c;
          if (ow_num < 0 || ow_num % sh.stride != 0) continue;
          const int ow = ow_num / sh.stride;
          if (ow >= wo) continue;
          const std::int64_t gi =
              ((static_cast<std::int64_t>(nb) * sh.c_out + co) * ho + oh) * wo + ow;
          const std::int64_t wi =
              ((static_cast<std::int64_t>(co) * sh.c_in + ci) * sh.kh + r) * sh.kw + c;
          acc += pg[gi] * pw[wi];
        }
      }
    }
    px[idx] = acc;
  });
}

void conv2d_backward_weight(const Tensor& gy, const Tensor& x, const Conv2dShape& s,
                            Tensor& gw) {
  const int ho = s.h_out(), wo = s.w_out();
  require(gy.numel() == static_cast<std::int64_t>(s.n) * s.c_out * ho * wo,
          "conv2d_backward_weight: gy shape mismatch");
  require(x.numel() == static_cast<std::int64_t>(s.n) * s.c_in * s.h * s.w,
          "conv2d_backward_weight: x shape mismatch");
  if (gw.shape != std::vector<int>{s.c_out, s.c_in, s.kh, s.kw})
    gw = Tensor({s.c_out, s.c_in, s.kh, s.kw});
  const double* pg = gy.data.data();
  const double* px = x.data.data();
  double* pw = gw.data.data();
  const Conv2dShape sh = s;
  par::parallel_for(gw.numel(), [=](std::int64_t idx) {
    const int c = static_cast<int>(idx % sh.kw);
    const int r = static_cast<int>((idx / sh.kw) % sh.kh);
    const int ci = static_cast<int>((idx / (static_cast<std::int64_t>(sh.kw) * sh.kh)) % sh.c_in);
    const int co = static_cast<int>(idx / (static_cast<std::int64_t>(sh.kw) * sh.kh * sh.c_in));
    double acc = 0.0;
    for (int nb = 0; nb < sh.n; ++nb) {
      for (int oh = 0; oh < ho; ++oh) {
        const int ih = oh * sh.stride - sh.pad + r;
        if (ih < 0 || ih >= sh.h) continue;
        for (int ow = 0; ow < wo; ++ow) {
          const int iw = ow * sh.stride - sh.pad + c;
          if (iw < 0 || iw >= sh.w) continue;
          const std::int64_t gi =
              ((static_cast<std::int64_t>(nb) * sh.c_out + co) * ho + oh) * wo + ow;
          const std::int64_t xi =
              ((static_cast<std::int64_t>(nb) * sh.c_in + ci) * sh.h + ih) * sh.w + iw;
          acc += pg[gi] * px[xi];
        }
      }
    }
    pw[idx] = acc;
  });
}

void global_avgpool_forward(const Tensor& x, Tensor& y) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (y.shape != std::vector<int>{n, c}) y = Tensor({n, c});
  const double* px = x.data.data();
  double* py = y.data.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  par::parallel_for(static_cast<std::int64_t>(n) * c, [=](std::int64_t idx) {
    double acc = 0.0;
    const double* base = px + idx * hw;
    for (std::int64_t i = 0; i < hw; ++i) acc += base[i];
    py[idx] = acc / static_cast<double>(hw);
  });
}

void global_avgpool_backward(const Tensor& gy, int h, int w, Tensor& gx) {
  const int n = gy.dim(0), c = gy.dim(1);
  if (gx.shape != std::vector<int>{n, c, h, w}) gx = Tensor({n, c, h, w});
  const double* pg = gy.data.data();
  double* px = gx.data.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  par::parallel_for(gx.numel(),
                    [=](std::int64_t idx) { px[idx] = pg[idx / hw] / static_cast<double>(hw); });
}

namespace ref {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions disagree");
  if (out.shape != std::vector<int>{m, n}) out = Tensor({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l)
        acc += a.data[static_cast<std::size_t>(i) * k + l] *
               b.data[static_cast<std::size_t>(l) * n + j];
      out.data[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_a_t(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), ka = a.dim(1), n = b.dim(1);
  require(b.dim(0) == m, "matmul_a_t: leading dimensions disagree");
  if (out.shape != std::vector<int>{ka, n}) out = Tensor({ka, n});
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < m; ++l)
        acc += a.data[static_cast<std::size_t>(l) * ka + i] *
               b.data[static_cast<std::size_t>(l) * n + j];
      out.data[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

void matmul_b_t(const Tensor& a, const Tensor& b, Tensor& out) {
  const int m = a.dim(0), n = a.dim(1), kb = b.dim(0);
  require(b.dim(1) == n, "matmul_b_t: trailing dimensions disagree");
  if (out.shape != std::vector<int>{m, kb}) out = Tensor({m, kb});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < kb; ++j) {
      double acc = 0.0;
      for (int l = 0; l < n; ++l)
        acc += a.data[static_cast<std::size_t>(i) * n + l] *
               b.data[static_cast<std::size_t>(j) * n + l];
      out.data[static_cast<std::size_t>(i) * kb + j] = acc;
    }
  }
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Conv2dShape& s, Tensor& y) {
  const int ho = s.h_out(), wo = s.w_out();
  if (y.shape != std::vector<int>{s.n, s.c_out, ho, wo})
    y = Tensor({s.n, s.c_out, ho, wo});
  std::int64_t idx = 0;
  for (int nb = 0; nb < s.n; ++nb)
    for (int co = 0; co < s.c_out; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow, ++idx) {
          double acc = 0.0;
          for (int ci = 0; ci < s.c_in; ++ci)
            for (int r = 0; r < s.kh; ++r) {
              const int ih = oh * s.stride - s.pad + r;
              if (ih < 0 || ih >= s.h) continue;
              for (int c = 0; c < s.kw; ++c) {
                const int iw = ow * s.stride - s.pad + c;
                if (iw < 0 || iw >= s.w) continue;
                acc += x.data[((static_cast<std::size_t>(nb) * s.c_in + ci) * s.h + ih) * s.w + iw] *
                       w.data[((static_cast<std::size_t>(co) * s.c_in + ci) * s.kh + r) * s.kw + c];
              }
            }
          y.data[static_cast<std::size_t>(idx)] = acc;
        }
}

void conv2d_backward_input(const Tensor& gy, const Tensor& w, const Conv2dShape& s,
                           Tensor& gx) {
  const int ho = s.h_out(), wo = s.w_out();
  if (gx.shape != std::vector<int>{s.n, s.c_in, s.h, s.w})
    gx = Tensor({s.n, s.c_in, s.h, s.w});
  std::int64_t idx = 0;
  for (int nb = 0; nb < s.n; ++nb)
    for (int ci = 0; ci < s.c_in; ++ci)
      for (int ih = 0; ih < s.h; ++ih)
        for (int iw = 0; iw < s.w; ++iw, ++idx) {
          double acc = 0.0;
          for (int co = 0; co < s.c_out; ++co)
            for (int r = 0; r < s.kh; ++r) {
              const int oh_num = ih + s.pad - r;
              if (oh_num < 0 || oh_num % s.stride != 0) continue;
              const int oh = oh_num / s.stride;
              if (oh >= ho) continue;
              for (int c = 0; c < s.kw; ++c) {
                const int ow_num = iw + s.pad - c;
                if (ow_num < 0 || ow_num % s.stride != 0) continue;
                const int ow = ow_num / s.stride;
                if (ow >= wo) continue;
                acc += gy.data[((static_cast<std::size_t>(nb) * s.c_out + co) * ho + oh) * wo + ow] *
                       w.data[((static_cast<std::size_t>(co) * s.c_in + ci) * s.kh + r) * s.kw + c];
              }
            }
          gx.data[static_cast<std::size_t>(idx)] = acc;
        }
}

void conv2d_backward_weight(const Tensor& gy, const Tensor& x, const Conv2dShape& s,
                            Tensor& gw) {
  const int ho = s.h_out(), wo = s.w_out();
  if (gw.shape != std::vector<int>{s.c_out, s.c_in, s.kh, s.kw})
    gw = Tensor({s.c_out, s.c_in, s.kh, s.kw});
  std::int64_t idx = 0;
  for (int co = 0; co < s.c_out; ++co)
    for (int ci = 0; ci < s.c_in; ++ci)
      for (int r = 0; r < s.kh; ++r)
        for (int c = 0; c < s.kw; ++c, ++idx) {
          double acc = 0.0;
          for (int nb = 0; nb < s.n; ++nb)
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * s.stride - s.pad + r;
              if (ih < 0 || ih >= s.h) continue;
              for (int ow = 0; ow < wo; ++ow) {
                const int iw = ow * s.stride - s.pad + c;
                if (iw < 0 || iw >= s.w) continue;
                acc += gy.data[((static_cast<std::size_t>(nb) * s.c_out + co) * ho + oh) * wo + ow] *
                       x.data[((static_cast<std::size_t>(nb) * s.c_in + ci) * s.h + ih) * s.w + iw];
              }
            }
          gw.data[static_cast<std::size_t>(idx)] = acc;
        }
}

void global_avgpool_forward(const Tensor& x, Tensor& y) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (y.shape != std::vector<int>{n, c}) y = Tensor({n, c});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t idx = 0; idx < y.numel(); ++idx) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) acc += x.data[static_cast<std::size_t>(idx * hw + i)];
    y.data[static_cast<std::size_t>(idx)] = acc / static_cast<double>(hw);
  }
}

void global_avgpool_backward(const Tensor& gy, int h, int w, Tensor& gx) {
  const int n = gy.dim(0), c = gy.dim(1);
  if (gx.shape != std::vector<int>{n, c, h, w}) gx = Tensor({n, c, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t idx = 0; idx < gx.numel(); ++idx)
    gx.data[static_cast<std::size_t>(idx)] =
        gy.data[static_cast<std::size_t>(idx / hw)] / static_cast<double>(hw);
}

}  // namespace ref

}  // namespace fxptrain
