#include "fxptrain/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fxptrain/parallel.hpp"
#include "fxptrain/rng.hpp"

namespace fxptrain {

namespace {

Tensor relu_with_mask(const Tensor& x, Tensor& mask) {
  Tensor y(x.shape);
  mask = Tensor(x.shape);
  const double* px = x.ptr();
  double* py = y.ptr();
  double* pm = mask.ptr();
  par::parallel_for(x.numel(), [=](std::int64_t i) {
    const bool pos = px[i] > 0.0;
    py[i] = pos ? px[i] : 0.0;
    pm[i] = pos ? 1.0 : 0.0;
  });
  return y;
}

Tensor masked(const Tensor& g, const Tensor& mask) {
  Tensor out(g.shape);
  const double* pg = g.ptr();
  const double* pm = mask.ptr();
  double* po = out.ptr();
  par::parallel_for(g.numel(), [=](std::int64_t i) { po[i] = pg[i] * pm[i]; });
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  double* pa = a.ptr();
  const double* pb = b.ptr();
  par::parallel_for(a.numel(), [=](std::int64_t i) { pa[i] += pb[i]; });
}

}  // namespace

void TrainableLayer::clips(std::vector<ClipRef>& out) {
  if (q.fwd_w) out.push_back({label + ".w_clip", &q.w_clip, &q.w_clip_grad});
  if (q.fwd_a) out.push_back({label + ".a_clip", &q.a_clip, &q.a_clip_grad});
}

Tensor TrainableLayer::used_weight(const ForwardCtx& ctx) {
  if (!q.fwd_w || ctx.calibrate) return w;
  ++q.w_quant_calls;
  return fake_quantize(w, q.w_clip.value, q.w_spec);
}

Tensor TrainableLayer::used_input(const Tensor& x, const ForwardCtx& ctx) {
  if (ctx.calibrate) {
    if (q.fwd_a) q.a_clip.value = abs_percentile_floored(x, 0.999);
    return x;
  }
  if (!q.fwd_a) return x;
  ++q.a_quant_calls;
  return fake_quantize(x, q.a_clip.value, q.a_spec);
}

Tensor TrainableLayer::filter_grad(const Tensor& gy, BackwardCtx& ctx) {
  if (!q.bwd_g || !ctx.quantize) return gy;

  LayerTraceRow row;
  row.layer_id = layer_id;
  row.gamma = q.gstate.gamma;

  const std::int64_t n = gy.numel();
  const double gmax = max_abs(gy);
  row.g_max = gmax;
  if (gmax == 0.0) {
    // Exact already; gamma update skipped by contract.
    row.full = ctx.full_metrics;
    if (ctx.rows) ctx.rows->push_back(row);
    return gy;
  }

  q.gstate.alpha = std::min(q.tau / static_cast<double>(n), 0.5);
  const double c = q.gstate.gamma * gmax;

  std::int64_t n_strict = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (std::abs(gy[i]) > c) ++n_strict;
  std::int64_t k0 = static_cast<std::int64_t>(
      std::ceil(q.gstate.alpha * static_cast<double>(n) - 1e-9));
  k0 = std::clamp<std::int64_t>(k0, 1, n);
  if (n_strict < k0) {
    // Interval covers the large-gradient threshold: everything above c is in
    // G_L, so the count is the exact ratio and no quantile is needed.
    row.r_out = static_cast<double>(n_strict) / static_cast<double>(n);
  } else {
    row.r_out = clip_ratios(gy, q.gstate.gamma, q.gstate.alpha).r_out;
  }

  StreamRng rng(substream(ctx.seed, static_cast<std::uint64_t>(ctx.iter),
                          static_cast<std::uint64_t>(layer_id), 0));
  ++q.g_quant_calls;
  Tensor out = fake_quantize(gy, c, q.g_spec, &rng);

  if (ctx.full_metrics) {
    row.full = true;
    row.rep = compute_report(gy, out, q.gstate.gamma, q.gstate.alpha, q.gstate.bits);
    row.r_out = row.rep.r_out;
  }
  if (ctx.rows) ctx.rows->push_back(row);

  if (ctx.adapt_gamma) q.gstate = policy_step(q.policy, q.gstate, gy);
  return out;
}

void TrainableLayer::finish_weight_grad(const Tensor& grad_on_used, BackwardCtx& ctx) {
  Tensor g = grad_on_used;
  if (q.quantize_weight_grads && q.bwd_g && ctx.quantize) {
    const double gm = max_abs(g);
    if (gm > 0.0) {
      StreamRng rng(substream(ctx.seed, static_cast<std::uint64_t>(ctx.iter),
                              static_cast<std::uint64_t>(layer_id), 1));
      ++q.g_quant_calls;
      g = fake_quantize(g, q.gstate.gamma * gm, q.g_spec, &rng);
    }
  }
  if (q.fwd_w) {
    SteGrads s = ste_backward(w, q.w_clip, g, q.w_spec);
    gw = std::move(s.grad_x);
    q.w_clip_grad = s.grad_c;
  } else {
    gw = std::move(g);
  }
}

Dense::Dense(int in, int out) : in_dim(in), out_dim(out) {
  w = Tensor({in, out});
  gw = Tensor({in, out});
  b = Tensor({out});
  gb = Tensor({out});
}

Tensor Dense::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.ndim() != 2 || x.dim(1) != in_dim)
    throw std::invalid_argument(label + ": bad input shape");
  x_in_ = x;
  a_used_ = used_input(x, ctx);
  w_used_ = used_weight(ctx);
  Tensor y;
  matmul(a_used_, w_used_, y);
  add_row_bias(y, b);
  return y;
}

Tensor Dense::backward(const Tensor& gy, BackwardCtx& ctx) {
  const Tensor g = filter_grad(gy, ctx);
  Tensor gw_used;
  matmul_a_t(a_used_, g, gw_used);
  row_bias_grad(g, gb);
  Tensor gx;
  matmul_b_t(g, w_used_, gx);
  finish_weight_grad(gw_used, ctx);
  if (q.fwd_a) {
    SteGrads s = ste_backward(x_in_, q.a_clip, gx, q.a_spec);
    q.a_clip_grad = s.grad_c;
    return std::move(s.grad_x);
  }
  return gx;
}

void Dense::params(std::vector<ParamRef>& out) {
  out.push_back({label + ".w", &w, &gw, true});
  out.push_back({label + ".b", &b, &gb, false});
}

Conv2D::Conv2D(int c_in, int c_out, int ksize, int stride, int pad) {
  shape.c_in = c_in;
  shape.c_out = c_out;
  shape.kh = shape.kw = ksize;
  shape.stride = stride;
  shape.pad = pad;
  w = Tensor({c_out, c_in, ksize, ksize});
  gw = Tensor({c_out, c_in, ksize, ksize});
}

Tensor Conv2D::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.ndim() != 4 || x.dim(1) != shape.c_in)
    throw std::invalid_argument(label + ": bad input shape");
  shape.n = x.dim(0);
  shape.h = x.dim(2);
  shape.w = x.dim(3);
  x_in_ = x;
  a_used_ = used_input(x, ctx);
  w_used_ = used_weight(ctx);
  Tensor y;
  conv2d_forward(a_used_, w_used_, shape, y);
  return y;
}

Tensor Conv2D::backward(const Tensor& gy, BackwardCtx& ctx) {
  const Tensor g = filter_grad(gy, ctx);
  Tensor gw_used;
  conv2d_backward_weight(g, a_used_, shape, gw_used);
  Tensor gx;
  conv2d_backward_input(g, w_used_, shape, gx);
  finish_weight_grad(gw_used, ctx);
  if (q.fwd_a) {
    SteGrads s = ste_backward(x_in_, q.a_clip, gx, q.a_spec);
    q.a_clip_grad = s.grad_c;
    return std::move(s.grad_x);
  }
  return gx;
}

void Conv2D::params(std::vector<ParamRef>& out) {
  out.push_back({label + ".w", &w, &gw, true});
}

Tensor ReLU::forward(const Tensor& x, const ForwardCtx&) {
  return relu_with_mask(x, mask_);
}

Tensor ReLU::backward(const Tensor& gy, BackwardCtx&) { return masked(gy, mask_); }

BatchNorm2d::BatchNorm2d(int channels) : channels_(channels) {
  gamma = Tensor({channels});
  gamma.fill(1.0);
  beta = Tensor({channels});
  ggamma = Tensor({channels});
  gbeta = Tensor({channels});
  running_mean = Tensor({channels});
  running_var = Tensor({channels});
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, const ForwardCtx& ctx) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor y(x.shape);
  xhat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(c), 0.0);
  const double m = static_cast<double>(n) * h * w;
  const double* px = x.ptr();
  double* py = y.ptr();
  double* pxh = xhat_.ptr();

  const bool use_batch = ctx.training;
  par::parallel_for(c, [&, this](std::int64_t ch) {
    double mu, var;
    if (use_batch) {
      double sum = 0.0;
      for (int nb = 0; nb < n; ++nb)
        for (int i = 0; i < h * w; ++i)
          sum += px[(static_cast<std::int64_t>(nb) * c + ch) * h * w + i];
      mu = sum / m;
      double sq = 0.0;
      for (int nb = 0; nb < n; ++nb)
        for (int i = 0; i < h * w; ++i) {
          const double d = px[(static_cast<std::int64_t>(nb) * c + ch) * h * w + i] - mu;
          sq += d * d;
        }
      var = sq / m;
      if (ctx.training && !ctx.calibrate) {
        running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu;
        running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var;
      }
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std_[static_cast<std::size_t>(ch)] = istd;
    const double g = gamma[ch], bt = beta[ch];
    for (int nb = 0; nb < n; ++nb)
      for (int i = 0; i < h * w; ++i) {
        const std::int64_t idx = (static_cast<std::int64_t>(nb) * c + ch) * h * w + i;
        const double xh = (px[idx] - mu) * istd;
        pxh[idx] = xh;
        py[idx] = g * xh + bt;
      }
  });
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy, BackwardCtx&) {
  const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
  Tensor gx(gy.shape);
  const double m = static_cast<double>(n) * h * w;
  const double* pg = gy.ptr();
  const double* pxh = xhat_.ptr();
  double* pgx = gx.ptr();

  par::parallel_for(c, [&, this](std::int64_t ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int nb = 0; nb < n; ++nb)
      for (int i = 0; i < h * w; ++i) {
        const std::int64_t idx = (static_cast<std::int64_t>(nb) * c + ch) * h * w + i;
        sum_g += pg[idx];
        sum_gx += pg[idx] * pxh[idx];
      }
    ggamma[ch] = sum_gx;
    gbeta[ch] = sum_g;
    const double k = gamma[ch] * inv_std_[static_cast<std::size_t>(ch)];
    for (int nb = 0; nb < n; ++nb)
      for (int i = 0; i < h * w; ++i) {
        const std::int64_t idx = (static_cast<std::int64_t>(nb) * c + ch) * h * w + i;
        pgx[idx] = k * (pg[idx] - sum_g / m - pxh[idx] * sum_gx / m);
      }
  });
  return gx;
}

void BatchNorm2d::params(std::vector<ParamRef>& out) {
  out.push_back({label + ".gamma", &gamma, &ggamma, false});
  out.push_back({label + ".beta", &beta, &gbeta, false});
}

Tensor GlobalAvgPool::forward(const Tensor& x, const ForwardCtx&) {
  h_ = x.dim(2);
  w_ = x.dim(3);
  Tensor y;
  global_avgpool_forward(x, y);
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy, BackwardCtx&) {
  Tensor gx;
  global_avgpool_backward(gy, h_, w_, gx);
  return gx;
}

BasicBlock::BasicBlock(int c_in, int c_out, int stride)
    : proj_(stride != 1 || c_in != c_out) {
  conv1 = std::make_unique<Conv2D>(c_in, c_out, 3, stride, 1);
  bn1 = std::make_unique<BatchNorm2d>(c_out);
  conv2 = std::make_unique<Conv2D>(c_out, c_out, 3, 1, 1);
  bn2 = std::make_unique<BatchNorm2d>(c_out);
  if (proj_) {
    sc_conv = std::make_unique<Conv2D>(c_in, c_out, 1, stride, 0);
    sc_bn = std::make_unique<BatchNorm2d>(c_out);
  }
}

Tensor BasicBlock::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor t = conv1->forward(x, ctx);
  t = bn1->forward(t, ctx);
  t = relu_with_mask(t, mask1_);
  t = conv2->forward(t, ctx);
  t = bn2->forward(t, ctx);
  if (proj_) {
    Tensor s = sc_conv->forward(x, ctx);
    s = sc_bn->forward(s, ctx);
    add_inplace(t, s);
  } else {
    add_inplace(t, x);
  }
  return relu_with_mask(t, mask2_);
}

Tensor BasicBlock::backward(const Tensor& gy, BackwardCtx& ctx) {
  const Tensor g_add = masked(gy, mask2_);
  Tensor g = bn2->backward(g_add, ctx);
  g = conv2->backward(g, ctx);
  g = masked(g, mask1_);
  g = bn1->backward(g, ctx);
  Tensor gx = conv1->backward(g, ctx);
  if (proj_) {
    Tensor gs = sc_bn->backward(g_add, ctx);
    gs = sc_conv->backward(gs, ctx);
    add_inplace(gx, gs);
  } else {
    add_inplace(gx, g_add);
  }
  return gx;
}

void BasicBlock::params(std::vector<ParamRef>& out) {
  conv1->params(out);
  bn1->params(out);
  conv2->params(out);
  bn2->params(out);
  if (proj_) {
    sc_conv->params(out);
    sc_bn->params(out);
  }
}

void BasicBlock::trainables(std::vector<TrainableLayer*>& out) {
  conv1->trainables(out);
  conv2->trainables(out);
  if (proj_) sc_conv->trainables(out);
}

void BasicBlock::state_tensors(std::vector<Tensor*>& out) {
  bn1->state_tensors(out);
  bn2->state_tensors(out);
  if (proj_) sc_bn->state_tensors(out);
}

double softmax_xent(const Tensor& logits, const std::vector<std::uint8_t>& labels,
                    Tensor& grad, double* acc) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::size_t>(n) != labels.size())
    throw std::invalid_argument("softmax_xent: label count mismatch");
  if (grad.shape != logits.shape) grad = Tensor(logits.shape);

  double loss = 0.0;
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* z = logits.ptr() + static_cast<std::int64_t>(i) * k;
    double* g = grad.ptr() + static_cast<std::int64_t>(i) * k;
    double mx = z[0];
    int arg = 0;
    for (int j = 1; j < k; ++j)
      if (z[j] > mx) {
        mx = z[j];
        arg = j;
      }
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - mx);
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::invalid_argument("softmax_xent: label out of range");
    loss += std::log(denom) - (z[y] - mx);
    for (int j = 0; j < k; ++j)
      g[j] = (std::exp(z[j] - mx) / denom - (j == y ? 1.0 : 0.0)) / n;
    if (arg == y) ++correct;
  }
  if (acc) *acc = static_cast<double>(correct) / n;
  return loss / n;
}

double abs_percentile_floored(const Tensor& x, double p) {
  if (x.numel() == 0) throw std::invalid_argument("abs_percentile: empty tensor");
  std::vector<double> mags(x.data.size());
  for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(x.data[i]);
  std::sort(mags.begin(), mags.end());
  std::int64_t idx = static_cast<std::int64_t>(
      std::ceil(p * static_cast<double>(mags.size()) - 1e-9)) - 1;
  idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(mags.size()) - 1);
  return std::max(mags[static_cast<std::size_t>(idx)], 1e-3);
}

}  // namespace fxptrain
