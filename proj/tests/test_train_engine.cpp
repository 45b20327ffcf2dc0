#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "fxptrain/checkpoint.hpp"
#include "fxptrain/errors.hpp"
#include "fxptrain/layers.hpp"
#include "fxptrain/model.hpp"
#include "fxptrain/train.hpp"

using namespace fxptrain;

namespace {

// Assembles a Model from a hand-built layer stack (full-precision posture
// unless the test flips flags afterwards).
Model stack_model(std::vector<std::unique_ptr<Layer>> layers) {
  Model m;
  m.arch = "custom";
  m.layers = std::move(layers);
  for (auto& l : m.layers) l->trainables(m.trainables);
  for (std::size_t i = 0; i < m.trainables.size(); ++i)
    m.trainables[i]->layer_id = static_cast<int>(i);
  return m;
}

void randomize_params(Model& m, std::uint64_t seed, double stddev = 0.5) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, stddev);
  for (const ParamRef& p : m.params())
    for (double& v : p.value->data) v = d(gen);
}

double loss_of(Model& m, const Tensor& x, const std::vector<std::uint8_t>& labels) {
  ForwardCtx ctx;
  ctx.training = true;
  const Tensor logits = m.forward(x, ctx);
  Tensor grad;
  return softmax_xent(logits, labels, grad);
}

// Analytic gradients for every parameter and the input, with the plain
// full-precision backward path.
Tensor analytic_grads(Model& m, const Tensor& x, const std::vector<std::uint8_t>& labels) {
  m.zero_grads();
  ForwardCtx fctx;
  fctx.training = true;
  const Tensor logits = m.forward(x, fctx);
  Tensor loss_grad;
  softmax_xent(logits, labels, loss_grad);
  BackwardCtx bctx;
  bctx.quantize = false;
  bctx.adapt_gamma = false;
  return m.backward(loss_grad, bctx);
}

// Central finite differences at eps = 1e-4 against every analytic gradient
// entry, parameters and input both.
void check_gradients(Model& m, Tensor x, const std::vector<std::uint8_t>& labels) {
  const double eps = 1e-4;
  const Tensor gx = analytic_grads(m, x, labels);

  auto fd_check = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + eps;
    const double lp = loss_of(m, x, labels);
    *slot = saved - eps;
    const double lm = loss_of(m, x, labels);
    *slot = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(analytic)});
    CHECK(std::abs(fd - analytic) / scale < 1e-4);
  };

  for (const ParamRef& p : m.params()) {
    REQUIRE(p.value->numel() == p.grad->numel());
    for (std::int64_t i = 0; i < p.value->numel(); ++i)
      fd_check(&(*p.value)[i], (*p.grad)[i]);
  }
  REQUIRE(gx.numel() == x.numel());
  for (std::int64_t i = 0; i < x.numel(); ++i) fd_check(&x[i], gx[i]);
}

std::vector<std::uint8_t> cycle_labels(int n, int classes) {
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] =
      static_cast<std::uint8_t>(i % classes);
  return y;
}

RunConfig synth_config(std::uint64_t seed) {
  RunConfig cfg;
  cfg.arch = "mlp";
  cfg.dataset = "synthetic-gauss";
  cfg.synth = {256, 64, 16, 4, 0.25};
  cfg.mlp_hidden = {16, 16};
  cfg.batch_size = 16;
  cfg.seed = seed;
  cfg.seed_set = true;
  return cfg;
}

}  // namespace

TEST_CASE("gradient check: dense stack (mlp)") {
  ModelConfig mc;
  mc.w_bits = mc.a_bits = mc.g_bits = 0;
  mc.mlp_hidden = {5, 5};
  mc.n_classes = 3;
  Model m = build_model("mlp", 0, 0, 0, 6, mc, 17);

  std::mt19937_64 gen(3);
  Tensor x = randn({4, 6}, gen);
  check_gradients(m, x, cycle_labels(4, 3));
}

TEST_CASE("gradient check: conv / batchnorm / relu / gap stack") {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Conv2D>(2, 3, 3, 2, 1));
  ls.push_back(std::make_unique<BatchNorm2d>(3));
  ls.push_back(std::make_unique<ReLU>());
  ls.push_back(std::make_unique<Conv2D>(3, 4, 1, 1, 0));
  ls.push_back(std::make_unique<GlobalAvgPool>());
  ls.push_back(std::make_unique<Dense>(4, 3));
  Model m = stack_model(std::move(ls));
  randomize_params(m, 29);

  std::mt19937_64 gen(5);
  Tensor x = randn({2, 2, 6, 6}, gen);
  check_gradients(m, x, cycle_labels(2, 3));
}

TEST_CASE("gradient check: residual blocks, projection and identity") {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<BasicBlock>(2, 3, 2));  // projection skip
  ls.push_back(std::make_unique<BasicBlock>(3, 3, 1));  // identity skip
  ls.push_back(std::make_unique<GlobalAvgPool>());
  ls.push_back(std::make_unique<Dense>(3, 2));
  Model m = stack_model(std::move(ls));
  randomize_params(m, 41);

  std::mt19937_64 gen(7);
  Tensor x = randn({2, 2, 4, 4}, gen);
  check_gradients(m, x, cycle_labels(2, 2));
}

TEST_CASE("all-zero weights give zero logits on a bias-free net") {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Conv2D>(2, 3, 3, 1, 1));
  ls.push_back(std::make_unique<GlobalAvgPool>());
  Model m = stack_model(std::move(ls));  // conv weights start at zero

  std::mt19937_64 gen(9);
  const Tensor x = randn({2, 2, 5, 5}, gen);
  ForwardCtx ctx;
  const Tensor logits = m.forward(x, ctx);
  for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("fp model matches a hand-rolled dense forward") {
  ModelConfig mc;
  mc.w_bits = mc.a_bits = mc.g_bits = 0;
  mc.mlp_hidden = {7, 7};
  mc.n_classes = 4;
  Model m = build_model("mlp", 0, 0, 0, 5, mc, 23);

  std::mt19937_64 gen(11);
  const Tensor x = randn({3, 5}, gen);
  ForwardCtx ctx;
  ctx.training = false;
  const Tensor logits = m.forward(x, ctx);

  // Oracle: explicit affine/relu chain over the same weights.
  auto* d0 = static_cast<Dense*>(m.trainables[0]);
  auto* d1 = static_cast<Dense*>(m.trainables[1]);
  auto* d2 = static_cast<Dense*>(m.trainables[2]);
  auto affine = [](const Tensor& in, const Dense& d, bool relu) {
    Tensor out({in.dim(0), d.out_dim});
    for (int r = 0; r < in.dim(0); ++r)
      for (int c = 0; c < d.out_dim; ++c) {
        double s = d.b[c];
        for (int k = 0; k < d.in_dim; ++k)
          s += in[r * d.in_dim + k] * d.w[k * d.out_dim + c];
        out[r * d.out_dim + c] = relu ? std::max(0.0, s) : s;
      }
    return out;
  };
  const Tensor want = affine(affine(affine(x, *d0, true), *d1, true), *d2, false);

  REQUIRE(logits.numel() == want.numel());
  for (std::int64_t i = 0; i < logits.numel(); ++i)
    CHECK(logits[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("8-bit forward stays within 2% of full precision") {
  ModelConfig fp;
  fp.w_bits = fp.a_bits = fp.g_bits = 0;
  fp.mlp_hidden = {32, 32};
  fp.n_classes = 10;
  ModelConfig q8 = fp;
  q8.w_bits = q8.a_bits = 8;

  Model mf = build_model("mlp", 0, 0, 0, 24, fp, 31);
  Model mq = build_model("mlp", 0, 0, 0, 24, q8, 31);  // same seed, same weights

  std::mt19937_64 gen(13);
  const Tensor x = rand_uniform({16, 24}, gen, 0.0, 1.0);
  init_clip_values(mq, x);

  ForwardCtx ctx;
  ctx.training = false;
  const Tensor yf = mf.forward(x, ctx);
  const Tensor yq = mq.forward(x, ctx);

  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < yf.numel(); ++i) {
    num += (yf[i] - yq[i]) * (yf[i] - yq[i]);
    den += yf[i] * yf[i];
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("16-bit nearest quantization is transparent over a short run") {
  RunConfig cfg_fp = synth_config(37);
  cfg_fp.bits = {0, 0, 0};
  RunConfig cfg_q = synth_config(37);
  cfg_q.bits = {16, 16, 16};  // test-only width, far past any step size
  cfg_q.policy = "minmax";    // gamma pinned at 1

  Trainer tf(cfg_fp), tq(cfg_q);
  tq.calibrate_clips();
  // Transparency isolates the rounding grid: nearest rounding on the
  // gradients and clips opened well past every tensor's range.
  for (TrainableLayer* t : tq.model().trainables) {
    t->q.g_spec.rounding = QRounding::kNearest;
    t->q.w_clip.value = 4.0 * std::max(max_abs(t->w), 1e-3);
    t->q.a_clip.value *= 8.0;
  }

  Tensor x;
  std::vector<std::uint8_t> y;
  for (int it = 0; it < 48; ++it) {
    const int epoch = it / tf.batches_per_epoch();
    REQUIRE(tf.batch_at(epoch, it % tf.batches_per_epoch(), x, y));
    tf.step(x, y, false, nullptr);
    tq.step(x, y, false, nullptr);
  }

  double num = 0.0, den = 0.0;
  const auto pf = tf.model().params(), pq = tq.model().params();
  REQUIRE(pf.size() == pq.size());
  for (std::size_t i = 0; i < pf.size(); ++i)
    for (std::int64_t j = 0; j < pf[i].value->numel(); ++j) {
      const double a = (*pf[i].value)[j], b = (*pq[i].value)[j];
      num += (a - b) * (a - b);
      den += a * a;
    }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("zero loss gradient: zero grads everywhere, gamma untouched") {
  ModelConfig mc;  // 4/4/4
  mc.mlp_hidden = {8, 8};
  mc.n_classes = 3;
  Model m = build_model("mlp", 0, 0, 0, 6, mc, 43);

  std::mt19937_64 gen(15);
  const Tensor x = randn({4, 6}, gen);
  ForwardCtx fctx;
  m.forward(x, fctx);

  const double gamma_before = m.trainables[1]->q.gstate.gamma;
  m.zero_grads();
  Tensor zero_grad({4, 3});
  BackwardCtx bctx;
  std::vector<LayerTraceRow> rows;
  bctx.rows = &rows;
  m.backward(zero_grad, bctx);

  for (const ParamRef& p : m.params())
    for (double v : p.grad->data) CHECK(v == 0.0);
  CHECK(m.trainables[1]->q.gstate.gamma == gamma_before);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].g_max == 0.0);
}

TEST_CASE("loss decreases over 200 full-precision steps") {
  RunConfig cfg = synth_config(47);
  cfg.bits = {0, 0, 0};
  cfg.synth.noise = 0.1;
  cfg.lr = 0.1;
  Trainer t(cfg);

  Tensor x;
  std::vector<std::uint8_t> y;
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 200; ++it) {
    const int epoch = it / t.batches_per_epoch();
    REQUIRE(t.batch_at(epoch, it % t.batches_per_epoch(), x, y));
    const double loss = t.step(x, y, false, nullptr);
    if (it < 20) first += loss;
    if (it >= 180) last += loss;
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("same seed, same losses, bit for bit") {
  const RunConfig cfg = synth_config(53);  // quantized 4/4/4, stochastic rounding
  Trainer a(cfg), b(cfg);
  a.calibrate_clips();
  b.calibrate_clips();

  Tensor x;
  std::vector<std::uint8_t> y;
  for (int it = 0; it < 30; ++it) {
    const int epoch = it / a.batches_per_epoch();
    REQUIRE(a.batch_at(epoch, it % a.batches_per_epoch(), x, y));
    const double la = a.step(x, y, it % 10 == 0, nullptr);
    const double lb = b.step(x, y, it % 10 == 0, nullptr);
    CHECK(la == lb);
  }
}

TEST_CASE("one telemetry row per quantized layer per step") {
  ModelConfig mc;  // 4/4/4
  mc.n_classes = 10;
  Model m = build_model("smallcnn", 1, 8, 8, 0, mc, 59);
  const int quantized = m.quantized_layer_count();
  CHECK(quantized == static_cast<int>(m.trainables.size()) - 2);

  std::mt19937_64 gen(17);
  const Tensor x = rand_uniform({2, 1, 8, 8}, gen, 0.0, 1.0);
  init_clip_values(m, x);
  ForwardCtx fctx;
  const Tensor logits = m.forward(x, fctx);
  Tensor lg;
  softmax_xent(logits, cycle_labels(2, 10), lg);

  std::vector<LayerTraceRow> rows;
  BackwardCtx bctx;
  bctx.full_metrics = true;
  bctx.rows = &rows;
  m.backward(lg, bctx);

  REQUIRE(static_cast<int>(rows.size()) == quantized);
  for (const LayerTraceRow& r : rows) {
    CHECK(r.full);
    CHECK(r.layer_id > 0);
    CHECK(r.layer_id < static_cast<int>(m.trainables.size()) - 1);
  }
}

TEST_CASE("build_model: architecture shapes and exemptions") {
  ModelConfig mc;
  mc.n_classes = 10;

  SUBCASE("resnet20-like: 21 trainable, 19 quantized") {
    Model m = build_model("resnet20", 3, 32, 32, 0, mc, 61);
    CHECK(m.trainables.size() == 21);
    CHECK(m.quantized_layer_count() == 19);
    CHECK_FALSE(m.trainables.front()->q.fwd_w);
    CHECK_FALSE(m.trainables.front()->q.bwd_g);
    CHECK_FALSE(m.trainables.back()->q.fwd_w);
    CHECK_FALSE(m.trainables.back()->q.bwd_g);
  }
  SUBCASE("mlp 784-128-128-10: one quantized hidden layer") {
    mc.mlp_hidden = {128, 128};
    Model m = build_model("mlp", 0, 0, 0, 784, mc, 61);
    CHECK(m.trainables.size() == 3);
    CHECK(m.quantized_layer_count() == 1);
    CHECK(static_cast<Dense*>(m.trainables[0])->in_dim == 784);
    CHECK(static_cast<Dense*>(m.trainables[2])->out_dim == 10);
  }
  SUBCASE("mlp hidden list sets depth") {
    mc.mlp_hidden = {64, 32, 16};
    Model m = build_model("mlp", 0, 0, 0, 784, mc, 61);
    CHECK(m.trainables.size() == 4);
    CHECK(m.quantized_layer_count() == 2);
    CHECK(static_cast<Dense*>(m.trainables[1])->in_dim == 64);
    CHECK(static_cast<Dense*>(m.trainables[3])->in_dim == 16);
  }
  SUBCASE("smallcnn on zero input: logits equal the head bias") {
    Model m = build_model("smallcnn", 3, 16, 16, 0, mc, 61);
    Tensor x({2, 3, 16, 16});
    ForwardCtx ctx;
    ctx.training = false;
    const Tensor logits = m.forward(x, ctx);
    const Tensor& bias = static_cast<Dense*>(m.trainables.back())->b;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 10; ++c) CHECK(logits[r * 10 + c] == bias[c]);
  }
  SUBCASE("unknown arch is rejected") {
    CHECK_THROWS_AS(build_model("vgg", 3, 32, 32, 0, mc, 61), ConfigError);
  }
}

TEST_CASE("clip calibration") {
  SUBCASE("uniform weights in [-1,1] put w_clip near 0.999") {
    std::vector<std::unique_ptr<Layer>> ls;
    ls.push_back(std::make_unique<Dense>(200, 50));
    Model m = stack_model(std::move(ls));
    auto* d = static_cast<Dense*>(m.trainables[0]);
    d->q.fwd_w = true;
    std::mt19937_64 gen(19);
    d->w = rand_uniform({200, 50}, gen, -1.0, 1.0);

    const Tensor batch = rand_uniform({2, 200}, gen, 0.0, 1.0);
    init_clip_values(m, batch);
    CHECK(d->q.w_clip.value > 0.985);
    CHECK(d->q.w_clip.value <= 1.0);
  }
  SUBCASE("all-equal layer input pins a_clip to that value") {
    std::vector<std::unique_ptr<Layer>> ls;
    ls.push_back(std::make_unique<Dense>(4, 3));
    Model m = stack_model(std::move(ls));
    auto* d = static_cast<Dense*>(m.trainables[0]);
    d->q.fwd_a = true;
    Tensor batch({2, 4});
    batch.fill(0.37);
    init_clip_values(m, batch);
    CHECK(d->q.a_clip.value == 0.37);
  }
  SUBCASE("dead input hits the 1e-3 floor") {
    std::vector<std::unique_ptr<Layer>> ls;
    ls.push_back(std::make_unique<Dense>(4, 3));
    Model m = stack_model(std::move(ls));
    auto* d = static_cast<Dense*>(m.trainables[0]);
    d->q.fwd_a = true;
    Tensor batch({2, 4});
    init_clip_values(m, batch);
    CHECK(d->q.a_clip.value == 1e-3);
  }
  SUBCASE("empty calibration batch is rejected") {
    ModelConfig mc;
    Model m = build_model("mlp", 0, 0, 0, 4, mc, 67);
    CHECK_THROWS_AS(init_clip_values(m, Tensor({0, 4})), std::invalid_argument);
  }
}

TEST_CASE("exempt layers never touch the quantizer") {
  RunConfig cfg = synth_config(71);
  Trainer t(cfg);
  t.calibrate_clips();

  Tensor x;
  std::vector<std::uint8_t> y;
  for (int it = 0; it < 10; ++it) {
    REQUIRE(t.batch_at(0, it % t.batches_per_epoch(), x, y));
    t.step(x, y, false, nullptr);
  }
  const auto& first = *t.model().trainables.front();
  const auto& last = *t.model().trainables.back();
  CHECK(first.q.w_quant_calls == 0);
  CHECK(first.q.a_quant_calls == 0);
  CHECK(first.q.g_quant_calls == 0);
  CHECK(last.q.w_quant_calls == 0);
  CHECK(last.q.a_quant_calls == 0);
  CHECK(last.q.g_quant_calls == 0);

  const auto& mid = *t.model().trainables[1];
  CHECK(mid.q.w_quant_calls > 0);
  CHECK(mid.q.a_quant_calls > 0);
  CHECK(mid.q.g_quant_calls == 10);
}

TEST_CASE("checkpoint round trip continues bit-identically") {
  const RunConfig cfg = synth_config(73);
  Trainer a(cfg);
  a.calibrate_clips();

  Tensor x;
  std::vector<std::uint8_t> y;
  for (int it = 0; it < 12; ++it) {
    REQUIRE(a.batch_at(0, it, x, y));
    a.step(x, y, false, nullptr);
  }
  const std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint(path, a.model(), a.sgd(), a.adam(), a.iter(), 0);

  Trainer b(cfg);
  const ResumePoint rp = load_checkpoint(path, b.model(), b.sgd(), b.adam());
  b.set_iter(rp.iter);
  CHECK(rp.iter == 12);

  for (int it = 12; it < 20; ++it) {
    const int epoch = it / a.batches_per_epoch();
    REQUIRE(a.batch_at(epoch, it % a.batches_per_epoch(), x, y));
    const double la = a.step(x, y, false, nullptr);
    const double lb = b.step(x, y, false, nullptr);
    CHECK(la == lb);
  }
  std::remove(path.c_str());
}

TEST_CASE("non-finite values abort with a numeric error") {
  ModelConfig mc;
  mc.mlp_hidden = {4, 4};
  mc.n_classes = 2;
  Model m = build_model("mlp", 0, 0, 0, 3, mc, 79);

  Tensor bad({2, 3});
  bad[0] = std::nan("");
  ForwardCtx ctx;
  CHECK_THROWS_AS(m.forward(bad, ctx), NumericError);

  Tensor ok({2, 3});
  ok.fill(0.5);
  m.forward(ok, ctx);
  Tensor bad_grad({2, 2});
  bad_grad[1] = std::numeric_limits<double>::infinity();
  BackwardCtx bctx;
  CHECK_THROWS_AS(m.backward(bad_grad, bctx), NumericError);
}
