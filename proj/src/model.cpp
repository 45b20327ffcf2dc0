#include "fxptrain/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fxptrain/errors.hpp"
#include "fxptrain/rng.hpp"

namespace fxptrain {

namespace {

void init_weights(Model& m, std::uint64_t seed) {
  std::mt19937_64 gen(substream(seed, 0x57, 0, 0));
  for (TrainableLayer* t : m.trainables) {
    double fan_in;
    if (t->kind() == "Dense") {
      fan_in = static_cast<double>(static_cast<Dense*>(t)->in_dim);
    } else {
      const auto& s = static_cast<Conv2D*>(t)->shape;
      fan_in = static_cast<double>(s.c_in) * s.kh * s.kw;
    }
    const double stddev = std::sqrt(2.0 / fan_in);
    t->w = randn(t->w.shape, gen, stddev);
  }
}

void apply_quant_posture(Model& m, const ModelConfig& mc) {
  const int n = static_cast<int>(m.trainables.size());
  for (int i = 0; i < n; ++i) {
    TrainableLayer* t = m.trainables[static_cast<std::size_t>(i)];
    t->layer_id = i;
    const bool exempt = (i == 0 || i == n - 1);
    t->q.fwd_w = !exempt && mc.w_bits > 0;
    t->q.fwd_a = !exempt && mc.a_bits > 0;
    t->q.bwd_g = !exempt && mc.g_bits > 0;
    if (mc.w_bits > 0) t->q.w_spec.bits = mc.w_bits;
    if (mc.a_bits > 0) t->q.a_spec.bits = mc.a_bits;
    if (mc.g_bits > 0) {
      t->q.g_spec.bits = mc.g_bits;
      t->q.gstate.bits = mc.g_bits;
    }
    t->q.gstate.beta = mc.beta;
    t->q.policy = mc.policy;
    t->q.tau = mc.tau;
    t->q.quantize_weight_grads = mc.quantize_weight_grads;
  }
}

void label_layers(Model& m) {
  int dense_i = 0, conv_i = 0;
  for (TrainableLayer* t : m.trainables) {
    if (t->kind() == "Dense")
      t->label = "dense" + std::to_string(dense_i++);
    else
      t->label = "conv" + std::to_string(conv_i++);
  }
}

}  // namespace

Tensor Model::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor t = x;
  for (auto& layer : layers) {
    t = layer->forward(t, ctx);
    if (!t.all_finite())
      throw NumericError("non-finite activations after " + layer->kind());
  }
  return t;
}

Tensor Model::backward(const Tensor& loss_grad, BackwardCtx& ctx) {
  Tensor g = loss_grad;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    g = (*it)->backward(g, ctx);
    if (!g.all_finite())
      throw NumericError("non-finite gradients after " + (*it)->kind());
  }
  return g;
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (auto& layer : layers) layer->params(out);
  return out;
}

std::vector<ClipRef> Model::clips() {
  std::vector<ClipRef> out;
  for (TrainableLayer* t : trainables) t->clips(out);
  return out;
}

void Model::zero_grads() {
  for (ParamRef p : params()) p.grad->fill(0.0);
  for (ClipRef c : clips()) *c.grad = 0.0;
  for (TrainableLayer* t : trainables) {
    t->q.w_clip_grad = 0.0;
    t->q.a_clip_grad = 0.0;
  }
}

int Model::quantized_layer_count() const {
  int n = 0;
  for (const TrainableLayer* t : trainables)
    if (t->q.fwd_w || t->q.fwd_a || t->q.bwd_g) ++n;
  return n;
}

Model build_model(const std::string& arch, int in_c, int in_h, int in_w, int in_dim,
                  const ModelConfig& mc, std::uint64_t seed) {
  Model m;
  m.arch = arch;
  m.n_classes = mc.n_classes;

  if (arch == "mlp") {
    m.in_dim = in_dim;
    int prev = in_dim;
    for (int h : mc.mlp_hidden) {
      m.layers.push_back(std::make_unique<Dense>(prev, h));
      m.layers.push_back(std::make_unique<ReLU>());
      prev = h;
    }
    m.layers.push_back(std::make_unique<Dense>(prev, mc.n_classes));
  } else if (arch == "smallcnn") {
    m.in_c = in_c;
    m.in_h = in_h;
    m.in_w = in_w;
    m.layers.push_back(std::make_unique<Conv2D>(in_c, 8, 3, 1, 1));
    m.layers.push_back(std::make_unique<ReLU>());
    m.layers.push_back(std::make_unique<Conv2D>(8, 16, 3, 2, 1));
    m.layers.push_back(std::make_unique<ReLU>());
    m.layers.push_back(std::make_unique<Conv2D>(16, 16, 3, 2, 1));
    m.layers.push_back(std::make_unique<ReLU>());
    m.layers.push_back(std::make_unique<GlobalAvgPool>());
    m.layers.push_back(std::make_unique<Dense>(16, mc.n_classes));
  } else if (arch == "resnet20") {
    // Stem conv + 3 stages x 3 blocks + classifier. Stage widths 16/32/32:
    // only the first block of stage 2 changes shape, so exactly one
    // projection shortcut exists and the trainable-layer count is
    // 1 (stem) + 18 (block convs) + 1 (projection) + 1 (fc) = 21.
    m.in_c = in_c;
    m.in_h = in_h;
    m.in_w = in_w;
    m.layers.push_back(std::make_unique<Conv2D>(in_c, 16, 3, 1, 1));
    auto stem_bn = std::make_unique<BatchNorm2d>(16);
    stem_bn->label = "bn_stem";
    m.layers.push_back(std::move(stem_bn));
    m.layers.push_back(std::make_unique<ReLU>());
    const int widths[3] = {16, 32, 32};
    const int strides[3] = {1, 2, 1};
    int c_prev = 16;
    for (int stage = 0; stage < 3; ++stage) {
      for (int blk = 0; blk < 3; ++blk) {
        const int stride = blk == 0 ? strides[stage] : 1;
        auto block = std::make_unique<BasicBlock>(c_prev, widths[stage], stride);
        const std::string prefix =
            "s" + std::to_string(stage) + "b" + std::to_string(blk) + ".";
        block->bn1->label = prefix + "bn1";
        block->bn2->label = prefix + "bn2";
        if (block->sc_bn) block->sc_bn->label = prefix + "bn_sc";
        m.layers.push_back(std::move(block));
        c_prev = widths[stage];
      }
    }
    m.layers.push_back(std::make_unique<GlobalAvgPool>());
    m.layers.push_back(std::make_unique<Dense>(c_prev, mc.n_classes));
  } else {
    throw ConfigError("unknown arch: " + arch);
  }

  for (auto& layer : m.layers) layer->trainables(m.trainables);
  label_layers(m);
  apply_quant_posture(m, mc);
  init_weights(m, seed);
  return m;
}

void init_clip_values(Model& m, const Tensor& calibration_batch) {
  if (calibration_batch.numel() == 0)
    throw std::invalid_argument("init_clip_values: empty calibration batch");
  for (TrainableLayer* t : m.trainables)
    if (t->q.fwd_w) t->q.w_clip.value = abs_percentile_floored(t->w, 0.999);
  ForwardCtx ctx;
  ctx.training = true;
  ctx.calibrate = true;
  m.forward(calibration_batch, ctx);
}

}  // namespace fxptrain
