#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fxptrain/grad_metrics.hpp"
#include "fxptrain/interval_controller.hpp"
#include "fxptrain/kernels.hpp"
#include "fxptrain/quantizer.hpp"
#include "fxptrain/tensor.hpp"

namespace fxptrain {

struct ForwardCtx {
  bool training = true;
  // Calibration pass: compute with raw tensors and set a_clip from the
  // observed input percentile instead of quantizing.
  bool calibrate = false;
};

// One telemetry row per quantized layer per step. gamma is the factor the
// step actually quantized with; the controller update lands afterwards.
struct LayerTraceRow {
  int layer_id = -1;
  double gamma = 1.0;
  double g_max = 0.0;
  double r_out = 0.0;
  bool full = false;       // expensive error metrics present
  GradErrorReport rep;
};

struct BackwardCtx {
  std::uint64_t seed = 0;
  std::int64_t iter = 0;
  bool quantize = true;      // false => plain full-precision backward
  bool adapt_gamma = true;
  bool full_metrics = false; // collect E(G)/E(G_L)/ULG this iteration
  std::vector<LayerTraceRow>* rows = nullptr;
};

// Per-layer quantization posture. Exempt layers keep all three flags false
// and never touch the quantizer (the *_quant_calls counters prove it).
struct LayerQuant {
  bool fwd_w = false, fwd_a = false, bwd_g = false;
  QuantizerSpec w_spec{4, QMode::kSymmetric, QRounding::kNearest};
  QuantizerSpec a_spec{4, QMode::kHalfNormal, QRounding::kNearest};
  QuantizerSpec g_spec{4, QMode::kSymmetric, QRounding::kStochastic};
  ClipParam w_clip{1.0, true};
  ClipParam a_clip{1.0, true};
  double w_clip_grad = 0.0, a_clip_grad = 0.0;
  GradClipState gstate;
  IntervalPolicy policy = IntervalPolicy::ours();
  double tau = 10.0;                  // alpha = tau / N(G), set per step
  bool quantize_weight_grads = false; // ablation knob
  std::int64_t w_quant_calls = 0, a_quant_calls = 0, g_quant_calls = 0;
};

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool decay = true;
};

struct ClipRef {
  std::string name;
  ClipParam* clip = nullptr;
  double* grad = nullptr;
};

class TrainableLayer;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, const ForwardCtx& ctx) = 0;
  virtual Tensor backward(const Tensor& gy, BackwardCtx& ctx) = 0;
  virtual void params(std::vector<ParamRef>&) {}
  virtual void trainables(std::vector<TrainableLayer*>&) {}
  // Non-learned tensors that still belong in a checkpoint (BN running stats).
  virtual void state_tensors(std::vector<Tensor*>&) {}
};

class TrainableLayer : public Layer {
 public:
  std::string label;
  int layer_id = -1;
  Tensor w, gw;
  LayerQuant q;

  void trainables(std::vector<TrainableLayer*>& out) override { out.push_back(this); }
  void clips(std::vector<ClipRef>& out);

 protected:
  // Backward entry point for the incoming activation gradient: telemetry on
  // the raw tensor, stochastic quantization at c = gamma*g_max, then the
  // policy update. Returns gy untouched when gradient quantization is off.
  Tensor filter_grad(const Tensor& gy, BackwardCtx& ctx);
  Tensor used_weight(const ForwardCtx& ctx);
  Tensor used_input(const Tensor& x, const ForwardCtx& ctx);
  void finish_weight_grad(const Tensor& grad_on_used, BackwardCtx& ctx);
};

class Dense : public TrainableLayer {
 public:
  Dense(int in, int out);
  std::string kind() const override { return "Dense"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;
  void params(std::vector<ParamRef>& out) override;

  Tensor b, gb;
  int in_dim, out_dim;

 private:
  Tensor x_in_, a_used_, w_used_;
};

class Conv2D : public TrainableLayer {
 public:
  // 3x3 or 1x1 kernels, no bias (a norm layer or the loss follows).
  Conv2D(int c_in, int c_out, int ksize, int stride, int pad);
  std::string kind() const override { return "Conv2D"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;
  void params(std::vector<ParamRef>& out) override;

  Conv2dShape shape;  // n filled in at forward time

 private:
  Tensor x_in_, a_used_, w_used_;
};

class ReLU : public Layer {
 public:
  std::string kind() const override { return "ReLU"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;

 private:
  Tensor mask_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels);
  std::string kind() const override { return "BatchNorm2d"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;
  void params(std::vector<ParamRef>& out) override;
  void state_tensors(std::vector<Tensor*>& out) override {
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }

  std::string label;
  Tensor gamma, beta, ggamma, gbeta;
  Tensor running_mean, running_var;
  double momentum = 0.1, eps = 1e-5;

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;
  int channels_;
};

class GlobalAvgPool : public Layer {
 public:
  std::string kind() const override { return "GlobalAvgPool"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;

 private:
  int h_ = 0, w_ = 0;
};

// conv-bn-relu-conv-bn + skip, relu after the add. The projection variant
// adds a 1x1 conv (+bn) on the skip path.
class BasicBlock : public Layer {
 public:
  BasicBlock(int c_in, int c_out, int stride);
  std::string kind() const override { return "BasicBlock"; }
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& gy, BackwardCtx& ctx) override;
  void params(std::vector<ParamRef>& out) override;
  void trainables(std::vector<TrainableLayer*>& out) override;
  void state_tensors(std::vector<Tensor*>& out) override;

  std::unique_ptr<Conv2D> conv1, conv2, sc_conv;
  std::unique_ptr<BatchNorm2d> bn1, bn2, sc_bn;

 private:
  Tensor mask1_, mask2_;
  bool proj_;
};

// Mean cross-entropy over the batch; writes dL/dlogits into grad. When acc is
// non-null it receives the batch top-1 accuracy.
double softmax_xent(const Tensor& logits, const std::vector<std::uint8_t>& labels,
                    Tensor& grad, double* acc = nullptr);

// Nearest-rank percentile of |x| (p in (0,1]), with a 1e-3 floor.
double abs_percentile_floored(const Tensor& x, double p);

}  // namespace fxptrain
