#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fxptrain/layers.hpp"

namespace fxptrain {

// Quantization posture and controller hyperparameters, fixed at build time.
// Bit-width 0 is the "fp" sentinel: that tensor class is left unquantized.
struct ModelConfig {
  int w_bits = 4, a_bits = 4, g_bits = 4;
  IntervalPolicy policy = IntervalPolicy::ours();
  double tau = 10.0;
  double beta = 1e-3;
  bool quantize_weight_grads = false;
  std::vector<int> mlp_hidden = {128, 128};
  int n_classes = 10;
};

struct Model {
  std::string arch;
  int in_c = 0, in_h = 0, in_w = 0;  // image input (zero when flat)
  int in_dim = 0;                    // flat input width (MLP)
  int n_classes = 10;
  std::vector<std::unique_ptr<Layer>> layers;
  std::vector<TrainableLayer*> trainables;  // forward order, owned by layers

  bool image_input() const { return in_c > 0; }

  // Runs the stack, checking for non-finite activations after each layer.
  Tensor forward(const Tensor& x, const ForwardCtx& ctx);
  Tensor backward(const Tensor& loss_grad, BackwardCtx& ctx);

  std::vector<ParamRef> params();
  std::vector<ClipRef> clips();
  void zero_grads();

  int quantized_layer_count() const;
  const TrainableLayer* trainable(int layer_id) const { return trainables[static_cast<std::size_t>(layer_id)]; }
};

// arch: "mlp" (flat input), "smallcnn" or "resnet20" (image input). The first
// and last trainable layers are always left unquantized.
Model build_model(const std::string& arch, int in_c, int in_h, int in_w, int in_dim,
                  const ModelConfig& mc, std::uint64_t seed);

// w_clip <- 99.9th percentile of |w|; a_clip <- same percentile of the layer
// input observed on one calibration batch; both floored at 1e-3.
void init_clip_values(Model& m, const Tensor& calibration_batch);

}  // namespace fxptrain
