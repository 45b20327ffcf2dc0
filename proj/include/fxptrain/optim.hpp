#pragma once

#include <vector>

#include "fxptrain/layers.hpp"

namespace fxptrain {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Weight optimizer. Gradient accumulation and momentum state stay full
// precision regardless of the quantization posture.
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}
  void attach(std::vector<ParamRef> params);
  void step();

  SgdConfig cfg_;
  std::vector<ParamRef> params_;
  std::vector<Tensor> velocity_;
};

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Optimizer for the learnable clipping scalars. Keeps every clip at or above
// 1e-3 so the c > 0 invariant survives aggressive updates.
class AdamScalars {
 public:
  explicit AdamScalars(AdamConfig cfg) : cfg_(cfg) {}
  void attach(std::vector<ClipRef> clips);
  void step();

  AdamConfig cfg_;
  std::vector<ClipRef> clips_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace fxptrain
