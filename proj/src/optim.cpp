#include "fxptrain/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fxptrain/parallel.hpp"

namespace fxptrain {

void Sgd::attach(std::vector<ParamRef> params) {
  params_ = std::move(params);
  velocity_.clear();
  velocity_.reserve(params_.size());
  for (const ParamRef& p : params_) velocity_.emplace_back(p.value->shape);
}

void Sgd::step() {
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    const ParamRef& p = params_[pi];
    const double wd = p.decay ? cfg_.weight_decay : 0.0;
    double* w = p.value->ptr();
    const double* g = p.grad->ptr();
    double* v = velocity_[pi].ptr();
    const double mom = cfg_.momentum, lr = cfg_.lr;
    par::parallel_for(p.value->numel(), [=](std::int64_t i) {
      v[i] = mom * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    });
  }
}

void AdamScalars::attach(std::vector<ClipRef> clips) {
  clips_ = std::move(clips);
  m_.assign(clips_.size(), 0.0);
  v_.assign(clips_.size(), 0.0);
  t_ = 0;
}

void AdamScalars::step() {
  ++t_;
  const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    const double g = *clips_[i].grad;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_[i] / b1t;
    const double vhat = v_[i] / b2t;
    double& c = clips_[i].clip->value;
    c -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    c = std::max(c, 1e-3);
  }
}

}  // namespace fxptrain
