#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "fxptrain/model.hpp"
#include "fxptrain/optim.hpp"

namespace fxptrain {

// Versioned binary dump of everything a run needs to continue bit-identically
// on the same platform: weights, BN stats, clip values, per-layer gamma,
// optimizer state, and the step/epoch counters. Layout is fixed by the model
// built from the config snapshot, so only counts are stored, not names.
void save_checkpoint(const std::string& path, Model& m, const Sgd& sgd,
                     const AdamScalars& adam, std::int64_t iter, int epoch);

struct ResumePoint {
  std::int64_t iter = 0;
  int epoch = 0;
};

ResumePoint load_checkpoint(const std::string& path, Model& m, Sgd& sgd,
                            AdamScalars& adam);

}  // namespace fxptrain
