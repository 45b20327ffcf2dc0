#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fxptrain/config.hpp"
#include "fxptrain/dataset.hpp"
#include "fxptrain/model.hpp"
#include "fxptrain/optim.hpp"

namespace fxptrain {

struct TrainResult {
  double final_loss = 0.0;
  double final_train_acc = 0.0;
  double eval_acc = 0.0;
  std::int64_t steps = 0;
  int epochs_done = 0;
};

// Owns dataset, model, and optimizers for one run. Batch order, weight init,
// and every stochastic rounding draw derive from cfg.seed, so two Trainers
// with the same config produce bit-identical traces.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  // One forward/backward/update cycle. Appends per-quantized-layer rows to
  // rows (when non-null) and returns the batch loss.
  double step(const Tensor& batch, const std::vector<std::uint8_t>& labels,
              bool full_metrics, std::vector<LayerTraceRow>* rows,
              double* batch_acc = nullptr);

  // Deterministic batch of the given epoch. Returns false past the last
  // full batch (the trailing partial batch is dropped).
  bool batch_at(int epoch, int batch_index, Tensor& x,
                std::vector<std::uint8_t>& y) const;
  int batches_per_epoch() const;

  double evaluate();  // test-set top-1 accuracy, eval-mode forward

  Model& model() { return model_; }
  Sgd& sgd() { return sgd_; }
  AdamScalars& adam() { return adam_; }
  const DatasetPair& data() const { return data_; }
  std::int64_t iter() const { return iter_; }
  void set_iter(std::int64_t it) { iter_ = it; }

  // 99.9th-percentile clip calibration on the first batch of epoch 0.
  void calibrate_clips();

 private:
  RunConfig cfg_;
  DatasetPair data_;
  Model model_;
  Sgd sgd_;
  AdamScalars adam_;
  std::int64_t iter_ = 0;
};

// Full run into out_dir: config.snapshot, trace.jsonl, summary.json,
// checkpoint.bin. resume continues from out_dir's checkpoint and appends.
TrainResult run_training(const RunConfig& cfg, const std::string& out_dir,
                         bool resume = false);

}  // namespace fxptrain
