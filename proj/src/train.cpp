#include "fxptrain/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "fxptrain/checkpoint.hpp"
#include "fxptrain/errors.hpp"
#include "fxptrain/rng.hpp"
#include "fxptrain/trace.hpp"

namespace fxptrain {

namespace fs = std::filesystem;

namespace {

std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 gen(substream(seed, 0xE9, static_cast<std::uint64_t>(epoch), 0));
  std::shuffle(idx.begin(), idx.end(), gen);
  return idx;
}

bool wants_images(const std::string& arch) { return arch != "mlp"; }

}  // namespace

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      data_(load_dataset(cfg.dataset, cfg.dataset_root, cfg.seed, cfg.synth,
                         cfg.limit_train, cfg.limit_test)),
      sgd_({cfg.lr, cfg.momentum, cfg.weight_decay}),
      adam_({cfg.clip_lr, 0.9, 0.999, 1e-8}) {
  const Dataset& tr = data_.train;
  const ModelConfig mc = model_config_from(cfg_, tr.n_classes);
  if (wants_images(cfg_.arch)) {
    if (tr.c == 0) throw ConfigError(cfg_.arch + " needs an image dataset");
    model_ = build_model(cfg_.arch, tr.c, tr.h, tr.w, 0, mc, cfg_.seed);
  } else {
    model_ = build_model(cfg_.arch, 0, 0, 0, tr.dim, mc, cfg_.seed);
  }
  if (batches_per_epoch() < 1)
    throw ConfigError("batch_size exceeds the training set size");
  sgd_.attach(model_.params());
  adam_.attach(model_.clips());
}

int Trainer::batches_per_epoch() const { return data_.train.n / cfg_.batch_size; }

bool Trainer::batch_at(int epoch, int batch_index, Tensor& x,
                       std::vector<std::uint8_t>& y) const {
  const Dataset& tr = data_.train;
  const int bs = cfg_.batch_size;
  if (batch_index < 0 || batch_index >= batches_per_epoch()) return false;
  const std::vector<int> order = epoch_order(tr.n, cfg_.seed, epoch);

  const bool image = wants_images(cfg_.arch);
  x = image ? Tensor({bs, tr.c, tr.h, tr.w}) : Tensor({bs, tr.dim});
  y.resize(static_cast<std::size_t>(bs));
  for (int i = 0; i < bs; ++i) {
    const int src = order[static_cast<std::size_t>(batch_index) * bs + i];
    y[static_cast<std::size_t>(i)] = tr.y[static_cast<std::size_t>(src)];
    const float* from = tr.x.data() + static_cast<std::size_t>(src) * tr.dim;
    double* to = x.ptr() + static_cast<std::int64_t>(i) * tr.dim;
    for (int j = 0; j < tr.dim; ++j) to[j] = static_cast<double>(from[j]);
  }
  return true;
}

void Trainer::calibrate_clips() {
  Tensor x;
  std::vector<std::uint8_t> y;
  if (!batch_at(0, 0, x, y)) throw ConfigError("empty training set");
  init_clip_values(model_, x);
}

double Trainer::step(const Tensor& batch, const std::vector<std::uint8_t>& labels,
                     bool full_metrics, std::vector<LayerTraceRow>* rows,
                     double* batch_acc) {
  model_.zero_grads();

  ForwardCtx fctx;
  fctx.training = true;
  const Tensor logits = model_.forward(batch, fctx);

  Tensor loss_grad;
  const double loss = softmax_xent(logits, labels, loss_grad, batch_acc);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss at iteration " +
                                               std::to_string(iter_));

  BackwardCtx bctx;
  bctx.seed = cfg_.seed;
  bctx.iter = iter_;
  bctx.full_metrics = full_metrics;
  bctx.rows = rows;
  model_.backward(loss_grad, bctx);

  sgd_.step();
  adam_.step();
  ++iter_;
  return loss;
}

double Trainer::evaluate() {
  const Dataset& te = data_.test;
  if (te.n == 0) return 0.0;
  const bool image = wants_images(cfg_.arch);
  ForwardCtx ctx;
  ctx.training = false;
  int correct = 0;
  const int chunk = std::max(cfg_.batch_size, 1);
  for (int start = 0; start < te.n; start += chunk) {
    const int bs = std::min(chunk, te.n - start);
    Tensor x = image ? Tensor({bs, te.c, te.h, te.w}) : Tensor({bs, te.dim});
    for (int i = 0; i < bs; ++i) {
      const float* from = te.x.data() + static_cast<std::size_t>(start + i) * te.dim;
      double* to = x.ptr() + static_cast<std::int64_t>(i) * te.dim;
      for (int j = 0; j < te.dim; ++j) to[j] = static_cast<double>(from[j]);
    }
    const Tensor logits = model_.forward(x, ctx);
    const int k = logits.dim(1);
    for (int i = 0; i < bs; ++i) {
      const double* z = logits.ptr() + static_cast<std::int64_t>(i) * k;
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (z[j] > z[arg]) arg = j;
      if (arg == te.y[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / te.n;
}

TrainResult run_training(const RunConfig& cfg, const std::string& out_dir,
                         bool resume) {
  validate_config(cfg);
  fs::create_directories(out_dir);
  const std::string trace_path = (fs::path(out_dir) / "trace.jsonl").string();
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();

  if (!resume) {
    std::ofstream snap(fs::path(out_dir) / "config.snapshot");
    if (!snap) throw ConfigError("cannot write config snapshot in " + out_dir);
    snap << serialize_config(cfg);
    fs::remove(trace_path);
  }

  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(cfg);

  int start_epoch = 0;
  if (resume) {
    const ResumePoint rp =
        load_checkpoint(ckpt_path, trainer.model(), trainer.sgd(), trainer.adam());
    trainer.set_iter(rp.iter);
    start_epoch = rp.epoch;
  } else {
    trainer.calibrate_clips();
  }

  TraceWriter trace(trace_path);
  TrainResult result;
  result.final_loss = std::numeric_limits<double>::quiet_NaN();

  const int bpe = trainer.batches_per_epoch();
  // iter = epoch*bpe + batch index throughout, so a mid-epoch resume point
  // pins down exactly which batch comes next.
  const int start_bi = static_cast<int>(trainer.iter() -
                                        static_cast<std::int64_t>(start_epoch) * bpe);

  auto eval_and_checkpoint = [&](int epochs_completed) {
    const double eval_acc = trainer.evaluate();
    TraceRecord eval_rec;
    eval_rec.iter = trainer.iter();
    eval_rec.layer = "eval";
    eval_rec.acc = eval_acc;
    trace.write(eval_rec);
    result.eval_acc = eval_acc;
    result.epochs_done = epochs_completed;
    save_checkpoint(ckpt_path, trainer.model(), trainer.sgd(), trainer.adam(),
                    trainer.iter(), epochs_completed);
  };

  bool capped = false;
  for (int epoch = start_epoch; epoch < cfg.epochs && !capped; ++epoch) {
    for (int bi = (epoch == start_epoch ? start_bi : 0); bi < bpe; ++bi) {
      if (cfg.max_steps > 0 && trainer.iter() >= cfg.max_steps) {
        capped = true;
        eval_and_checkpoint(epoch);
        break;
      }
      Tensor x;
      std::vector<std::uint8_t> y;
      trainer.batch_at(epoch, bi, x, y);

      const std::int64_t it = trainer.iter();
      const bool full = (it % cfg.log_every) == 0;
      std::vector<LayerTraceRow> rows;
      double acc = 0.0;
      const double loss = trainer.step(x, y, full, &rows, &acc);

      for (const LayerTraceRow& r : rows) {
        TraceRecord rec;
        rec.iter = it;
        rec.layer = trainer.model().trainable(r.layer_id)->label;
        rec.gamma = r.gamma;
        rec.g_max = r.g_max;
        rec.r_out = r.r_out;
        if (r.full) {
          rec.t_alpha = r.rep.t_alpha;
          rec.e_entire = r.rep.e_entire;
          rec.e_large = r.rep.e_large;
          rec.r_in = r.rep.r_in;
          rec.ulg = r.rep.ulg;
        }
        trace.write(rec);
      }
      TraceRecord loss_rec;
      loss_rec.iter = it;
      loss_rec.layer = "loss";
      loss_rec.loss = loss;
      loss_rec.acc = acc;
      trace.write(loss_rec);

      result.final_loss = loss;
      result.final_train_acc = acc;
      result.steps = trainer.iter();
    }
    if (!capped) eval_and_checkpoint(epoch + 1);
  }
  trace.flush();

  const auto t1 = std::chrono::steady_clock::now();
  nlohmann::ordered_json summary;
  summary["final_loss"] = result.final_loss;
  summary["final_train_acc"] = result.final_train_acc;
  summary["eval_acc"] = result.eval_acc;
  summary["steps"] = result.steps;
  summary["epochs"] = result.epochs_done;
  summary["wall_seconds"] =
      std::chrono::duration<double>(t1 - t0).count();
  std::ofstream sum(fs::path(out_dir) / "summary.json");
  sum << summary.dump(2) << "\n";
  return result;
}

}  // namespace fxptrain
