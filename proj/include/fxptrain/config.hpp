#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fxptrain/dataset.hpp"
#include "fxptrain/model.hpp"

namespace fxptrain {

// One component of the W/A/G triple; 0 is the "fp" sentinel.
struct BitsTriple {
  int w = 4, a = 4, g = 4;
  bool operator==(const BitsTriple&) const = default;
};

// Flat key=value experiment configuration. All knobs have defaults except the
// seed, which must come from the file or the --seed flag.
struct RunConfig {
  std::string arch = "mlp";
  std::string dataset = "synthetic-gauss";
  std::string dataset_root = "data";
  BitsTriple bits{4, 4, 4};
  std::string policy = "ours";  // ours | minmax | fixed | dsgc
  double fixed_gamma = 1.0;
  double tau = 10.0;
  double beta = 1e-3;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_lr = 1e-5;
  int epochs = 1;
  int batch_size = 32;
  std::int64_t max_steps = 0;  // 0 = uncapped
  int log_every = 10;          // full-metrics cadence
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;             // default output directory
  std::vector<int> mlp_hidden = {128, 128};  // hidden widths, one ReLU layer each
  SyntheticSpec synth;
  int limit_train = 0, limit_test = 0;
  bool quantize_weight_grads = false;

  // Sweep axes (cmd_sweep); empty lists fall back to the base value.
  std::vector<std::string> sweep_policies;
  std::vector<std::string> sweep_bits;
  std::vector<double> sweep_gammas;
  std::vector<std::uint64_t> sweep_seeds;
};

// "4/4/4", "8/8/fp", or plain "fp" (all three unquantized).
BitsTriple parse_bits(const std::string& text);
std::string format_bits(const BitsTriple& bits);

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

// Throws ConfigError on any out-of-range or inconsistent setting.
void validate_config(const RunConfig& cfg, bool require_seed = true);

// Canonical snapshot: parse_config_text(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& cfg);

IntervalPolicy policy_from_config(const RunConfig& cfg);
ModelConfig model_config_from(const RunConfig& cfg, int n_classes);

}  // namespace fxptrain
