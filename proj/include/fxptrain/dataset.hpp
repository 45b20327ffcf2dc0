#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fxptrain {

// In-memory classification dataset. Image data is CHW per sample; flat data
// (synthetic) leaves c/h/w at zero and uses dim directly.
struct Dataset {
  int n = 0;
  int c = 0, h = 0, w = 0;
  int dim = 0;  // feature width per sample (= c*h*w for images)
  int n_classes = 10;
  std::vector<float> x;          // n * dim
  std::vector<std::uint8_t> y;   // n
};

struct SyntheticSpec {
  int n_train = 2048;
  int n_test = 512;
  int dim = 64;
  int n_classes = 10;
  double noise = 0.35;
  // Fraction of train labels flipped to a random other class (test labels
  // stay clean). Mislabeled samples never converge, so their gradients keep
  // the heavy tail that makes interval adaptation matter at low bit-widths.
  double label_noise = 0.0;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// Seeded Gaussian mixture: one unit-norm center per class, isotropic noise.
DatasetPair make_synthetic_gauss(const SyntheticSpec& spec, std::uint64_t seed);

// IDX (big-endian) parsers. Image magic 0x00000803, label magic 0x00000801;
// anything else raises a format error naming the expected magic.
void read_idx_images(const std::string& path, int& n, int& rows, int& cols,
                     std::vector<std::uint8_t>& pixels);
void read_idx_labels(const std::string& path, std::vector<std::uint8_t>& labels);

// CIFAR-10 binary batches: 3073-byte records (label + 3072 CHW pixels).
void read_cifar10_bin(const std::string& path, std::vector<std::uint8_t>& labels,
                      std::vector<std::uint8_t>& pixels);

// name: synthetic-gauss | mnist-idx | cifar10-bin. root is the dataset
// directory for the file-backed formats. limit_train/limit_test (0 = all)
// truncate for desk-scale runs. Pixels are scaled to [0,1].
DatasetPair load_dataset(const std::string& name, const std::string& root,
                         std::uint64_t seed, const SyntheticSpec& synth,
                         int limit_train = 0, int limit_test = 0);

}  // namespace fxptrain
