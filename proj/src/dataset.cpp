#include "fxptrain/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fxptrain/errors.hpp"
#include "fxptrain/rng.hpp"

namespace fxptrain {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError(path + ": truncated header");
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

Dataset from_bytes(const std::vector<std::uint8_t>& pixels,
                   const std::vector<std::uint8_t>& labels, int c, int h, int w,
                   int n_classes, int limit) {
  Dataset d;
  d.c = c;
  d.h = h;
  d.w = w;
  d.dim = c * h * w;
  d.n_classes = n_classes;
  d.n = static_cast<int>(labels.size());
  if (limit > 0 && limit < d.n) d.n = limit;
  d.x.resize(static_cast<std::size_t>(d.n) * d.dim);
  d.y.assign(labels.begin(), labels.begin() + d.n);
  for (std::size_t i = 0; i < d.x.size(); ++i)
    d.x[i] = static_cast<float>(pixels[i]) / 255.0f;
  return d;
}

}  // namespace

DatasetPair make_synthetic_gauss(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.dim <= 0 || spec.n_classes <= 1 || spec.n_train <= 0 || spec.n_test <= 0)
    throw ConfigError("synthetic-gauss: bad dimensions");
  std::mt19937_64 gen(substream(seed, 0xD5, 0, 0));
  std::normal_distribution<double> nd(0.0, 1.0);

  // Unit-norm class centers.
  std::vector<double> centers(static_cast<std::size_t>(spec.n_classes) * spec.dim);
  for (int k = 0; k < spec.n_classes; ++k) {
    double norm2 = 0.0;
    for (int j = 0; j < spec.dim; ++j) {
      const double v = nd(gen);
      centers[static_cast<std::size_t>(k) * spec.dim + j] = v;
      norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (int j = 0; j < spec.dim; ++j)
      centers[static_cast<std::size_t>(k) * spec.dim + j] *= inv;
  }

  auto sample = [&](Dataset& d, int n) {
    d.n = n;
    d.dim = spec.dim;
    d.n_classes = spec.n_classes;
    d.x.resize(static_cast<std::size_t>(n) * spec.dim);
    d.y.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int k = static_cast<int>(gen() % static_cast<std::uint64_t>(spec.n_classes));
      d.y[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(k);
      for (int j = 0; j < spec.dim; ++j)
        d.x[static_cast<std::size_t>(i) * spec.dim + j] = static_cast<float>(
            centers[static_cast<std::size_t>(k) * spec.dim + j] + spec.noise * nd(gen));
    }
  };

  DatasetPair pair;
  sample(pair.train, spec.n_train);
  sample(pair.test, spec.n_test);

  if (spec.label_noise > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < spec.n_train; ++i) {
      if (u(gen) >= spec.label_noise) continue;
      const int shift =
          1 + static_cast<int>(gen() % static_cast<std::uint64_t>(spec.n_classes - 1));
      auto& y = pair.train.y[static_cast<std::size_t>(i)];
      y = static_cast<std::uint8_t>((y + shift) % spec.n_classes);
    }
  }
  return pair;
}

void read_idx_images(const std::string& path, int& n, int& rows, int& cols,
                     std::vector<std::uint8_t>& pixels) {
  std::ifstream in = open_binary(path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != 0x00000803u)
    throw DataError(path + ": expected image magic 0x00000803, got " + hex32(magic));
  n = static_cast<int>(read_be32(in, path));
  rows = static_cast<int>(read_be32(in, path));
  cols = static_cast<int>(read_be32(in, path));
  const std::size_t want = static_cast<std::size_t>(n) * rows * cols;
  pixels.resize(want);
  if (!in.read(reinterpret_cast<char*>(pixels.data()),
               static_cast<std::streamsize>(want)))
    throw DataError(path + ": truncated image data (want " + std::to_string(want) +
                    " bytes)");
}

void read_idx_labels(const std::string& path, std::vector<std::uint8_t>& labels) {
  std::ifstream in = open_binary(path);
  const std::uint32_t magic = read_be32(in, path);
  if (magic != 0x00000801u)
    throw DataError(path + ": expected label magic 0x00000801, got " + hex32(magic));
  const int n = static_cast<int>(read_be32(in, path));
  labels.resize(static_cast<std::size_t>(n));
  if (!in.read(reinterpret_cast<char*>(labels.data()), n))
    throw DataError(path + ": truncated label data (want " + std::to_string(n) +
                    " bytes)");
}

void read_cifar10_bin(const std::string& path, std::vector<std::uint8_t>& labels,
                      std::vector<std::uint8_t>& pixels) {
  std::ifstream in = open_binary(path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0);
  constexpr std::streamoff kRecord = 3073;
  if (size <= 0 || size % kRecord != 0)
    throw DataError(path + ": size " + std::to_string(size) +
                    " is not a multiple of the 3073-byte record");
  const int n = static_cast<int>(size / kRecord);
  labels.reserve(labels.size() + static_cast<std::size_t>(n));
  pixels.reserve(pixels.size() + static_cast<std::size_t>(n) * 3072);
  std::vector<std::uint8_t> rec(3073);
  for (int i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(rec.data()), 3073))
      throw DataError(path + ": truncated record " + std::to_string(i));
    labels.push_back(rec[0]);
    pixels.insert(pixels.end(), rec.begin() + 1, rec.end());
  }
}

DatasetPair load_dataset(const std::string& name, const std::string& root,
                         std::uint64_t seed, const SyntheticSpec& synth,
                         int limit_train, int limit_test) {
  namespace fs = std::filesystem;
  if (name == "synthetic-gauss") {
    DatasetPair p = make_synthetic_gauss(synth, seed);
    if (limit_train > 0 && limit_train < p.train.n) {
      p.train.n = limit_train;
      p.train.x.resize(static_cast<std::size_t>(limit_train) * p.train.dim);
      p.train.y.resize(static_cast<std::size_t>(limit_train));
    }
    if (limit_test > 0 && limit_test < p.test.n) {
      p.test.n = limit_test;
      p.test.x.resize(static_cast<std::size_t>(limit_test) * p.test.dim);
      p.test.y.resize(static_cast<std::size_t>(limit_test));
    }
    return p;
  }
  if (name == "mnist-idx") {
    const fs::path r(root);
    auto load_split = [&](const std::string& img, const std::string& lab, int limit) {
      int n = 0, rows = 0, cols = 0;
      std::vector<std::uint8_t> pixels, labels;
      read_idx_images((r / img).string(), n, rows, cols, pixels);
      read_idx_labels((r / lab).string(), labels);
      if (static_cast<int>(labels.size()) != n)
        throw DataError(root + ": image/label counts disagree");
      return from_bytes(pixels, labels, 1, rows, cols, 10, limit);
    };
    DatasetPair p;
    p.train = load_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte", limit_train);
    p.test = load_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", limit_test);
    return p;
  }
  if (name == "cifar10-bin") {
    const fs::path r(root);
    std::vector<std::uint8_t> labels, pixels;
    for (int i = 1; i <= 5; ++i)
      read_cifar10_bin((r / ("data_batch_" + std::to_string(i) + ".bin")).string(),
                       labels, pixels);
    DatasetPair p;
    p.train = from_bytes(pixels, labels, 3, 32, 32, 10, limit_train);
    labels.clear();
    pixels.clear();
    read_cifar10_bin((r / "test_batch.bin").string(), labels, pixels);
    p.test = from_bytes(pixels, labels, 3, 32, 32, 10, limit_test);
    return p;
  }
  throw ConfigError("unknown dataset: " + name);
}

}  // namespace fxptrain
